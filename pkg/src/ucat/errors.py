"""Exception types raised across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class EvidenceRangeError(OverflowError):
    """Log-concentration too large to exponentiate safely."""


class ShapeError(ValueError):
    """Array shapes or class counts disagree."""


class DegenerateEmbeddingError(ValueError):
    """Encoder output has (near) zero norm, so the embedding direction is undefined."""


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, batch_id=None, epoch=None):
        super().__init__(message)
        self.batch_id = batch_id
        self.epoch = epoch


class UndefinedMetricError(ValueError):
    """Metric is undefined for the given input (e.g. AUROC with a single class)."""


class FormatError(ValueError):
    """Malformed or unsupported file contents.

    ``line`` and ``field`` point at the offending location when known.
    """

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field
