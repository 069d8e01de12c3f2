"""Evaluation metrics and the per-model evaluation report."""
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from .dirichlet import entropy, uncertainty
from .errors import FormatError, ShapeError, UndefinedMetricError
from .evidence import EvidenceProfile, concentrations, probabilities

__all__ = [
    "Condition",
    "PredictionRecord",
    "RecordBatch",
    "records_from_logits",
    "accuracy",
    "count_ties",
    "ece",
    "auroc",
    "harmonic_mean",
    "EvalReport",
    "evaluate",
    "OrderingVerdict",
    "uncertainty_ordering",
    "REPORT_FORMAT",
    "REPORT_VERSION",
]

REPORT_FORMAT = "ucat-eval-report"
REPORT_VERSION = "1.0"


class Condition(str, Enum):
    CLEAN = "clean"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class PredictionRecord:
    probs: np.ndarray
    label: int
    au: float
    eu: float
    pu: float
    condition: Condition = Condition.CLEAN

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
            raise ValueError("probs must be a probability vector")
        if not 0 <= self.label < p.size:
            raise ValueError("label out of range")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "condition", Condition(self.condition))


@dataclass
class RecordBatch:
    """Column-oriented collection of prediction records."""

    probs: np.ndarray
    labels: np.ndarray
    au: np.ndarray
    eu: np.ndarray
    pu: np.ndarray
    condition: Condition = Condition.CLEAN

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            raise ValueError("no records")
        return cls(np.stack([r.probs for r in records]),
                   np.array([r.label for r in records]),
                   np.array([r.au for r in records], dtype=float),
                   np.array([r.eu for r in records], dtype=float),
                   np.array([r.pu for r in records], dtype=float),
                   records[0].condition)

    def __len__(self):
        return self.labels.shape[0]

    def correct(self):
        return _correct(self.probs, self.labels)


def records_from_logits(logits, labels, profile, condition=Condition.CLEAN):
    """Build records: predictions from softmax, AU/EU from the evidence map."""
    logits = np.atleast_2d(logits)
    triple = uncertainty(concentrations(logits, profile))
    p = probabilities(logits)
    return RecordBatch(p, np.asarray(labels, dtype=int), np.atleast_1d(triple.au),
                       np.atleast_1d(triple.eu), np.atleast_1d(entropy(p)), Condition(condition))


def _as_batch(records):
    if isinstance(records, RecordBatch):
        if len(records) == 0:
            raise ValueError("no records")
        return records
    return RecordBatch.from_records(records)


def _ties(probs):
    top = probs.max(axis=1, keepdims=True)
    return (probs == top).sum(axis=1) > 1


def _correct(probs, labels):
    return (np.argmax(probs, axis=1) == labels) & ~_ties(probs)


def accuracy(records):
    """Top-1 accuracy; rows whose maximum is shared count as wrong."""
    b = _as_batch(records)
    return float(np.mean(b.correct()))


def count_ties(records):
    """Number of rows whose top probability is attained by several classes."""
    return int(np.sum(_ties(_as_batch(records).probs)))


def ece(records, n_bins=15):
    """Expected calibration error with equal-width confidence bins.

    Bin ``b`` holds confidences in ``(b/n, (b+1)/n]``; the first bin also
    takes confidence 0.
    """
    if int(n_bins) < 1:
        raise ValueError("n_bins must be at least 1")
    b = _as_batch(records)
    conf = b.probs.max(axis=1)
    correct = b.correct().astype(float)
    edges = np.linspace(0.0, 1.0, int(n_bins) + 1)
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, int(n_bins) - 1)
    total = 0.0
    for k in range(int(n_bins)):
        mask = idx == k
        if mask.any():
            total += mask.sum() * abs(correct[mask].mean() - conf[mask].mean())
    return float(total / conf.size)


def auroc(scores, positives):
    """Area under the ROC curve, ties counted as one half.

    ``positives`` flags the positive class (misclassified samples when
    scoring uncertainty).  Raises :class:`UndefinedMetricError` unless both
    classes are present.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    pos = np.asarray(positives, dtype=bool).reshape(-1)
    if s.shape != pos.shape:
        raise ShapeError("scores and positives differ in length")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both positive and negative samples")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _auroc_or_none(scores, positives):
    try:
        return auroc(scores, positives)
    except UndefinedMetricError:
        return None


def harmonic_mean(clean, robust):
    if clean < 0 or robust < 0:
        raise ValueError("accuracies must be non-negative")
    if clean == 0 or robust == 0:
        return 0.0
    return 2.0 * clean * robust / (clean + robust)


def _condition_summary(batch):
    correct = batch.correct()
    wrong = ~correct
    return {
        "accuracy": float(np.mean(correct)),
        "ties": int(np.sum(_ties(batch.probs))),
        "ece": ece(batch),
        "au_auroc": _auroc_or_none(batch.au, wrong),
        "eu_auroc": _auroc_or_none(batch.eu, wrong),
        "mean_pu": float(np.mean(batch.pu)),
        "mean_au": float(np.mean(batch.au)),
        "mean_eu": float(np.mean(batch.eu)),
        "mean_pu_correct": float(np.mean(batch.pu[correct])) if correct.any() else None,
    }


@dataclass
class EvalReport:
    """Clean and per-attack metrics for one model.

    The scalar ``*_adv`` fields and the AUROCs refer to ``primary_attack``
    (the first attack evaluated); ``per_attack`` holds every attack.
    """

    clean_acc: float
    robust_acc: dict
    ece_clean: float
    ece_adv: float
    au_auroc: float
    eu_auroc: float
    mean_pu_clean: float
    mean_pu_adv: float
    harmonic_means: dict
    primary_attack: str = ""
    clean: dict = field(default_factory=dict)
    per_attack: dict = field(default_factory=dict)
    attacks: dict = field(default_factory=dict)
    n_samples: int = 0
    label: str = ""
    model_metadata: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"format": REPORT_FORMAT, "version": REPORT_VERSION}
        d.update(self.__dict__)
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != REPORT_FORMAT:
            raise FormatError(f"not an evaluation report: format={d.get('format')!r}", field="format")
        if str(d.get("version", "")).split(".")[0] != REPORT_VERSION.split(".")[0]:
            raise FormatError(f"unsupported report version {d.get('version')!r}", field="version")
        body = {k: v for k, v in d.items() if k not in ("format", "version")}
        try:
            return cls(**body)
        except TypeError as exc:
            raise FormatError(f"bad report fields: {exc}") from None


def evaluate(model, X, y, attacks, profile=None, label=""):
    """Evaluate ``model`` on clean inputs and under each attack.

    Parameters
    ----------
    attacks : dict
        Maps a name to an :class:`~ucat.attack.AttackConfig`.  Order matters:
        the first entry is the primary attack.
    profile : EvidenceProfile, optional
        Evidence map for AU/EU; defaults to ``tau_prime = model.tau``.
    """
    from .attack import pgd

    if profile is None:
        profile = EvidenceProfile(tau=model.tau, tau_prime=model.tau)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    clean = records_from_logits(model.logits(X), y, profile, Condition.CLEAN)
    clean_summary = _condition_summary(clean)
    per_attack, robust, hms = {}, {}, {}
    for name, cfg in attacks.items():
        adv = pgd(model, X, y, cfg)
        batch = records_from_logits(model.logits(adv.perturbed), y, profile, Condition.ADVERSARIAL)
        summary = _condition_summary(batch)
        summary["invalid"] = int(np.sum(~adv.valid))
        summary["harmonic_mean"] = harmonic_mean(clean_summary["accuracy"], summary["accuracy"])
        per_attack[name] = summary
        robust[name] = summary["accuracy"]
        hms[name] = summary["harmonic_mean"]
    primary = next(iter(attacks), "")
    first = per_attack.get(primary, {})
    return EvalReport(
        clean_acc=clean_summary["accuracy"],
        robust_acc=robust,
        ece_clean=clean_summary["ece"],
        ece_adv=first.get("ece"),
        au_auroc=first.get("au_auroc"),
        eu_auroc=first.get("eu_auroc"),
        mean_pu_clean=clean_summary["mean_pu"],
        mean_pu_adv=first.get("mean_pu"),
        harmonic_means=hms,
        primary_attack=primary,
        clean=clean_summary,
        per_attack=per_attack,
        attacks={name: cfg.to_dict() for name, cfg in attacks.items()},
        n_samples=int(y.size),
        label=label,
        model_metadata=dict(getattr(model, "metadata", {})),
    )


class OrderingVerdict(NamedTuple):
    pu_base_clean: float
    pu_tuned_clean: float
    pu_tuned_adv: float
    holds: bool

    @classmethod
    def from_means(cls, base_clean, tuned_clean, tuned_adv):
        values = (base_clean, tuned_clean, tuned_adv)
        holds = None not in values and base_clean < tuned_clean < tuned_adv
        return cls(base_clean, tuned_clean, tuned_adv, bool(holds))


def uncertainty_ordering(base, tuned, attack=None, correct_only=False):
    """Check ``PU(base, clean) < PU(tuned, clean) < PU(tuned, adversarial)``.

    ``base`` and ``tuned`` are :class:`EvalReport` objects computed on the
    same split.  ``attack`` defaults to the tuned report's primary attack;
    ``correct_only`` averages PU over correctly classified samples only.
    """
    attack = attack or tuned.primary_attack
    key = "mean_pu_correct" if correct_only else "mean_pu"
    return OrderingVerdict.from_means(base.clean[key], tuned.clean[key],
                                      tuned.per_attack[attack][key])
