"""Cosine-similarity classifier used as a stand-in for a contrastive model.

The encoder is linear, ``f = W (x - c)``, followed by L2 normalisation.
Class prototypes are fixed unit vectors and logits are cosines divided by
``tau``.  Only ``W`` is trainable, mirroring fine-tuning an image encoder
against frozen text embeddings.

Any object exposing ``logits(X)``, ``input_gradient(X, upstream)`` and
``degenerate(X)`` can be attacked; :class:`LinearSurrogate` is the simplest such object.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEmbeddingError, FormatError, ShapeError
from .evidence import LogitVector

__all__ = ["Sample", "ToyContrastiveModel", "LinearSurrogate", "MODEL_FORMAT", "MODEL_VERSION"]

MODEL_FORMAT = "ucat-model"
MODEL_VERSION = "1.0"

# Embeddings shorter than this have no usable direction.
MIN_EMBEDDING_NORM = 1e-12


@dataclass(frozen=True)
class Sample:
    input: np.ndarray
    label: int

    def __post_init__(self):
        x = np.array(self.input, dtype=float)
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("inputs must lie in [0, 1]")
        object.__setattr__(self, "input", x)
        object.__setattr__(self, "label", int(self.label))


def _unit_rows(a):
    return a / np.linalg.norm(a, axis=1, keepdims=True)


@dataclass
class ToyContrastiveModel:
    """Linear encoder + cosine head.

    Parameters
    ----------
    weight : ndarray of shape (d, m)
        Encoder matrix.
    prototypes : ndarray of shape (C, d)
        Unit-norm class prototypes, never updated by training.
    tau : float
        Logit temperature.
    center : float
        Constant subtracted from every input coordinate before encoding.
    metadata : dict
        Free-form provenance (seeds, training variant, ...), saved with the
        checkpoint.
    """

    weight: np.ndarray
    prototypes: np.ndarray
    tau: float = 0.07
    center: float = 0.5
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=float)
        self.prototypes = np.array(self.prototypes, dtype=float)
        if self.weight.ndim != 2 or self.prototypes.ndim != 2:
            raise ShapeError("weight and prototypes must be 2-D")
        if self.prototypes.shape[1] != self.weight.shape[0]:
            raise ShapeError(
                f"prototype dim {self.prototypes.shape[1]} != embedding dim {self.weight.shape[0]}")
        norms = np.linalg.norm(self.prototypes, axis=1)
        if not np.allclose(norms, 1.0, rtol=0, atol=1e-9):
            raise ValueError("prototypes must have unit norm")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def initialize(cls, input_dim, embed_dim, n_classes, tau=0.07, seed=0, center=0.5):
        """Random encoder and prototypes from a single seed."""
        rng = np.random.default_rng(seed)
        weight = rng.normal(size=(embed_dim, input_dim)) / np.sqrt(input_dim)
        prototypes = _unit_rows(rng.normal(size=(n_classes, embed_dim)))
        return cls(weight, prototypes, tau=tau, center=center,
                   metadata={"model_seed": int(seed)})

    @property
    def input_dim(self):
        return self.weight.shape[1]

    @property
    def embed_dim(self):
        return self.weight.shape[0]

    @property
    def n_classes(self):
        return self.prototypes.shape[0]

    def copy(self):
        return ToyContrastiveModel(self.weight.copy(), self.prototypes.copy(), self.tau,
                                   self.center, dict(self.metadata))

    # -- forward / backward ------------------------------------------------

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.ndim != 2 or X2.shape[1] != self.input_dim:
            raise ShapeError(f"expected inputs with {self.input_dim} features, got shape {X.shape}")
        return X2, single

    def embed(self, X, allow_degenerate=False):
        """Return ``(V, norms, Xc)``: unit embeddings, pre-norm lengths, centred input.

        Rows whose embedding is degenerate get ``V = 0`` when
        ``allow_degenerate`` is set, otherwise an error is raised.
        """
        X2, _ = self._check_input(X)
        Xc = X2 - self.center
        F = Xc @ self.weight.T
        norms = np.linalg.norm(F, axis=1)
        bad = norms < MIN_EMBEDDING_NORM
        if np.any(bad) and not allow_degenerate:
            raise DegenerateEmbeddingError(
                f"embedding norm below {MIN_EMBEDDING_NORM:g} for rows {np.flatnonzero(bad).tolist()}")
        safe = np.where(bad, 1.0, norms)
        V = np.where(bad[:, None], 0.0, F / safe[:, None])
        return V, norms, Xc

    def logits(self, X, allow_degenerate=False):
        """Logits as an ``(n, C)`` array (or ``(C,)`` for a single input)."""
        _, single = self._check_input(X)
        V, _, _ = self.embed(X, allow_degenerate)
        out = np.clip(V @ self.prototypes.T, -1.0, 1.0) / self.tau
        return out[0] if single else out

    def forward(self, x):
        return LogitVector(self.logits(x), self.tau, cosine_origin=True)

    def _embedding_grad(self, X, upstream):
        X2, single = self._check_input(X)
        G = np.atleast_2d(np.asarray(upstream, dtype=float))
        if G.shape != (X2.shape[0], self.n_classes):
            raise ShapeError(f"upstream gradient shape {G.shape} != {(X2.shape[0], self.n_classes)}")
        V, norms, Xc = self.embed(X2)
        dV = G @ self.prototypes / self.tau
        dF = (dV - V * np.sum(dV * V, axis=1, keepdims=True)) / norms[:, None]
        return dF, Xc, single

    def input_gradient(self, X, upstream):
        """Vector-Jacobian product of the logits with respect to the inputs."""
        dF, _, single = self._embedding_grad(X, upstream)
        dX = dF @ self.weight
        return dX[0] if single else dX

    def grad_wrt_input(self, x, upstream):
        return self.input_gradient(x, upstream)

    def grad_wrt_params(self, x, upstream):
        """Gradient of ``sum(upstream * logits)`` with respect to ``weight``.

        For a batch this is the mean of the per-sample gradients.
        """
        dF, Xc, _ = self._embedding_grad(x, upstream)
        return dF.T @ Xc / Xc.shape[0]

    def degenerate(self, X):
        """Boolean mask of inputs whose embedding has no direction."""
        _, norms, _ = self.embed(X, allow_degenerate=True)
        return norms < MIN_EMBEDDING_NORM

    def predict(self, X):
        return np.argmax(self.logits(X), axis=-1)

    # -- serialisation -----------------------------------------------------

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "tau": float(self.tau),
            "center": float(self.center),
            "weight": self.weight.tolist(),
            "prototypes": self.prototypes.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise FormatError(f"not a model checkpoint: format={d.get('format')!r}", field="format")
        version = str(d.get("version", ""))
        if version.split(".")[0] != MODEL_VERSION.split(".")[0]:
            raise FormatError(f"unsupported checkpoint version {version!r}", field="version")
        try:
            return cls(np.array(d["weight"], dtype=float), np.array(d["prototypes"], dtype=float),
                       tau=float(d["tau"]), center=float(d["center"]),
                       metadata=dict(d.get("metadata", {})))
        except KeyError as exc:
            raise FormatError("missing checkpoint field", field=exc.args[0]) from None


@dataclass
class LinearSurrogate:
    """Affine logits ``A x + b``; exact worst cases are easy to enumerate."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)

    @property
    def n_classes(self):
        return self.A.shape[0]

    def logits(self, X, allow_degenerate=False):
        return np.asarray(X, dtype=float) @ self.A.T + self.b

    def input_gradient(self, X, upstream):
        return np.asarray(upstream, dtype=float) @ self.A

    def degenerate(self, X):
        return np.zeros(np.atleast_2d(X).shape[0], dtype=bool)
