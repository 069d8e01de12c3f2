"""Map similarity logits to Dirichlet concentrations.

A logit ``l`` produced at temperature ``tau`` from a cosine similarity is
turned into a log-concentration ``h = (tau * l + 1) / tau_prime`` and then
into a concentration.  In linear mode ``alpha = exp(h)``, so every
concentration lies in ``[1, exp(2 / tau_prime)]`` and the Dirichlet mean is
``softmax((tau / tau_prime) * l)``.
"""
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Union

import numpy as np
from scipy.special import expit, softmax

from .dirichlet import DirichletParams, UncertaintyTriple, entropy, uncertainty
from .errors import EvidenceRangeError, ShapeError

__all__ = [
    "Stabilization",
    "LogitVector",
    "EvidenceProfile",
    "MeasurementProfile",
    "MAX_LOG_EVIDENCE",
    "log_evidence",
    "concentrations",
    "concentration_jacobian",
    "evidence_map",
    "predictive_mean",
    "probabilities",
    "measure",
    "check_lemma2_equivalence",
    "SweepPoint",
    "scale_sweep_entropy",
]

# Keeps alpha and alpha_0 comfortably inside float64 range.
MAX_LOG_EVIDENCE = np.log(np.finfo(float).max) / 2

_COSINE_SLACK = 1e-12


class Stabilization(str, Enum):
    LINEAR = "linear"
    SOFTPLUS = "softplus"


@dataclass(frozen=True)
class LogitVector:
    """Logits over ``C`` classes, optionally batched along leading axes.

    When ``cosine_origin`` is set, ``tau * values`` are cosines and must lie
    in ``[-1, 1]`` (up to a tiny slack that is clipped away).
    """

    values: np.ndarray
    tau: float
    cosine_origin: bool = True

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 0 or v.shape[-1] < 1:
            raise ShapeError("logits need at least one class")
        if not np.all(np.isfinite(v)):
            raise ValueError("logits must be finite")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.cosine_origin:
            cos = self.tau * v
            if np.any(np.abs(cos) > 1 + _COSINE_SLACK):
                raise ValueError("tau * logits outside [-1, 1] for cosine-origin logits")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_cosines(cls, cosines, tau):
        cos = np.asarray(cosines, dtype=float)
        return cls(np.clip(cos, -1.0, 1.0) / tau, tau, cosine_origin=True)

    @property
    def n_classes(self):
        return self.values.shape[-1]

    def cosines(self):
        cos = self.tau * self.values
        return np.clip(cos, -1.0, 1.0) if self.cosine_origin else cos


@dataclass(frozen=True)
class EvidenceProfile:
    """Parameters of the logit-to-concentration map.

    Parameters
    ----------
    tau : float
        Temperature that produced the logits.
    tau_prime : float
        Calibration coefficient; ``exp(2 / tau_prime)`` is the largest
        concentration in linear mode.
    stabilization : Stabilization
        ``LINEAR`` uses ``exp(h)``.  ``SOFTPLUS`` uses ``exp(softplus(h))``,
        or the bare ``softplus(h)`` when ``raw_softplus`` is set.
    """

    tau: float = 0.07
    tau_prime: float = 0.07
    stabilization: Stabilization = Stabilization.LINEAR
    raw_softplus: bool = False

    def __post_init__(self):
        if not (self.tau > 0 and self.tau_prime > 0):
            raise ValueError("tau and tau_prime must be positive")
        object.__setattr__(self, "stabilization", Stabilization(self.stabilization))
        if self.raw_softplus and self.stabilization is not Stabilization.SOFTPLUS:
            raise ValueError("raw_softplus only applies to softplus stabilization")

    @property
    def scale(self):
        """``s = tau / tau_prime``."""
        return self.tau / self.tau_prime

    @property
    def alpha_max(self):
        """Largest concentration reachable in linear mode."""
        return float(np.exp(2.0 / self.tau_prime))


@dataclass(frozen=True)
class MeasurementProfile:
    """Per-measure calibration coefficients used when analysing logits.

    ``tau_for_au`` and ``tau_for_eu`` replace ``tau_prime`` in the evidence
    map when computing aleatoric and epistemic uncertainty respectively.
    """

    tau_for_au: float = 0.01
    tau_for_eu: float = 0.07

    def __post_init__(self):
        if not (self.tau_for_au > 0 and self.tau_for_eu > 0):
            raise ValueError("measurement temperatures must be positive")


def _values(logits, profile):
    if isinstance(logits, LogitVector):
        if not np.isclose(logits.tau, profile.tau, rtol=1e-12, atol=0):
            raise ValueError(f"logit tau {logits.tau} differs from profile tau {profile.tau}")
        return logits.cosines()
    return profile.tau * np.asarray(logits, dtype=float)


def log_evidence(logits, profile):
    """``h = (tau * l + 1) / tau_prime`` with the overflow guard applied."""
    cos = _values(logits, profile)
    h = (cos + 1.0) / profile.tau_prime
    if np.any(h > MAX_LOG_EVIDENCE):
        raise EvidenceRangeError(
            f"log-evidence {np.max(h):.4g} exceeds {MAX_LOG_EVIDENCE:.4g}; "
            "use softplus stabilization or a larger tau_prime")
    return h


def _softplus(h):
    return np.logaddexp(0.0, h)


def concentrations(logits, profile):
    """Dirichlet concentrations as a plain array (same shape as the logits)."""
    h = log_evidence(logits, profile)
    if profile.stabilization is Stabilization.LINEAR:
        return np.exp(h)
    sp = _softplus(h)
    return sp if profile.raw_softplus else np.exp(sp)


def concentration_jacobian(logits, profile):
    """Elementwise ``d alpha_k / d l_k``; the map acts per class."""
    h = log_evidence(logits, profile)
    s = profile.scale
    if profile.stabilization is Stabilization.LINEAR:
        return s * np.exp(h)
    if profile.raw_softplus:
        return s * expit(h)
    return s * np.exp(_softplus(h)) * expit(h)


def evidence_map(logits, profile):
    """Return :class:`DirichletParams` for the given logits."""
    return DirichletParams(concentrations(logits, profile))


def predictive_mean(logits, profile):
    """Dirichlet mean ``alpha / alpha_0``.

    In linear mode this is evaluated as ``softmax(s * l)``, which avoids
    forming the concentrations at all.
    """
    if profile.stabilization is Stabilization.LINEAR:
        h = log_evidence(logits, profile)
        return softmax(h, axis=-1)
    alpha = concentrations(logits, profile)
    return alpha / alpha.sum(axis=-1, keepdims=True)


def probabilities(logits):
    """Plain softmax of the logits (the classifier's own prediction)."""
    v = logits.values if isinstance(logits, LogitVector) else np.asarray(logits, dtype=float)
    return softmax(v, axis=-1)


def measure(logits, measurement=MeasurementProfile(), stabilization=Stabilization.LINEAR):
    """Uncertainty triple for logits using per-measure temperatures.

    AU and EU come from evidence maps with ``tau_prime`` set to
    ``measurement.tau_for_au`` and ``measurement.tau_for_eu``.  PU is the
    entropy of the plain softmax prediction and therefore does not depend on
    either temperature.
    """
    if not isinstance(logits, LogitVector):
        raise TypeError("measure expects a LogitVector")
    au_prof = EvidenceProfile(logits.tau, measurement.tau_for_au, stabilization)
    eu_prof = EvidenceProfile(logits.tau, measurement.tau_for_eu, stabilization)
    au = uncertainty(concentrations(logits, au_prof)).au
    eu = uncertainty(concentrations(logits, eu_prof)).eu
    p = probabilities(logits)
    return UncertaintyTriple(au=au, eu=eu, pu=entropy(p))


def check_lemma2_equivalence(logits, profile):
    """Largest gap between ``alpha / alpha_0`` and ``softmax(s * l)``.

    The concentrations are formed explicitly (no shared softmax code path),
    so this is a genuine cross-check of the linear evidence map.
    """
    if profile.stabilization is not Stabilization.LINEAR:
        raise ValueError("the softmax identity only holds in linear mode")
    alpha = concentrations(logits, profile)
    mean = alpha / alpha.sum(axis=-1, keepdims=True)
    v = logits.values if isinstance(logits, LogitVector) else np.asarray(logits, dtype=float)
    return float(np.max(np.abs(mean - softmax(profile.scale * v, axis=-1))))


class SweepPoint(NamedTuple):
    s: float
    argmax: Union[int, str]
    entropy: float


def scale_sweep_entropy(logits, s_values):
    """Argmax and entropy of ``softmax(s * l)`` for each scale ``s``.

    ``argmax`` is the string ``"tied"`` when the maximum logit is not unique.
    """
    v = logits.values if isinstance(logits, LogitVector) else np.asarray(logits, dtype=float)
    if v.ndim != 1:
        raise ShapeError("scale_sweep_entropy expects a single logit vector")
    top = np.flatnonzero(v == v.max())
    arg = int(top[0]) if top.size == 1 else "tied"
    out = []
    for s in s_values:
        if s <= 0:
            raise ValueError("scales must be positive")
        p = softmax(s * v)
        out.append(SweepPoint(float(s), arg if arg == "tied" else int(np.argmax(p)), entropy(p)))
    return out
