"""Dirichlet distributions: uncertainty measures, KL divergence and sampling.

Functions accept either :class:`DirichletParams` or a raw array of
concentrations whose last axis indexes classes; leading axes are batch axes.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import specfn
from .errors import ShapeError

__all__ = [
    "DirichletParams",
    "UncertaintyTriple",
    "aleatoric",
    "epistemic",
    "entropy",
    "predictive_entropy",
    "uncertainty",
    "kl_divergence",
    "kl_gradient",
    "sample",
]

# Rounding slack tolerated below zero before a KL value counts as an error.
KL_NEGATIVE_TOL = 1e-12


@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector(s) ``alpha``, all strictly positive and finite."""

    alpha: np.ndarray
    alpha0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        if a.ndim == 0 or a.shape[-1] < 1:
            raise ShapeError("need at least one concentration")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ValueError("concentrations must be finite and positive")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "alpha0", a.sum(axis=-1))

    @property
    def n_classes(self):
        return self.alpha.shape[-1]

    def mean(self):
        return self.alpha / self.alpha0[..., None]


class UncertaintyTriple(NamedTuple):
    """Aleatoric, epistemic and predictive uncertainty (nats for AU/PU)."""

    au: np.ndarray
    eu: np.ndarray
    pu: np.ndarray


def _alpha(params):
    if isinstance(params, DirichletParams):
        return params.alpha
    return DirichletParams(params).alpha


def _scalarize(x):
    return float(x) if np.ndim(x) == 0 else x


def aleatoric(params):
    """Expected entropy of a categorical drawn from the Dirichlet."""
    a = _alpha(params)
    a0 = a.sum(axis=-1, keepdims=True)
    d = specfn.digamma(a + 1.0) - specfn.digamma(a0 + 1.0)
    return _scalarize(-(a / a0 * d).sum(axis=-1))


def epistemic(params):
    """``C / (alpha_0 + C)``: one at zero evidence, vanishing as evidence grows."""
    a = _alpha(params)
    c = a.shape[-1]
    return _scalarize(c / (a.sum(axis=-1) + c))


def entropy(p):
    """Shannon entropy (nats) of probability vectors along the last axis."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return _scalarize(terms.sum(axis=-1))


def predictive_entropy(params):
    """Entropy of the Dirichlet mean."""
    a = _alpha(params)
    return entropy(a / a.sum(axis=-1, keepdims=True))


def uncertainty(params):
    return UncertaintyTriple(aleatoric(params), epistemic(params), predictive_entropy(params))


def _pair(a, b):
    a, b = _alpha(a), _alpha(b)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"class counts differ: {a.shape[-1]} vs {b.shape[-1]}")
    return np.broadcast_arrays(a, b)


def kl_divergence(a, b):
    """``KL(Dir(a) || Dir(b))``.

    Written as a sum of gamma-function Bregman divergences, which keeps the
    value accurate when both concentration vectors are huge and close.
    Small negative values from rounding are returned as zero; anything
    clearly negative raises ``ArithmeticError``.
    """
    a, b = _pair(a, b)
    a0, b0 = a.sum(axis=-1), b.sum(axis=-1)
    per_class = specfn.lgamma_bregman(b, a)
    total = specfn.lgamma_bregman(b0, a0)
    kl = np.sum(per_class, axis=-1) - total
    # rounding in the difference scales with the size of the terms
    slack = KL_NEGATIVE_TOL + 64 * np.finfo(float).eps * (np.sum(per_class, axis=-1) + total)
    if np.any(kl < -slack):
        raise ArithmeticError(f"negative KL divergence {np.min(kl):.3e}")
    return _scalarize(np.maximum(kl, 0.0))


def kl_gradient(a, b):
    """Gradient of ``KL(Dir(a) || Dir(b))`` with respect to ``a``."""
    a, b = _pair(a, b)
    a0, b0 = a.sum(axis=-1, keepdims=True), b.sum(axis=-1, keepdims=True)
    return (a - b) * specfn.trigamma(a) - (a0 - b0) * specfn.trigamma(a0)


def sample(params, n, seed=None):
    """Draw ``n`` probability vectors from a single Dirichlet.

    Uses normalised gamma variates so that tiny concentrations stay usable.
    """
    a = _alpha(params)
    if a.ndim != 1:
        raise ShapeError("sample expects a single concentration vector")
    rng = np.random.default_rng(seed)
    g = rng.standard_gamma(a, size=(int(n), a.size))
    return g / g.sum(axis=1, keepdims=True)
