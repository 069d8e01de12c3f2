"""Fine-tuning objectives and their gradients with respect to logits.

Every batched loss returns the mean over samples together with the gradient
of that mean with respect to the adversarial logits.  Clean logits act as
fixed targets and receive no gradient.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import log_softmax, logsumexp

from . import dirichlet
from .errors import ShapeError
from .evidence import EvidenceProfile, LogitVector, concentration_jacobian, concentrations

__all__ = [
    "Variant",
    "BetaConvention",
    "beta",
    "LossConfig",
    "loss_ce",
    "loss_prob_kl",
    "loss_ucr",
    "margin_loss",
    "ce_batch",
    "prob_kl_batch",
    "ucr_batch",
    "margin_batch",
    "combined_batch",
    "total_loss",
]


class Variant(str, Enum):
    CE = "ce"
    PROB_KL = "prob-kl"
    UCAT = "ucat"


class BetaConvention(str, Enum):
    """How the loss weight normaliser ``beta`` depends on ``tau_prime``.

    ``LITERAL`` is ``2 / exp(tau_prime)``.  ``EVIDENCE_BOUND`` is the largest
    concentration the evidence map can produce, ``exp(2 / tau_prime)``.
    """

    LITERAL = "literal"
    EVIDENCE_BOUND = "evidence-bound"


def beta(tau_prime, convention=BetaConvention.LITERAL):
    convention = BetaConvention(convention)
    if convention is BetaConvention.LITERAL:
        return 2.0 / np.exp(tau_prime)
    return float(np.exp(2.0 / tau_prime))


@dataclass(frozen=True)
class LossConfig:
    """Which objective to optimise and how strongly to regularise.

    ``lam`` is the effective multiplier on the regulariser.  When omitted it
    defaults to ``lambda_beta / beta`` for the Dirichlet variant, 1 for the
    probability-KL variant and 0 for plain CE.  ``clean_ce_weight`` adds a
    cross-entropy term on clean inputs (off by default).
    """

    variant: Variant = Variant.UCAT
    lam: float = None
    evidence: EvidenceProfile = field(default_factory=EvidenceProfile)
    lambda_beta: float = 1e5
    beta_convention: BetaConvention = BetaConvention.LITERAL
    clean_ce_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "beta_convention", BetaConvention(self.beta_convention))
        b = beta(self.evidence.tau_prime, self.beta_convention)
        if self.lam is None:
            lam = {Variant.CE: 0.0, Variant.PROB_KL: 1.0,
                   Variant.UCAT: self.lambda_beta / b}[self.variant]
            object.__setattr__(self, "lam", float(lam))
        else:
            object.__setattr__(self, "lam", float(self.lam))
            object.__setattr__(self, "lambda_beta", self.lam * b)
        if self.lam < 0 or self.clean_ce_weight < 0:
            raise ValueError("loss weights must be non-negative")

    @property
    def beta(self):
        return beta(self.evidence.tau_prime, self.beta_convention)

    def to_dict(self):
        return {
            "variant": self.variant.value,
            "lambda": self.lam,
            "lambda_beta": self.lambda_beta,
            "beta": self.beta,
            "beta_convention": self.beta_convention.value,
            "tau": self.evidence.tau,
            "tau_prime": self.evidence.tau_prime,
            "stabilization": self.evidence.stabilization.value,
            "raw_softplus": self.evidence.raw_softplus,
            "clean_ce_weight": self.clean_ce_weight,
        }


def _arr(logits):
    return logits.values if isinstance(logits, LogitVector) else np.asarray(logits, dtype=float)


def _check_pair(adv, clean):
    if adv.shape != clean.shape:
        raise ShapeError(f"adversarial {adv.shape} and clean {clean.shape} logits differ in shape")


def _labels(labels, logits):
    y = np.asarray(labels, dtype=int).reshape(-1)
    if y.shape[0] != logits.shape[0]:
        raise ShapeError("one label per row required")
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise ValueError("label out of range")
    return y


# -- batched losses ---------------------------------------------------------
#
# Each returns (mean value, gradient of the mean w.r.t. adversarial logits),
# or with per_sample=True the per-row values and per-row gradients.

def _reduce(vals, grad, per_sample):
    if per_sample:
        return vals, grad
    return float(np.mean(vals)), grad / vals.shape[0]


def ce_batch(adv, labels, per_sample=False):
    adv = np.atleast_2d(adv)
    y = _labels(labels, adv)
    rows = np.arange(adv.shape[0])
    logp = log_softmax(adv, axis=1)
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    return _reduce(-logp[rows, y], grad, per_sample)


def prob_kl_batch(adv, clean, per_sample=False):
    """``KL(softmax(adv) || softmax(clean))`` per row."""
    adv, clean = np.atleast_2d(adv), np.atleast_2d(clean)
    _check_pair(adv, clean)
    lpa = log_softmax(adv, axis=1)
    lpc = log_softmax(clean, axis=1)
    pa = np.exp(lpa)
    kl = np.maximum(np.sum(pa * (lpa - lpc), axis=1), 0.0)
    grad = pa * (lpa - lpc - kl[:, None])
    return _reduce(kl, grad, per_sample)


def ucr_batch(adv, clean, profile, per_sample=False):
    """Dirichlet KL between adversarial and clean evidence, per row."""
    adv, clean = np.atleast_2d(adv), np.atleast_2d(clean)
    _check_pair(adv, clean)
    a = concentrations(adv, profile)
    b = concentrations(clean, profile)
    kl = np.atleast_1d(dirichlet.kl_divergence(a, b))
    grad = dirichlet.kl_gradient(a, b) * concentration_jacobian(adv, profile)
    return _reduce(kl, grad, per_sample)


def margin_batch(logits, labels, kappa=0.0, per_sample=False):
    """Margin ``max(max_{j != y} l_j - l_y, -kappa)`` per row."""
    logits = np.atleast_2d(logits)
    if logits.shape[1] < 2:
        raise ShapeError("margin needs at least two classes")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    y = _labels(labels, logits)
    rows = np.arange(logits.shape[0])
    others = logits.copy()
    others[rows, y] = -np.inf
    j = np.argmax(others, axis=1)
    raw = others[rows, j] - logits[rows, y]
    active = raw > -kappa
    grad = np.zeros_like(logits)
    grad[rows[active], j[active]] = 1.0
    grad[rows[active], y[active]] = -1.0
    return _reduce(np.maximum(raw, -kappa), grad, per_sample)


def combined_batch(clean, adv, labels, config, per_sample=False):
    """CE plus the variant's weighted regulariser; returns values, grads and parts."""
    clean, adv = np.atleast_2d(clean), np.atleast_2d(adv)
    _check_pair(adv, clean)
    ce, grad = ce_batch(adv, labels, per_sample=True)
    reg = np.zeros_like(ce)
    if config.variant is Variant.PROB_KL:
        reg, g = prob_kl_batch(adv, clean, per_sample=True)
    elif config.variant is Variant.UCAT:
        reg, g = ucr_batch(adv, clean, config.evidence, per_sample=True)
    vals = ce
    if config.variant is not Variant.CE and config.lam != 0:
        vals = ce + config.lam * reg
        grad = grad + config.lam * g
    value, grad = _reduce(vals, grad, per_sample)
    parts = {"ce": ce if per_sample else float(np.mean(ce)),
             "reg": reg if per_sample else float(np.mean(reg))}
    return value, grad, parts


# -- single-sample conveniences --------------------------------------------

def loss_ce(logits, label):
    v = _arr(logits)
    return float(logsumexp(v) - v[int(label)])


def loss_prob_kl(logits_adv, logits_clean):
    return prob_kl_batch(_arr(logits_adv), _arr(logits_clean))[0]


def loss_ucr(logits_adv, logits_clean, profile):
    for lv in (logits_adv, logits_clean):
        if isinstance(lv, LogitVector) and not np.isclose(lv.tau, profile.tau, rtol=1e-12, atol=0):
            raise ValueError("logit temperature does not match the evidence profile")
    a = concentrations(logits_adv, profile)
    b = concentrations(logits_clean, profile)
    return dirichlet.kl_divergence(a, b)


def margin_loss(logits, label, kappa=0.0):
    return margin_batch(_arr(logits)[None, :], [label], kappa)[0]


def total_loss(clean_logits, adv_logits, labels, config, return_parts=False):
    """Variant-selected objective averaged over the batch.

    Returns ``(value, grad)`` where ``grad`` is with respect to the
    adversarial logits; with ``return_parts`` a dict of the CE and
    regulariser means is appended.
    """
    value, grad, parts = combined_batch(_arr(clean_logits), _arr(adv_logits), labels, config)
    if return_parts:
        return value, grad, parts
    return value, grad
