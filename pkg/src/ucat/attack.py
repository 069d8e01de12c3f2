"""Projected gradient ascent in an l-infinity ball (sign-gradient PGD)."""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .losses import LossConfig, Variant, ce_batch, combined_batch, margin_batch
from .model import Sample

__all__ = ["Objective", "AttackConfig", "AdversarialExample", "objective_values", "pgd"]


class Objective(str, Enum):
    CE = "ce"
    UCAT = "ucat"
    MARGIN = "margin"


@dataclass(frozen=True)
class AttackConfig:
    """PGD settings.

    ``step_size`` defaults to ``epsilon``.  ``loss`` configures the combined
    objective used when ``objective`` is ``UCAT``; ``kappa`` is the margin
    floor for ``MARGIN``.
    """

    epsilon: float
    steps: int = 10
    step_size: float = None
    objective: Objective = Objective.CE
    random_start: bool = False
    seed: int = 0
    kappa: float = 0.0
    loss: LossConfig = field(default_factory=lambda: LossConfig(Variant.UCAT))

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.step_size is None:
            object.__setattr__(self, "step_size", float(self.epsilon))
        if self.epsilon < 0 or self.step_size < 0:
            raise ValueError("epsilon and step_size must be non-negative")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps must be a non-negative integer")
        object.__setattr__(self, "steps", int(self.steps))
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    def to_dict(self):
        d = {
            "epsilon": self.epsilon,
            "steps": self.steps,
            "step_size": self.step_size,
            "objective": self.objective.value,
            "random_start": self.random_start,
            "seed": self.seed,
        }
        if self.objective is Objective.MARGIN:
            d["kappa"] = self.kappa
        if self.objective is Objective.UCAT:
            d["loss"] = self.loss.to_dict()
        return d


@dataclass
class AdversarialExample:
    """Result of an attack on one input or a batch.

    ``loss_trace[t]`` is the objective at iterate ``t`` (the start point is
    ``t = 0``), so it has ``steps + 1`` entries.  Rows that hit a degenerate
    embedding stop early, are flagged in ``valid`` and keep their last good
    iterate; their remaining trace entries are NaN.
    """

    perturbed: np.ndarray
    delta_linf: np.ndarray
    loss_trace: np.ndarray
    valid: np.ndarray
    iterates: list = None
    message: str = ""


def objective_values(model, X, y, config, clean_logits=None):
    """Per-row objective and its gradient with respect to the logits."""
    logits = model.logits(X)
    if config.objective is Objective.CE:
        return ce_batch(logits, y, per_sample=True)
    if config.objective is Objective.MARGIN:
        return margin_batch(logits, y, config.kappa, per_sample=True)
    vals, grad, _ = combined_batch(clean_logits, logits, y, config.loss, per_sample=True)
    return vals, grad


def pgd(model, x, y=None, config=None, record_iterates=False):
    """Run PGD from ``x`` (one input, a batch, or a :class:`Sample`).

    Each step moves by ``step_size * sign(grad)`` (zero where the gradient
    is exactly zero), projects back into the epsilon ball around the clean
    input and then clips to ``[0, 1]``.
    """
    if isinstance(x, Sample):
        x, y = x.input, x.label
    if config is None:
        raise ValueError("an AttackConfig is required")
    X0 = np.asarray(x, dtype=float)
    single = X0.ndim == 1
    X0 = np.atleast_2d(X0)
    y = np.asarray(y, dtype=int).reshape(-1)
    if y.shape[0] != X0.shape[0]:
        raise ValueError("one label per input required")

    eps = config.epsilon
    lo = np.clip(X0 - eps, 0.0, 1.0)
    hi = np.clip(X0 + eps, 0.0, 1.0)
    X = X0.copy()
    if config.random_start:
        rng = np.random.default_rng(config.seed)
        X = np.clip(X0 + rng.uniform(-eps, eps, size=X0.shape), lo, hi)

    n = X0.shape[0]
    valid = ~model.degenerate(X)
    messages = []
    if not valid.all():
        messages.append(f"degenerate embedding at start for rows {np.flatnonzero(~valid).tolist()}")
    clean_logits = None
    if config.objective is Objective.UCAT:
        clean_logits = np.zeros((n, model.n_classes))
        ok = ~model.degenerate(X0)
        clean_logits[ok] = model.logits(X0[ok])
        valid &= ok

    trace = np.full((config.steps + 1, n), np.nan)
    iterates = [X.copy()] if record_iterates else None

    def _eval(rows):
        cl = clean_logits[rows] if clean_logits is not None else None
        return objective_values(model, X[rows], y[rows], config, cl)

    for t in range(config.steps):
        rows = np.flatnonzero(valid)
        if rows.size == 0:
            break
        vals, G = _eval(rows)
        trace[t, rows] = vals
        g = model.input_gradient(X[rows], G)
        step = X[rows] + config.step_size * np.sign(g)
        step = np.clip(step, lo[rows], hi[rows])
        bad = model.degenerate(step)
        if bad.any():
            messages.append(f"degenerate embedding at step {t + 1} for rows {rows[bad].tolist()}")
            valid[rows[bad]] = False
        X[rows[~bad]] = step[~bad]
        if record_iterates:
            iterates.append(X.copy())

    rows = np.flatnonzero(valid)
    if rows.size:
        trace[config.steps, rows] = _eval(rows)[0]

    delta = np.max(np.abs(X - X0), axis=1)
    if single:
        return AdversarialExample(X[0], float(delta[0]), trace[:, 0], bool(valid[0]),
                                  [it[0] for it in iterates] if record_iterates else None,
                                  "; ".join(messages))
    return AdversarialExample(X, delta, trace, valid, iterates, "; ".join(messages))
