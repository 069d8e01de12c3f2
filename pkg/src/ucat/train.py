"""Adversarial fine-tuning of :class:`~ucat.model.ToyContrastiveModel`."""
import dataclasses
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .attack import AttackConfig, pgd
from .errors import DivergenceError, FormatError, ShapeError
from .losses import LossConfig, Variant, ce_batch, combined_batch
from .metrics import records_from_logits

__all__ = ["Optimizer", "TrainConfig", "EpochRecord", "TrainLog", "finetune", "LOG_FORMAT", "LOG_VERSION"]

LOG_FORMAT = "ucat-train-log"
LOG_VERSION = "1.0"


class Optimizer(str, Enum):
    SGD = "sgd"
    SGD_MOMENTUM = "sgd-momentum"


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    ``attack`` generates the training-time adversarial inputs; ``None``
    trains on clean inputs only.  The learning rate follows a cosine decay
    over all steps unless ``schedule`` is ``"constant"``.
    """

    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    attack: AttackConfig = None
    seed: int = 0
    optimizer: Optimizer = Optimizer.SGD_MOMENTUM
    momentum: float = 0.9
    schedule: str = "cosine"

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "attack": self.attack.to_dict() if self.attack else None,
            "seed": self.seed,
            "optimizer": self.optimizer.value,
            "momentum": self.momentum,
            "schedule": self.schedule,
        }


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    loss: float
    loss_ce: float
    loss_reg: float
    clean_acc: float = None
    robust_acc: float = None
    pu_clean: float = None
    au_clean: float = None
    eu_clean: float = None
    pu_adv: float = None
    au_adv: float = None
    eu_adv: float = None


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_records(self):
        """Header, one record per epoch, then the summary."""
        out = [{"format": LOG_FORMAT, "version": LOG_VERSION, "kind": "header"}]
        out += [dict(kind="epoch", **dataclasses.asdict(r)) for r in self.epochs]
        out.append({"kind": "summary", **self.summary})
        return out

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records or records[0].get("format") != LOG_FORMAT:
            raise FormatError("not a training log", line=1, field="format")
        if str(records[0].get("version", "")).split(".")[0] != LOG_VERSION.split(".")[0]:
            raise FormatError("unsupported training log version", line=1, field="version")
        log = cls()
        names = {f.name for f in dataclasses.fields(EpochRecord)}
        for i, rec in enumerate(records[1:], start=2):
            kind = rec.get("kind")
            body = {k: v for k, v in rec.items() if k != "kind"}
            if kind == "epoch":
                unknown = set(body) - names
                if unknown:
                    raise FormatError("unknown epoch field", line=i, field=sorted(unknown)[0])
                log.epochs.append(EpochRecord(**body))
            elif kind == "summary":
                log.summary = body
            else:
                raise FormatError(f"unknown record kind {kind!r}", line=i, field="kind")
        return log


def _lr_at(config, step, total):
    if config.schedule == "constant" or total <= 1:
        return config.learning_rate
    return config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / total))


def _attack_for_step(attack, step):
    # fresh random starts per step while staying reproducible
    return dataclasses.replace(attack, seed=int(attack.seed) * 1_000_003 + step)


def _heldout_stats(model, X, y, attack, profile):
    clean = records_from_logits(model.logits(X), y, profile)
    stats = {
        "clean_acc": float(np.mean(clean.correct())),
        "pu_clean": float(np.mean(clean.pu)),
        "au_clean": float(np.mean(clean.au)),
        "eu_clean": float(np.mean(clean.eu)),
    }
    if attack is not None:
        adv = pgd(model, X, y, attack).perturbed
        rec = records_from_logits(model.logits(adv), y, profile)
        stats.update(robust_acc=float(np.mean(rec.correct())), pu_adv=float(np.mean(rec.pu)),
                     au_adv=float(np.mean(rec.au)), eu_adv=float(np.mean(rec.eu)))
    return stats


def finetune(model, X, y, train_config=TrainConfig(), loss_config=LossConfig(Variant.CE),
             X_val=None, y_val=None):
    """Train a copy of ``model`` and return ``(trained_model, TrainLog)``.

    Adversarial inputs are regenerated against the current weights at every
    step.  Clean logits are recomputed with the current weights too and enter
    the regulariser as constants.  A non-finite loss raises
    :class:`~ucat.errors.DivergenceError`.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if X.shape[0] != y.shape[0]:
        raise ShapeError("X and y differ in length")
    if X.shape[1] != model.input_dim:
        raise ShapeError(f"model expects {model.input_dim} features, data has {X.shape[1]}")
    if np.any(y < 0) or np.any(y >= model.n_classes):
        raise ValueError("labels outside the model's classes")

    cfg = train_config
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    velocity = np.zeros_like(model.weight)
    n = X.shape[0]
    n_batches = -(-n // cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    profile = loss_config.evidence
    log = TrainLog()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        lr = cfg.learning_rate
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            Xa = Xb
            if cfg.attack is not None:
                Xa = pgd(model, Xb, yb, _attack_for_step(cfg.attack, step)).perturbed
            clean_logits = model.logits(Xb)
            adv_logits = model.logits(Xa)
            vals, G, parts = combined_batch(clean_logits, adv_logits, yb, loss_config, per_sample=True)
            value = float(np.mean(vals))
            grad = model.grad_wrt_params(Xa, G)
            if loss_config.clean_ce_weight > 0:
                ce_clean, Gc = ce_batch(clean_logits, yb, per_sample=True)
                value += loss_config.clean_ce_weight * float(np.mean(ce_clean))
                grad = grad + loss_config.clean_ce_weight * model.grad_wrt_params(Xb, Gc)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}",
                                      batch_id=b, epoch=epoch)
            lr = _lr_at(cfg, step, total_steps)
            if cfg.optimizer is Optimizer.SGD_MOMENTUM:
                velocity = cfg.momentum * velocity + grad
                model.weight = model.weight - lr * velocity
            else:
                model.weight = model.weight - lr * grad
            sums += len(idx) * np.array([value, np.mean(parts["ce"]), np.mean(parts["reg"])])
            step += 1
        rec = EpochRecord(epoch=epoch, learning_rate=float(lr), loss=float(sums[0] / n),
                          loss_ce=float(sums[1] / n), loss_reg=float(sums[2] / n))
        if X_val is not None:
            for k, v in _heldout_stats(model, X_val, y_val, cfg.attack, profile).items():
                setattr(rec, k, v)
        log.epochs.append(rec)

    log.summary = {
        "steps": step,
        "train_config": cfg.to_dict(),
        "loss_config": loss_config.to_dict(),
        "final": dataclasses.asdict(log.epochs[-1]),
    }
    model.metadata = dict(model.metadata, training=dict(
        loss_config.to_dict(),
        epsilon=cfg.attack.epsilon if cfg.attack else 0.0,
        attack_steps=cfg.attack.steps if cfg.attack else 0,
        seed=cfg.seed,
    ))
    return model, log
