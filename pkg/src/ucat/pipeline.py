"""End-to-end desk-scale benchmark: data, pretraining, fine-tuning, evaluation."""
from dataclasses import asdict, dataclass, field

import numpy as np

from .attack import AttackConfig, Objective
from .data import SyntheticDatasetSpec, gen_data
from .evidence import EvidenceProfile
from .losses import BetaConvention, LossConfig, Variant
from .metrics import evaluate, uncertainty_ordering
from .model import ToyContrastiveModel
from .train import TrainConfig, finetune

__all__ = ["BenchmarkConfig", "BenchmarkRun", "run_benchmark", "directional_checks"]


@dataclass(frozen=True)
class BenchmarkConfig:
    """Defaults for the synthetic benchmark.

    Training-time PGD uses ``train_steps`` steps of ``2.5 * epsilon /
    train_steps`` without random start; evaluation uses ``eval_steps`` steps
    of size ``epsilon`` with a random start.  The Dirichlet regulariser
    weight is ``ucat_lambda_beta / beta`` under ``beta_convention``.
    """

    n_classes: int = 10
    input_dim: int = 32
    n_train: int = 2000
    n_test: int = 500
    class_separation: float = 1.0
    noise_sigma: float = 0.2
    embed_dim: int = 8
    tau: float = 0.07
    tau_prime: float = 0.07
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    epsilon: float = 0.03
    train_steps: int = 10
    train_step_size: float = None
    eval_steps: int = 100
    ucat_lambda_beta: float = 10.0
    beta_convention: str = BetaConvention.EVIDENCE_BOUND.value
    prob_kl_lambda: float = 1.0
    variants: tuple = ("ce", "ucat")
    lambda_beta_grid: tuple = ()

    @property
    def step_size(self):
        if self.train_step_size is not None:
            return self.train_step_size
        return 2.5 * self.epsilon / max(self.train_steps, 1)

    def data_spec(self, seed):
        return SyntheticDatasetSpec(self.n_classes, self.input_dim, self.n_train, self.n_test,
                                    self.class_separation, self.noise_sigma, seed)

    def evidence(self):
        return EvidenceProfile(self.tau, self.tau_prime)

    def loss_config(self, variant, lambda_beta=None):
        variant = Variant(variant)
        if variant is Variant.UCAT:
            return LossConfig(variant, evidence=self.evidence(),
                              lambda_beta=self.ucat_lambda_beta if lambda_beta is None else lambda_beta,
                              beta_convention=self.beta_convention)
        if variant is Variant.PROB_KL:
            return LossConfig(variant, lam=self.prob_kl_lambda, evidence=self.evidence())
        return LossConfig(variant, evidence=self.evidence())

    def eval_attacks(self, attack_seed):
        common = dict(epsilon=self.epsilon, steps=self.eval_steps, step_size=self.epsilon,
                      random_start=True, seed=attack_seed)
        # logit gaps never exceed 2 / tau, so this kappa leaves the margin unclamped
        return {
            f"pgd{self.eval_steps}": AttackConfig(objective=Objective.CE, **common),
            f"margin{self.eval_steps}": AttackConfig(objective=Objective.MARGIN,
                                                     kappa=2.0 / self.tau, **common),
        }

    def to_dict(self):
        d = asdict(self)
        d["variants"] = list(self.variants)
        d["lambda_beta_grid"] = list(self.lambda_beta_grid)
        d["train_step_size"] = self.step_size
        return d


@dataclass
class BenchmarkRun:
    seeds: dict
    dataset: object
    models: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)


def run_benchmark(config=BenchmarkConfig(), data_seed=0, model_seed=None, attack_seed=None,
                  progress=None):
    """Pretrain on clean data, fine-tune each variant, evaluate everything.

    Model and attack seeds default to the data seed.  Returns a
    :class:`BenchmarkRun` whose reports are keyed ``pretrained``, the
    variant names and ``ucat@<lambda_beta>`` for sweep entries.
    """
    model_seed = data_seed if model_seed is None else model_seed
    attack_seed = data_seed if attack_seed is None else attack_seed
    say = progress or (lambda msg: None)
    data = gen_data(config.data_spec(data_seed))
    run = BenchmarkRun({"data": data_seed, "model": model_seed, "attack": attack_seed}, data)
    base = ToyContrastiveModel.initialize(config.input_dim, config.embed_dim, config.n_classes,
                                          tau=config.tau, seed=model_seed)
    base.metadata["data_seed"] = data_seed
    common = dict(epochs=config.epochs, batch_size=config.batch_size,
                  learning_rate=config.learning_rate, momentum=config.momentum, seed=model_seed)
    attacks = config.eval_attacks(attack_seed)
    profile = config.evidence()

    say("pretraining")
    pre, log = finetune(base, data.X_train, data.y_train, TrainConfig(**common),
                        config.loss_config(Variant.CE), data.X_test, data.y_test)
    run.models["pretrained"], run.logs["pretrained"] = pre, log
    run.reports["pretrained"] = evaluate(pre, data.X_test, data.y_test, attacks, profile, "pretrained")

    train_attack = AttackConfig(config.epsilon, config.train_steps, config.step_size,
                                random_start=False, seed=attack_seed)
    jobs = [(v, config.loss_config(v)) for v in config.variants]
    jobs += [(f"ucat@{lb:g}", config.loss_config(Variant.UCAT, lb)) for lb in config.lambda_beta_grid]
    for name, loss in jobs:
        say(f"fine-tuning {name}")
        model, log = finetune(pre, data.X_train, data.y_train,
                              TrainConfig(attack=train_attack, **common), loss,
                              data.X_test, data.y_test)
        run.models[name], run.logs[name] = model, log
        run.reports[name] = evaluate(model, data.X_test, data.y_test, attacks, profile, name)
    return run


def directional_checks(runs, ucat="ucat", ce="ce", base="pretrained"):
    """Tally the four seed-level directional comparisons over several runs.

    Returns a dict of ``{name: {"passed", "count", "required", "per_seed", "detail"}}``.
    """
    per = {"robust_gain": [], "harmonic_mean": [], "pu_ordering": [], "ece_adv": []}
    for run in runs:
        r_base, r_ucat, r_ce = run.reports[base], run.reports[ucat], run.reports[ce]
        attack = r_ucat.primary_attack
        gain = r_ucat.robust_acc[attack] - r_base.robust_acc[attack]
        per["robust_gain"].append((gain >= 0.20, gain))
        per["harmonic_mean"].append((r_ucat.harmonic_means[attack] >= r_ce.harmonic_means[attack],
                                     r_ucat.harmonic_means[attack] - r_ce.harmonic_means[attack]))
        v = uncertainty_ordering(r_base, r_ucat)
        per["pu_ordering"].append((v.holds, tuple(v[:3])))
        per["ece_adv"].append((r_ucat.ece_adv <= r_ce.ece_adv, r_ucat.ece_adv - r_ce.ece_adv))
    n = len(runs)
    required = {"robust_gain": n, "harmonic_mean": int(np.ceil(0.8 * n)),
                "pu_ordering": int(np.ceil(0.8 * n)), "ece_adv": int(np.ceil(0.6 * n))}
    out = {}
    for key, rows in per.items():
        count = sum(ok for ok, _ in rows)
        out[key] = {
            "passed": count >= required[key],
            "count": count,
            "required": required[key],
            "per_seed": [[bool(ok), val] for ok, val in rows],
            "detail": f"{count}/{n} seeds, need {required[key]}",
        }
    return out
