"""Dirichlet evidence calibration for adversarially fine-tuned cosine classifiers."""
from .attack import AdversarialExample, AttackConfig, Objective, pgd
from .data import Dataset, SyntheticDatasetSpec, gen_data
from .dirichlet import (DirichletParams, UncertaintyTriple, aleatoric, epistemic,
                        kl_divergence, kl_gradient, predictive_entropy, sample, uncertainty)
from .errors import (DegenerateEmbeddingError, DivergenceError, DomainError, EvidenceRangeError,
                     FormatError, ShapeError, UndefinedMetricError)
from .estimator import ContrastiveClassifier, DirichletUncertainty
from .evidence import (EvidenceProfile, LogitVector, MeasurementProfile, Stabilization,
                       check_lemma2_equivalence, concentrations, evidence_map, measure,
                       predictive_mean, scale_sweep_entropy)
from .losses import LossConfig, Variant, loss_ce, loss_prob_kl, loss_ucr, margin_loss, total_loss
from .metrics import (EvalReport, PredictionRecord, accuracy, auroc, ece, evaluate,
                      harmonic_mean, uncertainty_ordering)
from .model import LinearSurrogate, Sample, ToyContrastiveModel
from .pipeline import BenchmarkConfig, directional_checks, run_benchmark
from .train import TrainConfig, TrainLog, finetune

__version__ = "0.1.0"
