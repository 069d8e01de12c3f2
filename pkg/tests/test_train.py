import dataclasses
import json

import numpy as np
import pytest

from ucat.attack import AttackConfig
from ucat.data import SyntheticDatasetSpec, gen_data
from ucat.errors import DivergenceError, FormatError, ShapeError
from ucat.losses import LossConfig, Variant, ce_batch, combined_batch
from ucat.model import ToyContrastiveModel
from ucat.train import Optimizer, TrainConfig, TrainLog, finetune


@pytest.fixture(scope="module")
def data():
    return gen_data(SyntheticDatasetSpec(n_train=256, n_test=128, seed=1))


@pytest.fixture
def model():
    return ToyContrastiveModel.initialize(32, 8, 10, seed=1)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(schedule="step")
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)


def test_zero_learning_rate_leaves_weights_untouched(data, model):
    cfg = TrainConfig(epochs=2, learning_rate=0.0, attack=AttackConfig(0.03, 2))
    out, _ = finetune(model, data.X_train, data.y_train, cfg, LossConfig(Variant.UCAT))
    assert out.weight.tobytes() == model.weight.tobytes()
    assert out is not model


@pytest.mark.parametrize("variant", list(Variant))
def test_single_sgd_step_matches_manual_update(data, model, variant):
    X, y = data.X_train[:32], data.y_train[:32]
    attack = AttackConfig(0.03, 3, 0.01)
    loss = LossConfig(variant, lam=None if variant is not Variant.UCAT else 1e-6)
    cfg = TrainConfig(epochs=1, batch_size=32, learning_rate=0.1, attack=attack,
                      optimizer=Optimizer.SGD, seed=5)
    out, _ = finetune(model, X, y, cfg, loss)

    from ucat.attack import pgd
    order = np.random.default_rng(5).permutation(32)
    Xb, yb = X[order], y[order]
    Xa = pgd(model, Xb, yb, dataclasses.replace(attack, seed=5 * 1_000_003)).perturbed
    _, G, _ = combined_batch(model.logits(Xb), model.logits(Xa), yb, loss, per_sample=True)
    want = model.weight - 0.1 * model.grad_wrt_params(Xa, G)
    np.testing.assert_allclose(out.weight, want, rtol=0, atol=1e-15)


def test_clean_ce_term_is_added(data, model):
    X, y = data.X_train[:16], data.y_train[:16]
    cfg = TrainConfig(epochs=1, batch_size=16, learning_rate=0.1, optimizer="sgd")
    plain, _ = finetune(model, X, y, cfg, LossConfig(Variant.CE))
    doubled, _ = finetune(model, X, y, cfg, LossConfig(Variant.CE, clean_ce_weight=1.0))
    # without an attack both terms see the same inputs, so the step doubles
    np.testing.assert_allclose(doubled.weight - model.weight, 2 * (plain.weight - model.weight),
                               atol=1e-14)


def test_training_is_deterministic(data, model):
    cfg = TrainConfig(epochs=2, attack=AttackConfig(0.03, 2, random_start=True, seed=3), seed=4)
    loss = LossConfig(Variant.UCAT, lambda_beta=10, beta_convention="evidence-bound")
    a, la = finetune(model, data.X_train, data.y_train, cfg, loss, data.X_test, data.y_test)
    b, lb = finetune(model, data.X_train, data.y_train, cfg, loss, data.X_test, data.y_test)
    assert a.weight.tobytes() == b.weight.tobytes()
    assert json.dumps(la.to_records()) == json.dumps(lb.to_records())


def test_log_contents_and_roundtrip(data, model):
    cfg = TrainConfig(epochs=3, attack=AttackConfig(0.03, 2))
    out, log = finetune(model, data.X_train, data.y_train, cfg, LossConfig(Variant.PROB_KL),
                        data.X_test, data.y_test)
    assert len(log.epochs) == 3
    last = log.epochs[-1]
    for name in ("clean_acc", "robust_acc", "pu_clean", "pu_adv", "au_clean", "eu_adv"):
        assert getattr(last, name) is not None
    assert log.summary["loss_config"]["variant"] == "prob-kl"
    assert out.metadata["training"]["epsilon"] == 0.03
    back = TrainLog.from_records(json.loads(json.dumps(log.to_records())))
    assert back == log


def test_clean_training_learns(data, model):
    out, log = finetune(model, data.X_train, data.y_train, TrainConfig(epochs=10),
                        X_val=data.X_test, y_val=data.y_test)
    assert log.epochs[-1].clean_acc > 0.9
    assert log.epochs[-1].robust_acc is None


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_guard_names_batch(data, model):
    with pytest.raises(DivergenceError) as info:
        finetune(model, data.X_train, data.y_train,
                 TrainConfig(epochs=1, learning_rate=np.inf, optimizer="sgd"))
    assert info.value.batch_id == 1 and info.value.epoch == 0


def test_input_validation(data, model):
    with pytest.raises(ShapeError):
        finetune(model, data.X_train[:, :5], data.y_train)
    with pytest.raises(ShapeError):
        finetune(model, data.X_train, data.y_train[:-1])
    with pytest.raises(ValueError):
        finetune(model, data.X_train[:0], data.y_train[:0])
    with pytest.raises(ValueError):
        finetune(model, data.X_train, data.y_train + 20)


def test_log_reader_errors():
    with pytest.raises(FormatError):
        TrainLog.from_records([{"format": "other"}])
    head = {"format": "ucat-train-log", "version": "9.0", "kind": "header"}
    with pytest.raises(FormatError):
        TrainLog.from_records([head])
    head["version"] = "1.0"
    with pytest.raises(FormatError) as info:
        TrainLog.from_records([head, {"kind": "epoch", "epoch": 0, "bogus": 1}])
    assert info.value.line == 2 and info.value.field == "bogus"


def test_ce_gradient_used_for_clean_training(data, model):
    X, y = data.X_train[:8], data.y_train[:8]
    cfg = TrainConfig(epochs=1, batch_size=8, learning_rate=0.2, optimizer="sgd", seed=0)
    out, _ = finetune(model, X, y, cfg)
    order = np.random.default_rng(0).permutation(8)
    _, G = ce_batch(model.logits(X[order]), y[order], per_sample=True)
    want = model.weight - 0.2 * model.grad_wrt_params(X[order], G)
    np.testing.assert_allclose(out.weight, want, atol=1e-15)
