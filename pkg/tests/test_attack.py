import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import corner_max
from ucat.attack import AttackConfig, Objective, objective_values, pgd
from ucat.data import SyntheticDatasetSpec, gen_data
from ucat.losses import LossConfig, Variant, ce_batch
from ucat.model import LinearSurrogate, Sample, ToyContrastiveModel
from ucat.train import TrainConfig, finetune


@pytest.fixture(scope="module")
def trained():
    data = gen_data(SyntheticDatasetSpec(n_train=1000, n_test=500, seed=0))
    model = ToyContrastiveModel.initialize(32, 8, 10, seed=0)
    model, _ = finetune(model, data.X_train, data.y_train, TrainConfig(epochs=10))
    return model, data


def random_model(seed):
    return ToyContrastiveModel.initialize(16, 4, 5, seed=seed)


def test_config_defaults_and_validation():
    cfg = AttackConfig(0.03)
    assert cfg.step_size == 0.03 and cfg.random_start is False
    with pytest.raises(ValueError):
        AttackConfig(-0.1)
    with pytest.raises(ValueError):
        AttackConfig(0.1, steps=-1)
    with pytest.raises(ValueError):
        AttackConfig(0.1, steps=2.5)
    assert AttackConfig(0.1, objective="margin", kappa=2.0).to_dict()["kappa"] == 2.0


def test_zero_epsilon_returns_input():
    x = np.random.default_rng(0).uniform(size=16)
    adv = pgd(random_model(0), x, 1, AttackConfig(0.0, steps=5, step_size=0.1, random_start=True))
    np.testing.assert_array_equal(adv.perturbed, x)
    assert adv.delta_linf == 0.0


def test_zero_steps_is_identity():
    X = np.random.default_rng(1).uniform(size=(4, 16))
    adv = pgd(random_model(0), X, [0, 1, 2, 3], AttackConfig(0.1, steps=0))
    assert adv.perturbed.tobytes() == X.tobytes()
    assert adv.loss_trace.shape == (1, 4)


def test_single_step_matches_manual_update():
    model = random_model(2)
    rng = np.random.default_rng(2)
    x, y = rng.uniform(size=16), 3
    cfg = AttackConfig(0.05, steps=1, step_size=0.02)
    _, G = ce_batch(model.logits(x)[None], [y], per_sample=True)
    g = model.grad_wrt_input(x, G[0])
    want = np.clip(np.clip(x + 0.02 * np.sign(g), x - 0.05, x + 0.05), 0, 1)
    np.testing.assert_array_equal(pgd(model, Sample(x, y), config=cfg).perturbed, want)


def test_sign_of_zero_gradient_is_zero():
    # the second input coordinate has no influence on the logits
    s = LinearSurrogate(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2))
    adv = pgd(s, np.array([0.5, 0.5]), 0, AttackConfig(0.1, steps=3))
    assert adv.perturbed[1] == 0.5
    assert adv.perturbed[0] == pytest.approx(0.4)


@given(st.integers(0, 10_000), st.floats(0.0, 0.3), st.floats(0.001, 0.2), st.integers(0, 6),
       st.booleans(), st.sampled_from(list(Objective)))
def test_budget_and_box_on_every_iterate(seed, eps, step, steps, rs, obj):
    model = random_model(seed % 7)
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(3, 16))
    X[0, :4] = [0.0, 1.0, 0.0, 1.0]
    cfg = AttackConfig(eps, steps, step, obj, rs, seed, kappa=1.0,
                       loss=LossConfig(Variant.UCAT, lam=1e-6))
    adv = pgd(model, X, rng.integers(0, 5, 3), cfg, record_iterates=True)
    for it in adv.iterates:
        assert np.all(np.abs(it - X) <= eps + 1e-12)
        assert np.all((it >= 0) & (it <= 1))
    assert np.all(adv.delta_linf <= eps + 1e-12)
    assert adv.loss_trace.shape == (steps + 1, 3)


def test_many_random_attacks_respect_budget():
    model = ToyContrastiveModel.initialize(32, 8, 10, seed=3)
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(1000, 32))
    adv = pgd(model, X, rng.integers(0, 10, 1000), AttackConfig(0.05, 5, 0.02, random_start=True))
    assert np.all(adv.delta_linf <= 0.05 + 1e-12)
    assert np.all((adv.perturbed >= 0) & (adv.perturbed <= 1))


def test_determinism():
    model = random_model(5)
    X = np.random.default_rng(5).uniform(size=(6, 16))
    cfg = AttackConfig(0.1, 7, 0.03, random_start=True, seed=11)
    a = pgd(model, X, np.arange(6) % 5, cfg)
    b = pgd(model, X, np.arange(6) % 5, cfg)
    assert a.perturbed.tobytes() == b.perturbed.tobytes()
    np.testing.assert_array_equal(a.loss_trace, b.loss_trace)
    c = pgd(model, X, np.arange(6) % 5, AttackConfig(0.1, 7, 0.03, random_start=True, seed=12))
    assert c.perturbed.tobytes() != a.perturbed.tobytes()


@pytest.mark.parametrize("seed", range(5))
def test_linear_surrogate_reaches_corner_optimum(seed):
    rng = np.random.default_rng(seed)
    m = 8
    s = LinearSurrogate(rng.normal(size=(2, m)), rng.normal(size=2))
    x, y, eps = rng.uniform(size=m), int(rng.integers(0, 2)), 0.1
    adv = pgd(s, x, y, AttackConfig(eps, 10, eps / 4))
    best = corner_max(lambda z: ce_batch(s.logits(z)[None], [y])[0], x, eps)
    assert ce_batch(s.logits(adv.perturbed)[None], [y])[0] >= best - 1e-6


def test_degenerate_iterate_is_flagged():
    model = ToyContrastiveModel(np.eye(1, 2), np.array([[1.0]]), center=0.5)
    # the first row starts exactly at the centre, so it has no embedding direction
    bad = pgd(model, np.array([[0.5, 0.3], [0.7, 0.3]]), [0, 0], AttackConfig(0.1, 2))
    assert not bad.valid[0] and bad.valid[1]
    assert "degenerate" in bad.message
    assert np.isnan(bad.loss_trace[:, 0]).all()


def test_ucat_objective_needs_nothing_extra():
    model = random_model(1)
    X = np.random.default_rng(1).uniform(size=(2, 16))
    cfg = AttackConfig(0.05, 3, objective=Objective.UCAT, loss=LossConfig(Variant.UCAT, lam=1e-6))
    adv = pgd(model, X, [0, 1], cfg)
    assert np.all(np.isfinite(adv.loss_trace))
    vals, _ = objective_values(model, X, np.array([0, 1]), cfg, model.logits(X))
    np.testing.assert_allclose(vals, adv.loss_trace[0])


def test_pgd_requires_config_and_labels():
    with pytest.raises(ValueError):
        pgd(random_model(0), np.zeros(16), 0)
    with pytest.raises(ValueError):
        pgd(random_model(0), np.zeros((2, 16)), [0], AttackConfig(0.1))


def test_larger_budget_is_not_weaker(trained):
    model, data = trained
    X, y = data.X_test, data.y_test
    accs = []
    for eps in (0.02, 0.04):
        adv = pgd(model, X, y, AttackConfig(eps, 20, eps / 4, random_start=True, seed=0))
        accs.append(np.mean(model.predict(adv.perturbed) == y))
    assert accs[0] >= accs[1]


def test_margin_attack_with_unclamped_kappa_is_effective(trained):
    model, data = trained
    X, y = data.X_test[:200], data.y_test[:200]
    clean = np.mean(model.predict(X) == y)
    adv = pgd(model, X, y, AttackConfig(0.05, 50, 0.05, "margin", True, 0, kappa=2 / model.tau))
    assert np.mean(model.predict(adv.perturbed) == y) < clean - 0.2
