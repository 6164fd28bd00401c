import logging

import numpy as np
import pytest
from smtalign.domain import TARGETS, encode_matrix, target_vector
from smtalign.synthetic_line import GeneratorConfig, generate_dataset
from smtalign.svr import (
    DimensionError, SvrConfig, SvrFitError, SvrModel, dual_objective, fit_svr, kkt_violation,
    predict_svr, primal_objective,
)


@pytest.fixture
def line():
    features = np.array([[0.0], [1.0], [2.0], [3.0]])
    return features, 2.0 * features[:, 0]


@pytest.fixture
def noisy():
    rng = np.random.default_rng(12)
    features = rng.uniform(-2, 2, size=(8, 1))
    targets = 1.5 * features[:, 0] + 0.3 + rng.normal(0, 0.4, size=8)
    return features, targets


def test_constant_target():
    """Test dat een constante doelwaarde een vlak model oplevert."""
    features = np.random.default_rng(1).uniform(0, 10, size=(6, 3))
    model = fit_svr(features, np.full(6, 2.5))
    assert model.weight == (0.0, 0.0, 0.0)
    assert model.bias == pytest.approx(2.5)
    assert model.converged


def test_fits_a_line(line):
    features, targets = line
    model = fit_svr(features, targets, SvrConfig(epsilon=0.1, c_penalty=1000.0))
    assert 1.9 <= model.weight[0] <= 2.1
    assert model.predict(np.array([1.5])) == pytest.approx(3.0, abs=0.2)


def test_solution_satisfies_constraints(noisy):
    features, targets = noisy
    config = SvrConfig(epsilon=0.1, c_penalty=1.0, kkt_tolerance=1e-4)
    model = fit_svr(features, targets, config)
    beta = np.array(model.dual_coeffs)
    assert model.converged
    assert np.all(np.abs(beta) <= config.c_penalty)
    assert abs(beta.sum()) < 1e-9
    assert np.allclose(model.weight, features.T @ beta)
    assert kkt_violation(model, features, targets) <= config.kkt_tolerance


def test_primal_no_worse_than_grid(noisy):
    features, targets = noisy
    config = SvrConfig(epsilon=0.1, c_penalty=1.0, kkt_tolerance=1e-4)
    model = fit_svr(features, targets, config)
    fitted = primal_objective(model.weight, model.bias, features, targets, config)

    w_grid, b_grid = np.meshgrid(np.linspace(-3, 3, 301), np.linspace(-3, 3, 301))
    residuals = targets[None, None, :] - (w_grid[..., None] * features[:, 0] + b_grid[..., None])
    slacks = np.maximum(np.abs(residuals) - config.epsilon, 0.0).sum(axis=-1)
    grid_best = float((0.5 * w_grid ** 2 + config.c_penalty * slacks).min())
    assert fitted <= grid_best + 1e-2


def test_duality_gap_is_small(noisy):
    features, targets = noisy
    config = SvrConfig(epsilon=0.1, c_penalty=1.0, kkt_tolerance=1e-4)
    model = fit_svr(features, targets, config)
    dual = dual_objective(np.array(model.dual_coeffs), features, targets, config.epsilon)
    primal = primal_objective(model.weight, model.bias, features, targets, config)
    assert dual <= primal + 1e-9
    assert primal - dual < 1e-2


def test_dual_objective_never_decreases(noisy):
    features, targets = noisy
    model = fit_svr(features, targets, SvrConfig(kkt_tolerance=1e-5))
    history = model.dual_history
    assert history[0] == 0.0
    assert all(later >= earlier - 1e-9 for earlier, later in zip(history, history[1:]))


def test_pass_limit_logs_warning(caplog):
    rng = np.random.default_rng(5)
    features = rng.uniform(-10, 10, size=(400, 4))
    targets = features @ np.array([1.0, -2.0, 0.5, 3.0]) + rng.normal(0, 5, size=400)
    with caplog.at_level(logging.WARNING, logger="smtalign.svr"):
        model = fit_svr(features, targets, SvrConfig(kkt_tolerance=1e-9, max_passes=1))
    assert not model.converged
    assert model.passes == 1
    assert "KKT violation" in caplog.text


def test_converges_on_generated_placements():
    """Een fit op gegenereerde, ongeschaalde plaatsingsdata haalt de KKT-tolerantie."""
    records = generate_dataset(GeneratorConfig(records_per_type=60).with_seed(42))
    features = encode_matrix(records)
    for target in TARGETS:
        targets = target_vector(records, target)
        model = fit_svr(features, targets)
        assert model.converged
        assert kkt_violation(model, features, targets) <= SvrConfig().kkt_tolerance
        assert abs(sum(model.dual_coeffs)) < 1e-6


def test_predict_bias_only():
    model = SvrModel(dual_coeffs=(), bias=5.0, weight=(0.0,) * 22, training_dim=22)
    assert predict_svr(model, np.zeros(22)) == 5.0


def test_predict_inner_product():
    weight = (1.0, -1.0) + (0.0,) * 20
    x = np.zeros(22)
    x[:2] = (3.0, 1.0)
    model = SvrModel(dual_coeffs=(), bias=0.0, weight=weight, training_dim=22)
    assert model.predict(x) == 2.0
    assert list(model.predict_many(np.vstack([x, x]))) == [2.0, 2.0]


def test_predict_wrong_dimension():
    model = SvrModel(dual_coeffs=(), bias=0.0, weight=(0.0,) * 22, training_dim=22)
    with pytest.raises(DimensionError):
        model.predict(np.zeros(21))
    with pytest.raises(DimensionError):
        model.predict_many(np.zeros((2, 23)))


def test_fit_input_errors():
    with pytest.raises(SvrFitError):
        fit_svr(np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(DimensionError):
        fit_svr(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(SvrFitError):
        fit_svr(np.array([[0.0], [np.nan]]), np.zeros(2))


@pytest.mark.parametrize("settings", [
    {"epsilon": -0.1}, {"c_penalty": 0.0}, {"kkt_tolerance": 0.0}, {"max_passes": 0},
])
def test_invalid_config(settings):
    with pytest.raises(ValueError):
        SvrConfig(**settings)


def test_stored_model_predicts_the_same(noisy):
    features, targets = noisy
    model = fit_svr(features, targets)
    restored = SvrModel.from_dict(model.to_dict())
    assert restored.predict(features[0]) == model.predict(features[0])
    assert restored.config == model.config


def test_stored_model_dimension_mismatch():
    data = SvrModel(dual_coeffs=(), bias=0.0, weight=(1.0, 2.0), training_dim=2).to_dict()
    data["training_dim"] = 3
    with pytest.raises(DimensionError):
        SvrModel.from_dict(data)


def test_noise_free_line_stays_in_tube(line):
    features, targets = line
    config = SvrConfig(epsilon=0.1, c_penalty=1000.0)
    model = fit_svr(features, targets, config)
    queries = np.array([[0.5], [1.5], [2.5]])
    errors = model.predict_many(queries) - 2.0 * queries[:, 0]
    assert np.sqrt(np.mean(errors ** 2)) <= config.epsilon + 1e-3


def test_two_feature_primal_no_worse_than_grid():
    rng = np.random.default_rng(30)
    features = rng.uniform(-1, 1, size=(8, 2))
    targets = features @ np.array([1.0, -0.5]) + rng.normal(0, 0.3, size=8)
    config = SvrConfig(epsilon=0.1, c_penalty=1.0, kkt_tolerance=1e-4)
    model = fit_svr(features, targets, config)
    fitted = primal_objective(model.weight, model.bias, features, targets, config)
    assert kkt_violation(model, features, targets) <= 1e-3

    axis = np.linspace(-2, 2, 81)
    w1, w2, b = np.meshgrid(axis, axis, axis, indexing="ij")
    predictions = w1[..., None] * features[:, 0] + w2[..., None] * features[:, 1] + b[..., None]
    slacks = np.maximum(np.abs(targets - predictions) - config.epsilon, 0.0).sum(axis=-1)
    grid_best = float((0.5 * (w1 ** 2 + w2 ** 2) + config.c_penalty * slacks).min())
    assert fitted <= grid_best + 1e-2
