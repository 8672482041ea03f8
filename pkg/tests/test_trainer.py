import numpy as np
import pytest

from reludae.data import Dataset
from reludae.exceptions import ConfigurationError, DivergenceError
from reludae.model import DaeModel
from reludae.trainer import OptimizerConfig, grad_check, init_weights, loss_and_grad, train


@pytest.mark.parametrize("tied", [True, False])
def test_grad_check_small_model(tied):
    rng = np.random.default_rng(5)
    W1 = rng.standard_normal((6, 4))
    m = DaeModel(W1, None if tied else rng.standard_normal((6, 4)), tied=tied)
    assert grad_check(m, rng.standard_normal(6), 0.3, seed=1, lam=0.01) < 1e-5


def test_zero_input_only_decay_remains():
    rng = np.random.default_rng(0)
    m = DaeModel(rng.standard_normal((4, 3)), rng.standard_normal((4, 3)))
    Z = np.zeros((4, 1))
    _, g1, g2 = loss_and_grad(m, Z, Z, 0.0)
    assert not g1.any() and not g2.any()
    _, g1, g2 = loss_and_grad(m, Z, Z, 0.5)
    np.testing.assert_allclose(g1, m.W1)
    np.testing.assert_allclose(g2, m.W2)


def test_zero_init_scale():
    m = init_weights(5, 3, scale=0.0)
    assert not m.W1.any()


@pytest.mark.parametrize("kw", [{"lr": -1.0}, {"steps": 0}, {"beta1": 1.0}, {"eps": 0.0}, {"kind": "sgd"}])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        OptimizerConfig(**kw)


def tiny_data():
    X = np.random.default_rng(0).standard_normal((6, 4))
    return Dataset(X, np.ones(4, int))


@pytest.mark.parametrize("kind", ["rmsprop", "adam", "adamw"])
def test_training_is_deterministic(kind):
    cfg = OptimizerConfig(kind=kind, steps=60, log_every=10, seed=3)
    a = train(tiny_data(), 0.2, 3, cfg)
    b = train(tiny_data(), 0.2, 3, cfg)
    assert a.loss_history.tobytes() == b.loss_history.tobytes()
    assert a.final_model.W1.tobytes() == b.final_model.W1.tobytes()


def test_zero_learning_rate_keeps_init():
    init = init_weights(6, 3, seed=2)
    tr = train(tiny_data(), 0.2, 3, OptimizerConfig(lr=0.0, steps=10), init=init)
    np.testing.assert_array_equal(tr.final_model.W1, init.W1)


def test_training_reduces_loss():
    cfg = OptimizerConfig(steps=2000, lr=1e-2, log_every=100, seed=0)
    tr = train(tiny_data(), 0.1, 6, cfg)
    assert tr.loss_history[-1] < 0.5 * tr.loss_history[0]


def test_tie_survives_training():
    tr = train(tiny_data(), 0.1, 3, OptimizerConfig(steps=20))
    assert tr.final_model.W2 is tr.final_model.W1


def test_divergence_is_reported():
    cfg = OptimizerConfig(kind="adam", lr=1e3, steps=200, init_scale=1.0, log_every=1)
    with pytest.raises(DivergenceError):
        train(tiny_data(), 0.1, 3, cfg)


def test_checkpoint_callback():
    seen = []
    train(tiny_data(), 0.1, 3, OptimizerConfig(steps=30), callback=lambda s, m: seen.append(s), checkpoint_every=10)
    assert seen == [10, 20, 30]
