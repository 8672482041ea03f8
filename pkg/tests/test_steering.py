import numpy as np
import pytest

from reludae.closed_form import construct_theorem_solution
from reludae.data import mog_spec, sample_mog
from reludae.exceptions import ConfigurationError
from reludae.model import DaeModel, forward, hidden
from reludae.sampler import DenoiserBank, sample, ve_schedule
from reludae.steering import (
    SteeringVector,
    bank_steering_vectors,
    nearest_mean_labels,
    steer_sample,
    steered_forward,
    steering_sweep,
    steering_vector,
)


@pytest.fixture(scope="module")
def gen_setup():
    spec = mog_spec(K=2, d=40, cov_scale=0.5)
    data = sample_mog(spec, [400, 400], seed=0)
    sol = construct_theorem_solution(data, [6, 6], 0.2, 0.0)
    return spec, data, sol


def test_single_target_without_noise(rng):
    m = DaeModel(rng.standard_normal((5, 3)))
    x = rng.standard_normal(5)
    sv = steering_vector(m, x, 0.0, seed=0)
    np.testing.assert_array_equal(sv.v, hidden(m, x[:, None])[:, 0])
    with pytest.raises(ConfigurationError):
        steering_vector(m, np.zeros((5, 0)), 0.1, 0)


def test_vector_supported_on_target_block(gen_setup):
    _, data, sol = gen_setup
    sv = steering_vector(sol.to_model(), data.cluster(2), 0.2, seed=0)
    cols = sol.block_columns()
    assert np.all(np.abs(sv.v[cols[1]]) <= 1e-8)
    assert np.all(sv.v[cols[2]] > 1e-8)


def test_vector_concentrates(gen_setup):
    _, data, sol = gen_setup
    m = sol.to_model()
    T = data.cluster(2)
    v1 = steering_vector(m, T[:, :100], 0.2, seed=0).v
    v2 = steering_vector(m, T[:, 100:200], 0.2, seed=1).v
    assert np.linalg.norm(v1 - v2) / np.linalg.norm(v1) <= 0.2


def test_zero_strength_is_plain_forward(rng):
    m = DaeModel(rng.standard_normal((6, 4)), rng.standard_normal((6, 4)))
    sv = SteeringVector(rng.standard_normal(4), 0.1)
    x = rng.standard_normal(6)
    assert steered_forward(m, x, 0.0, sv).tobytes() == forward(m, x).tobytes()


def test_steering_is_affine_in_strength(rng):
    m = DaeModel(rng.standard_normal((6, 4)), rng.standard_normal((6, 4)))
    sv = SteeringVector(rng.standard_normal(4), 0.1)
    x = rng.standard_normal(6)
    base = steered_forward(m, x, 0.0, sv)
    for a in (0.3, 1.0, 2.5):
        np.testing.assert_allclose(steered_forward(m, x, a, sv) - base, a * (m.W2 @ sv.v), atol=1e-12)


def test_steering_stays_in_block_span(gen_setup):
    _, data, sol = gen_setup
    m = sol.to_model()
    sv = steering_vector(m, data.cluster(2), 0.2, seed=0)
    Q, _ = np.linalg.qr(sol.assembled_W)
    x = data.X[:, 0]
    delta = steered_forward(m, x, 1.3, sv) - forward(m, x)
    assert np.linalg.norm(delta - Q @ (Q.T @ delta)) <= 1e-10


def test_single_model_sweep_is_monotone(gen_setup):
    spec, data, sol = gen_setup
    m = sol.to_model()
    sv = steering_vector(m, data.cluster(2), 0.2, seed=0)
    x = data.cluster(1)[:, 0]
    mu2 = spec.means[1]
    cos = [steered_forward(m, x, a, sv) @ mu2 / np.linalg.norm(steered_forward(m, x, a, sv)) / 5.0
           for a in np.arange(0, 1.51, 0.25)]
    assert np.all(np.diff(cos) > 0)


@pytest.fixture(scope="module")
def gen_bank(gen_setup):
    _, data, _ = gen_setup
    sched = ve_schedule(0.02, 20.0, 20)
    bank = DenoiserBank.from_builder(
        sched.sigmas[:-1], lambda s: construct_theorem_solution(data, [6, 6], s, 0.0).to_model()
    )
    svs = bank_steering_vectors(bank, data.cluster(2)[:, :100], seed=0, target_label=2)
    return sched, bank, svs


def test_steer_sample_zero_strength_matches_sampler(gen_bank):
    sched, bank, svs = gen_bank
    a = steer_sample(bank, sched, svs, 0.0, n=8, seed=4)
    assert a.tobytes() == sample(bank, sched, 8, seed=4).tobytes()
    with pytest.raises(ConfigurationError):
        steer_sample(bank, sched, svs, 1.0, window=(5, 99))


def test_steered_generation_lands_in_target_mode(gen_setup, gen_bank):
    spec, _, _ = gen_setup
    sched, bank, svs = gen_bank
    out = steer_sample(bank, sched, svs, 1.0, n=100, seed=0)
    assert np.mean(nearest_mean_labels(out, spec.means) == 1) >= 0.8


def test_sweep_rows(gen_setup, gen_bank):
    spec, _, _ = gen_setup
    sched, bank, svs = gen_bank
    rows = steering_sweep(bank, sched, svs, [0.0, 0.5, 1.0], spec.means, 0, 1, n=60, seed=0)
    assert rows[0].mode2_fraction == 0.0
    assert [r.a for r in rows] == [0.0, 0.5, 1.0]
    assert rows[-1].mode2_fraction >= rows[0].mode2_fraction


def test_nearest_mean_labels():
    means = np.array([[1.0, 0.0], [-1.0, 0.0]])
    X = np.array([[0.5, -2.0], [3.0, 1.0]])
    np.testing.assert_array_equal(nearest_mean_labels(X, means), [0, 1])
