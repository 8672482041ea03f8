import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from reludae.closed_form import construct_memorization_solution, construct_theorem_solution
from reludae.data import mog_spec, sample_mog
from reludae.detection import (
    SpikinessDetector,
    auroc,
    calibrate,
    detect,
    detection_scores,
    rep_stats,
    spikiness,
    tpr_at_fpr,
)
from reludae.exceptions import ConfigurationError

nonneg = arrays(np.float64, st.integers(2, 30), elements=st.floats(0, 100, allow_nan=False))


def test_rep_stats_spike():
    h = np.zeros(100)
    h[0] = 10.0
    assert rep_stats(h).std == pytest.approx(0.99499, abs=1e-5)


def test_rep_stats_constant_and_one_hot():
    c = rep_stats(np.full(8, 3.0))
    assert c.std == 0 and c.max_minus_min == 0
    assert c.entropy == pytest.approx(np.log(8))
    one = rep_stats(np.eye(8)[2] * 4.0)
    assert one.l4l2 == pytest.approx(1.0) and one.entropy == pytest.approx(0.0)


@settings(max_examples=100, deadline=None)
@given(nonneg)
def test_rep_stats_ranges(h):
    s = rep_stats(h)
    p = h.size
    assert s.std >= 0
    assert 0 <= s.entropy <= np.log(p) + 1e-12
    if np.any(h > 0):
        assert p ** -0.25 - 1e-12 <= s.l4l2 <= 1 + 1e-12


@settings(max_examples=100, deadline=None)
@given(nonneg, st.floats(0.01, 100))
def test_rep_stats_scale_equivariance(h, c):
    assume(np.sum(h) > 1e-3)
    a, b = rep_stats(h), rep_stats(c * h)
    tol = 1e-12 * c * h.max()
    assert b.std == pytest.approx(c * a.std, rel=1e-9, abs=tol)
    assert b.max_minus_min == pytest.approx(c * a.max_minus_min, rel=1e-9, abs=tol)
    assert b.l4l2 == pytest.approx(a.l4l2, rel=1e-9)
    assert b.entropy == pytest.approx(a.entropy, rel=1e-9, abs=1e-12)


def test_entropy_is_negated_for_spikiness():
    h = np.array([1.0, 2.0, 0.0])
    assert spikiness(h, "entropy") == -rep_stats(h).entropy
    with pytest.raises(ConfigurationError):
        spikiness(h, "kurtosis")


def brute_best_threshold(pos, neg):
    best_j, best_t = -np.inf, None
    for t in sorted(set(pos) | set(neg), reverse=True):
        j = np.mean(np.asarray(pos) >= t) - np.mean(np.asarray(neg) >= t)
        if j > best_j:
            best_j, best_t = j, t
    return best_t


def test_calibrate_examples():
    assert calibrate([0.9, 0.8], [0.1, 0.2]) == 0.8
    assert calibrate([0.3, 0.5, 0.7], [0.3, 0.5, 0.7]) == 0.7
    assert calibrate([0.8, 0.3], [0.5, 0.1]) == brute_best_threshold([0.8, 0.3], [0.5, 0.1])
    rng = np.random.default_rng(0)
    for _ in range(50):
        pos = np.round(rng.normal(1, 1, 7), 1).tolist()
        neg = np.round(rng.normal(0, 1, 5), 1).tolist()
        assert calibrate(pos, neg) == brute_best_threshold(pos, neg)


def test_auroc_examples():
    assert auroc([0.9, 0.8], [0.1, 0.2]) == 1.0
    assert auroc([0.8, 0.3], [0.5, 0.1]) == 0.75
    rng = np.random.default_rng(1)
    assert abs(auroc(rng.normal(size=4000), rng.normal(size=4000)) - 0.5) < 0.03


def test_auroc_pairwise_oracle():
    rng = np.random.default_rng(2)
    pos, neg = np.round(rng.normal(0.5, 1, 9), 1), np.round(rng.normal(0, 1, 8), 1)
    pairs = [1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg)]
    assert auroc(pos, neg) == pytest.approx(np.mean(pairs))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-500, 500), min_size=1, max_size=8), st.lists(st.integers(-500, 500), min_size=1, max_size=8))
def test_auroc_monotone_invariance(pos, neg):
    pos, neg = np.array(pos) / 100.0, np.array(neg) / 100.0
    assert auroc(np.exp(pos), np.exp(neg)) == pytest.approx(auroc(pos, neg))
    assert auroc(pos**3 + pos, neg**3 + neg) == pytest.approx(auroc(pos, neg))


def test_tpr_at_fpr():
    neg = np.arange(100) / 100.0
    pos = np.array([0.995, 0.999, 0.5, 0.2])
    assert tpr_at_fpr(pos, neg, 0.01) == 0.5
    assert tpr_at_fpr(pos, neg, 0.0) == 0.5
    assert tpr_at_fpr([2.0, 3.0], neg) == 1.0


@pytest.fixture(scope="module")
def regimes():
    spec = mog_spec(K=2, d=50, cov_scale=0.5)
    mem_data = sample_mog(spec, [1, 1], seed=0)
    gen_data = sample_mog(spec, [300, 300], seed=1)
    mem = construct_memorization_solution(mem_data, 4, 0.17, 0.0)
    gen = construct_theorem_solution(gen_data, [10, 10], 0.17, 0.0).to_model()
    fresh = sample_mog(spec, [50, 50], seed=2)
    return mem, mem_data, gen, fresh


def test_detect_flags_memorized_samples(regimes):
    mem, mem_data, gen, fresh = regimes
    pos = detection_scores(mem, mem_data.X[:, np.arange(100) % 2], 0.2, "std", seed=1000)
    neg = detection_scores(gen, fresh.X, 0.2, "std", seed=1000)
    thr = calibrate(pos, neg)
    flags_mem = [detect(mem, mem_data.X[:, 0], 0.2, thr, "std", seed=s).flag for s in range(100)]
    flags_gen = [detect(gen, fresh.X[:, s], 0.2, thr, "std", seed=s).flag for s in range(100)]
    assert sum(flags_mem) >= 99
    assert sum(flags_gen) <= 5


def test_detect_infinite_threshold(regimes):
    mem, mem_data, _, _ = regimes
    r = detect(mem, mem_data.X[:, 0], 0.17, np.inf)
    assert not r.flag and r.score == spikiness(r.h.h, "std")


def test_spikiness_detector_estimator(regimes):
    mem, mem_data, gen, fresh = regimes
    det = SpikinessDetector(model=mem, sigma=0.17)
    assert clone(det).get_params()["sigma"] == 0.17
    X = np.concatenate([mem_data.X.T, -mem_data.X.T * 0.01])
    y = np.array([1, 1, 0, 0])
    det.fit(X, y)
    np.testing.assert_array_equal(det.predict(X), det.decision_function(X) > det.threshold_)
