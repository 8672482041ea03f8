import numpy as np
import pytest
from sklearn.base import clone

from reludae.closed_form import construct_theorem_solution
from reludae.data import Dataset
from reludae.estimators import ClosedFormDAE, ReluDAE
from reludae.exceptions import ConfigurationError


def test_relu_dae_fit_transform(two_mode_data):
    X = two_mode_data.X.T
    est = ReluDAE(p=4, steps=50, seed=1)
    assert clone(est).get_params() == est.get_params()
    H = est.fit_transform(X)
    assert H.shape == (60, 4) and np.all(H >= 0)
    assert est.predict(X).shape == X.shape
    assert np.isfinite(est.score(X))
    with pytest.raises(ConfigurationError):
        est.predict(np.ones((2, 3)))


def test_closed_form_estimator_matches_construction(two_mode_data):
    X, y = two_mode_data.X.T, two_mode_data.cluster_ids
    est = ClosedFormDAE(mode="theorem", p_alloc=[2, 2], sigma=0.2).fit(X, y)
    ref = construct_theorem_solution(two_mode_data, [2, 2], 0.2, 0.0)
    np.testing.assert_array_equal(est.model_.W1, ref.assembled_W)
    with pytest.raises(ConfigurationError):
        ClosedFormDAE(mode="theorem", p_alloc=[2, 2]).fit(X)


def test_closed_form_memorization_default_width(antipodal_pair):
    est = ClosedFormDAE(mode="memorization", sigma=0.1).fit(antipodal_pair.X.T)
    assert est.model_.p == 2
