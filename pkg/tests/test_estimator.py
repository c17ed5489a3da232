import numpy as np
import pytest
from sklearn.base import clone

from mmfc.estimator import MMFCImputer

from conftest import mixed_schemas, random_dataset


def _matrix_with_nans(seed=0):
    data = random_dataset(mixed_schemas(), 40, seed=seed, missing_rate=0.2)
    X = data.values.astype(float)
    X[data.mask] = np.nan
    return X


def test_get_params_round_trip_and_clone():
    est = MMFCImputer(schemas=mixed_schemas(), n_top=3, n_z=4, n_x=4, n_rem=4, m=2,
                      burn_in=5, thin=2, random_state=7)
    params = est.get_params()
    assert params["n_z"] == 4 and params["random_state"] == 7
    cloned = clone(est)
    assert cloned.get_params() == params


def test_fit_produces_m_completed_matrices():
    X = _matrix_with_nans()
    est = MMFCImputer(schemas=mixed_schemas(), n_top=3, n_z=3, n_x=3, n_rem=3,
                      m=3, burn_in=4, thin=2, random_state=1)
    est.fit(X)
    assert len(est.imputations_) == 3
    for imp in est.imputations_:
        assert imp.shape == X.shape
        assert not np.isnan(imp).any()
        obs = ~np.isnan(X)
        assert np.array_equal(imp[obs], X[obs].astype(np.int64))


def test_transform_returns_completion_of_training_matrix():
    X = _matrix_with_nans(seed=3)
    est = MMFCImputer(schemas=mixed_schemas(), n_top=3, n_z=3, n_x=3, n_rem=3,
                      m=2, burn_in=3, thin=1, random_state=2)
    out = est.fit_transform(X)
    assert np.array_equal(out, est.imputations_[0])
    with pytest.raises(ValueError):
        est.transform(X[:10])


def test_fit_deterministic_under_seed():
    X = _matrix_with_nans(seed=5)
    kw = dict(schemas=mixed_schemas(), n_top=3, n_z=3, n_x=3, n_rem=3,
              m=2, burn_in=4, thin=2, random_state=11)
    a = MMFCImputer(**kw).fit(X)
    b = MMFCImputer(**kw).fit(X)
    for ia, ib in zip(a.imputations_, b.imputations_):
        assert np.array_equal(ia, ib)


def test_fit_requires_schemas():
    with pytest.raises(ValueError, match="schemas"):
        MMFCImputer().fit(np.ones((5, 2)))
