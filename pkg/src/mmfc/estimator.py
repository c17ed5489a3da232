"""Scikit-learn style estimator wrapping the imputation chain.

The estimator view makes the sampler compose with sklearn tooling
(get_params/set_params, clone, pipelines operating on integer-coded
matrices with NaN for missing entries).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .gibbs import ChainOptions, run_chain
from .model import Model, ModelConfig
from .schema import Dataset


class MMFCImputer(BaseEstimator):
    """Multiple imputation of mixed ordinal/nominal data by focused clustering.

    Fits the Bayesian mixture on an integer-coded matrix (codes 1..levels,
    NaN marking missing cells) and draws ``m`` completed datasets from the
    posterior predictive distribution.

    Parameters
    ----------
    schemas : list of VariableSchema
        Variable metadata in the column order of X (name, ordinal/nominal,
        level count, focus/remainder block).
    n_top, n_z, n_x, n_rem : int
        Truncation levels of the four allocation families.
    m : int
        Number of completed datasets to draw.
    burn_in, thin : int
        Sweeps discarded up front and between saved imputations.
    design : DesignSpec or None
        Covariate expansion for the latent-normal means; None uses main
        effects of every covariate.
    random_state : int
        Chain seed; runs are deterministic given this value.

    Attributes
    ----------
    imputations_ : list of ndarray
        The m completed code matrices, in the column order of X.
    diagnostics_ : dict
        Per-sweep occupied component counts and concentration traces.
    """

    def __init__(self, schemas=None, n_top=10, n_z=20, n_x=20, n_rem=20,
                 m=5, burn_in=1000, thin=100, design=None, random_state=0):
        self.schemas = schemas
        self.n_top = n_top
        self.n_z = n_z
        self.n_x = n_x
        self.n_rem = n_rem
        self.m = m
        self.burn_in = burn_in
        self.thin = thin
        self.design = design
        self.random_state = random_state

    def _as_dataset(self, X):
        if self.schemas is None:
            raise ValueError("schemas must be provided to fit")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.schemas):
            raise ValueError(f"X must be 2-D with {len(self.schemas)} columns")
        mask = np.isnan(X)
        values = np.where(mask, 1, X).astype(np.int64)
        return Dataset(tuple(self.schemas), np.where(mask, 0, values), mask)

    def fit(self, X, y=None):
        """Run the chain on X and store the sampled imputations."""
        data = self._as_dataset(X)
        config = ModelConfig(n_top=self.n_top, n_z=self.n_z, n_x=self.n_x,
                             n_rem=self.n_rem, design=self.design)
        model = Model(data.schemas, config)
        options = ChainOptions(burn_in=self.burn_in, thin=self.thin, m=self.m,
                               seed=self.random_state)
        record = run_chain(data, model, options)
        # chain ran on canonically reordered columns; map back to input order
        names = [s.name for s in self.schemas]
        self.imputations_ = []
        for d in record.imputations:
            order = [d.names.index(nm) for nm in names]
            self.imputations_.append(d.values[:, order])
        self.diagnostics_ = record.diagnostics_dict()
        self.n_features_in_ = X.shape[1]
        self._fit_values = np.asarray(X, dtype=float)
        return self

    def transform(self, X):
        """Return one completed copy of the training matrix (the first draw)."""
        check_is_fitted(self, "imputations_")
        X = np.asarray(X, dtype=float)
        fitted = self._fit_values
        if X.shape != fitted.shape or not np.array_equal(np.isnan(X), np.isnan(fitted)) or not np.array_equal(
            X[~np.isnan(X)], fitted[~np.isnan(fitted)]
        ):
            raise ValueError("transform requires the matrix the imputer was fit on")
        return self.imputations_[0].copy()

    def fit_transform(self, X, y=None):
        return self.fit(X, y).transform(X)

    def sample_imputations(self):
        """All m completed matrices drawn during fit."""
        check_is_fitted(self, "imputations_")
        return [imp.copy() for imp in self.imputations_]
