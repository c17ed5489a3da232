"""Model configuration, stick-breaking weight system, design vectors, and sampler state.

The mixture couples four allocation families: a top-level label on
``{1..n_top}`` and three conditionally independent block labels (latent-normal
block, nominal-focus block, remainder block), each with its own truncated
stick-breaking weights per top-level component.  Allocation labels are stored
0-based internally; category codes stay 1-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .samplers import inverse_wishart, truncated_normal
from .schema import DataValidationError, partition

MAX_STICK = 1.0 - 1e-12


def default_cutoffs(levels):
    """Unit-spaced latent-scale cutoffs centered at zero: k - L/2 for k=1..L-1."""
    if levels < 2:
        raise ValueError(f"need at least 2 levels, got {levels}")
    return np.arange(1, levels) - levels / 2.0


def stick_break(v):
    """Map stick proportions (terminal entry 1) to a simplex: pi_k = v_k * prod_{j<k}(1 - v_j)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("stick vector must be 1-D and non-empty")
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("stick entries must lie in [0, 1]")
    if v[-1] != 1.0:
        raise ValueError("terminal stick must equal 1")
    tail = np.cumprod(1.0 - v)
    pi = v.copy()
    pi[1:] *= tail[:-1]
    return pi


def stick_break_columns(v):
    """Column-wise stick_break for a (K, N) matrix whose last row is all ones."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(v > 1) or np.any(v[-1] != 1.0):
        raise ValueError("stick columns must lie in [0, 1] with terminal row 1")
    pi = v.copy()
    if v.shape[0] > 1:
        pi[1:] *= np.cumprod(1.0 - v[:-1], axis=0)
    return pi


@dataclass(frozen=True)
class DesignSpec:
    """Design-vector layout: intercept (always present) plus main effects and
    two-way interactions of covariates, dummy-coded with level 1 as reference."""

    mains: tuple = ()
    interactions: tuple = ()

    @classmethod
    def main_effects(cls, names):
        return cls(mains=tuple(names))

    @classmethod
    def from_terms(cls, terms):
        """Parse a JSON-style list of term descriptors, e.g.
        [{"main": "ideology"}, {"interaction": ["party", "teaparty"]}]."""
        mains, inters = [], []
        for t in terms:
            if "main" in t:
                mains.append(t["main"])
            elif "interaction" in t:
                a, b = t["interaction"]
                inters.append((a, b))
            elif "intercept" in t:
                continue
            else:
                raise DataValidationError(f"unknown design term {t!r}")
        return cls(mains=tuple(mains), interactions=tuple(tuple(x) for x in inters))

    def to_terms(self):
        terms = [{"intercept": True}]
        terms += [{"main": m} for m in self.mains]
        terms += [{"interaction": list(i)} for i in self.interactions]
        return terms


@dataclass
class ModelConfig:
    """Truncation levels, cutoffs, design spec, and prior hyperparameters.

    Fields left as None are resolved against the variable schema when a
    :class:`Model` is built (see ``Model.__init__`` for the defaults).
    """

    n_top: int = 10
    n_z: int = 20
    n_x: int = 20
    n_rem: int = 20
    cutoffs: dict = None                  # name -> increasing cutoff vector
    design: DesignSpec = None             # default: main effects of every covariate
    coef_mean: np.ndarray = None          # d x q, default zeros
    coef_scale: np.ndarray = None         # per-column prior variances tau^2, default 4
    iw_dof: float = None                  # default q + 2
    iw_scale: np.ndarray = None           # default identity
    dirichlet_conc: dict = None           # name -> concentration vector, default ones
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0
    hierarchical_coef_prior: bool = False
    coef_mean_prior_var: float = 100.0    # prior variance of coef_mean entries (hierarchical mode)
    coef_scale_prior: tuple = (2.0, 2.0)  # inverse-gamma (shape, scale) on tau^2 (hierarchical mode)

    def to_dict(self):
        out = {
            "n_top": self.n_top, "n_z": self.n_z, "n_x": self.n_x, "n_rem": self.n_rem,
            "alpha_shape": self.alpha_shape, "alpha_rate": self.alpha_rate,
            "hierarchical_coef_prior": self.hierarchical_coef_prior,
            "coef_mean_prior_var": self.coef_mean_prior_var,
            "coef_scale_prior": list(self.coef_scale_prior),
        }
        if self.cutoffs is not None:
            out["cutoffs"] = {k: np.asarray(v).tolist() for k, v in self.cutoffs.items()}
        if self.design is not None:
            out["design"] = self.design.to_terms()
        if self.coef_mean is not None:
            out["coef_mean"] = np.asarray(self.coef_mean).tolist()
        if self.coef_scale is not None:
            out["coef_scale"] = np.asarray(self.coef_scale).tolist()
        if self.iw_dof is not None:
            out["iw_dof"] = self.iw_dof
        if self.iw_scale is not None:
            out["iw_scale"] = np.asarray(self.iw_scale).tolist()
        if self.dirichlet_conc is not None:
            out["dirichlet_conc"] = {k: np.asarray(v).tolist() for k, v in self.dirichlet_conc.items()}
        return out

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        if "cutoffs" in kw:
            kw["cutoffs"] = {k: np.asarray(v, dtype=float) for k, v in kw["cutoffs"].items()}
        if "design" in kw:
            kw["design"] = DesignSpec.from_terms(kw["design"])
        for key in ("coef_mean", "coef_scale", "iw_scale"):
            if key in kw:
                kw[key] = np.asarray(kw[key], dtype=float)
        if "dirichlet_conc" in kw:
            kw["dirichlet_conc"] = {k: np.asarray(v, dtype=float) for k, v in kw["dirichlet_conc"].items()}
        if "coef_scale_prior" in kw:
            kw["coef_scale_prior"] = tuple(kw["coef_scale_prior"])
        return cls(**kw)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class Model:
    """A ModelConfig resolved against a variable schema.

    Precomputes the block partition, per-variable cutoffs, the dummy-coding
    layout of the design vector, and fully resolved prior hyperparameters.
    With no remainder variables the remainder family is dropped entirely
    (the no-remainder special case of the model).
    """

    def __init__(self, schemas, config=None):
        self.schemas = tuple(schemas)
        self.config = config if config is not None else ModelConfig()
        self.view = partition(self.schemas)
        if self.view.n_ordinal_focus == 0:
            raise DataValidationError("model requires at least one ordinal focus variable")
        for nt in (self.config.n_top, self.config.n_z, self.config.n_x):
            if nt < 2:
                raise DataValidationError("all truncation levels must be >= 2")
        if self.has_remainder and self.config.n_rem < 2:
            raise DataValidationError("all truncation levels must be >= 2")

        self.ord_idx = self.view.ordinal_focus
        self.nom_idx = self.view.nominal_focus
        self.rem_idx = self.view.remainder
        self.x_idx = self.view.covariate_columns
        self.q = len(self.ord_idx)

        self.cutoffs = []
        user_cuts = self.config.cutoffs or {}
        for j in self.ord_idx:
            s = self.schemas[j]
            cuts = np.asarray(user_cuts.get(s.name, default_cutoffs(s.levels)), dtype=float)
            if len(cuts) != s.levels - 1 or np.any(np.diff(cuts) <= 0):
                raise DataValidationError(f"cutoffs for {s.name!r} must be {s.levels - 1} strictly increasing values")
            self.cutoffs.append(cuts)

        x_names = [self.schemas[j].name for j in self.x_idx]
        x_levels = [self.schemas[j].levels for j in self.x_idx]
        design = self.config.design or DesignSpec.main_effects(x_names)
        self._x_col = {nm: k for k, nm in enumerate(x_names)}
        self._x_levels = np.array(x_levels, dtype=int)
        for nm in design.mains:
            if nm not in self._x_col:
                raise DataValidationError(f"design main effect references unknown covariate {nm!r}")
        for a, b in design.interactions:
            for nm in (a, b):
                if nm not in self._x_col:
                    raise DataValidationError(f"design interaction references unknown covariate {nm!r}")
        self.design = design
        # column layout: intercept | one block of L-1 dummies per main | one
        # (La-1)(Lb-1) block per interaction
        self._main_offsets = {}
        d = 1
        for nm in design.mains:
            self._main_offsets[nm] = d
            d += x_levels[self._x_col[nm]] - 1
        self._inter_offsets = []
        for a, b in design.interactions:
            la, lb = x_levels[self._x_col[a]], x_levels[self._x_col[b]]
            self._inter_offsets.append((a, b, d))
            d += (la - 1) * (lb - 1)
        self.d = d

        q = self.q
        self.coef_mean = np.zeros((d, q)) if self.config.coef_mean is None else np.asarray(self.config.coef_mean, dtype=float)
        if self.coef_mean.shape != (d, q):
            raise DataValidationError(f"coef_mean must be {d} x {q}")
        cs = 4.0 if self.config.coef_scale is None else self.config.coef_scale
        self.coef_scale = np.broadcast_to(np.asarray(cs, dtype=float), (q,)).copy()
        if np.any(self.coef_scale <= 0):
            raise DataValidationError("coef_scale entries must be positive")
        self.iw_dof = float(self.config.iw_dof) if self.config.iw_dof is not None else q + 2.0
        if self.iw_dof <= q - 1:
            raise DataValidationError(f"iw_dof must exceed {q - 1}")
        self.iw_scale = np.eye(q) if self.config.iw_scale is None else np.asarray(self.config.iw_scale, dtype=float)
        if self.iw_scale.shape != (q, q):
            raise DataValidationError(f"iw_scale must be {q} x {q}")

        conc = self.config.dirichlet_conc or {}
        self.focus_conc = []
        for j in self.nom_idx:
            s = self.schemas[j]
            a = np.broadcast_to(np.asarray(conc.get(s.name, 1.0), dtype=float), (s.levels,)).copy()
            self.focus_conc.append(a)
        self.remainder_conc = []
        for j in self.rem_idx:
            s = self.schemas[j]
            a = np.broadcast_to(np.asarray(conc.get(s.name, 1.0), dtype=float), (s.levels,)).copy()
            self.remainder_conc.append(a)

    @property
    def has_remainder(self):
        return len(self.view.remainder) > 0

    @property
    def n_rem_eff(self):
        return self.config.n_rem if self.has_remainder else 0

    def design_matrix(self, x_codes):
        """Dummy-code covariate rows (m, n_covariates; 1-based) into (m, d)."""
        x_codes = np.asarray(x_codes)
        if x_codes.ndim == 1:
            x_codes = x_codes[None, :]
        m = x_codes.shape[0]
        if x_codes.shape[1] != len(self.x_idx):
            raise DataValidationError(f"expected {len(self.x_idx)} covariate columns, got {x_codes.shape[1]}")
        D = np.zeros((m, self.d))
        D[:, 0] = 1.0
        rows = np.arange(m)
        for nm, off in self._main_offsets.items():
            codes = x_codes[:, self._x_col[nm]]
            hit = codes >= 2
            D[rows[hit], off + codes[hit] - 2] = 1.0
        for a, b, off in self._inter_offsets:
            ca = x_codes[:, self._x_col[a]]
            cb = x_codes[:, self._x_col[b]]
            lb = self._x_levels[self._x_col[b]]
            hit = (ca >= 2) & (cb >= 2)
            D[rows[hit], off + (ca[hit] - 2) * (lb - 1) + (cb[hit] - 2)] = 1.0
        return D

    def design_vector(self, x_row):
        return self.design_matrix(np.asarray(x_row)[None, :])[0]


def build_design_vector(x_row, design, schemas):
    """Standalone dummy expansion of one covariate row under a DesignSpec."""
    model_like = _DesignOnly(design, schemas)
    return model_like.design_vector(x_row)


class _DesignOnly(Model):
    # reuse the column-layout machinery for design vectors without a full model
    def __init__(self, design, schemas):
        self.schemas = tuple(schemas)
        x_names = [s.name for s in self.schemas]
        x_levels = [s.levels for s in self.schemas]
        self._x_col = {nm: k for k, nm in enumerate(x_names)}
        self._x_levels = np.array(x_levels, dtype=int)
        for nm in design.mains:
            if nm not in self._x_col:
                raise DataValidationError(f"design main effect references unknown covariate {nm!r}")
        for a, b in design.interactions:
            for nm in (a, b):
                if nm not in self._x_col:
                    raise DataValidationError(f"design interaction references unknown covariate {nm!r}")
        self.design = design
        self._main_offsets = {}
        d = 1
        for nm in design.mains:
            self._main_offsets[nm] = d
            d += x_levels[self._x_col[nm]] - 1
        self._inter_offsets = []
        for a, b in design.interactions:
            la, lb = x_levels[self._x_col[a]], x_levels[self._x_col[b]]
            self._inter_offsets.append((a, b, d))
            d += (la - 1) * (lb - 1)
        self.d = d
        self.x_idx = np.arange(len(self.schemas))


@dataclass
class MixtureWeights:
    """Stick variables, derived mixture weights, and concentration parameters.

    ``v_top``/``w_top`` have length n_top; the block families are (K, n_top)
    matrices whose columns are stick vectors / simplexes.  ``v_rem`` and
    ``alpha_rem`` are None when the model has no remainder block.
    """

    v_top: np.ndarray
    v_z: np.ndarray
    v_x: np.ndarray
    v_rem: np.ndarray
    alpha_top: float
    alpha_z: float
    alpha_x: float
    alpha_rem: float
    w_top: np.ndarray = field(default=None)
    w_z: np.ndarray = field(default=None)
    w_x: np.ndarray = field(default=None)
    w_rem: np.ndarray = field(default=None)

    def __post_init__(self):
        self.w_top = stick_break(self.v_top)
        self.w_z = stick_break_columns(self.v_z)
        self.w_x = stick_break_columns(self.v_x)
        self.w_rem = stick_break_columns(self.v_rem) if self.v_rem is not None else None


def marginal_allocation_probs(weights):
    """Joint allocation tensor Pr(block labels = (r, l, s)) after marginalizing
    the top-level label; shape (n_z, n_x, n_rem) with a singleton remainder
    axis when the remainder family is absent."""
    w_rem = weights.w_rem if weights.w_rem is not None else np.ones((1, len(weights.w_top)))
    return np.einsum("h,rh,lh,sh->rls", weights.w_top, weights.w_z, weights.w_x, w_rem)


@dataclass
class SamplerState:
    """All latent variables and parameters of one MCMC chain.

    ``coef`` is (n_z, d, q); ``cov`` is (n_z, q, q); ``focus_probs`` and
    ``remainder_probs`` hold one (components, levels) simplex matrix per
    variable.  ``completed`` is the n x p code matrix with current imputations
    substituted at masked cells.  ``coef_prior_mean``/``coef_prior_scale``
    start at the configured values and move only in hierarchical-prior mode.
    """

    weights: MixtureWeights
    coef: np.ndarray
    cov: np.ndarray
    focus_probs: list
    remainder_probs: list
    z: np.ndarray
    h_top: np.ndarray
    h_z: np.ndarray
    h_x: np.ndarray
    h_rem: np.ndarray
    completed: np.ndarray
    coef_prior_mean: np.ndarray = None
    coef_prior_scale: np.ndarray = None

    def copy(self):
        w = self.weights
        weights = MixtureWeights(
            w.v_top.copy(), w.v_z.copy(), w.v_x.copy(),
            None if w.v_rem is None else w.v_rem.copy(),
            w.alpha_top, w.alpha_z, w.alpha_x, w.alpha_rem,
        )
        return SamplerState(
            weights, self.coef.copy(), self.cov.copy(),
            [p.copy() for p in self.focus_probs],
            [p.copy() for p in self.remainder_probs],
            self.z.copy(), self.h_top.copy(), self.h_z.copy(),
            self.h_x.copy(), None if self.h_rem is None else self.h_rem.copy(),
            self.completed.copy(),
            self.coef_prior_mean.copy(), self.coef_prior_scale.copy(),
        )


def sample_dirichlet_rows(rng, conc):
    """Row-wise Dirichlet draws via normalized gammas (vectorized)."""
    g = rng.gamma(np.asarray(conc, dtype=float))
    return g / g.sum(axis=-1, keepdims=True)


def sample_prior_params(model, rng):
    """Draw concentrations, sticks, and all component parameters from the prior."""
    cfg = model.config
    alpha_top = rng.gamma(cfg.alpha_shape, 1.0 / cfg.alpha_rate)
    alpha_z = rng.gamma(cfg.alpha_shape, 1.0 / cfg.alpha_rate)
    alpha_x = rng.gamma(cfg.alpha_shape, 1.0 / cfg.alpha_rate)
    alpha_rem = rng.gamma(cfg.alpha_shape, 1.0 / cfg.alpha_rate) if model.has_remainder else None

    def sticks(alpha, shape):
        # clamp away from 1 so no truncated weight can vanish exactly
        return np.minimum(rng.beta(1.0, alpha, size=shape), MAX_STICK)

    v_top = np.append(sticks(alpha_top, cfg.n_top - 1), 1.0)
    v_z = np.vstack([sticks(alpha_z, (cfg.n_z - 1, cfg.n_top)), np.ones(cfg.n_top)])
    v_x = np.vstack([sticks(alpha_x, (cfg.n_x - 1, cfg.n_top)), np.ones(cfg.n_top)])
    v_rem = None
    if model.has_remainder:
        v_rem = np.vstack([sticks(alpha_rem, (cfg.n_rem - 1, cfg.n_top)), np.ones(cfg.n_top)])
    weights = MixtureWeights(v_top, v_z, v_x, v_rem, alpha_top, alpha_z, alpha_x, alpha_rem)

    coef = model.coef_mean + rng.standard_normal((cfg.n_z, model.d, model.q)) * np.sqrt(model.coef_scale)
    cov = np.empty((cfg.n_z, model.q, model.q))
    for r in range(cfg.n_z):
        cov[r] = inverse_wishart(rng, model.iw_dof, model.iw_scale)
    focus_probs = [sample_dirichlet_rows(rng, np.tile(a, (cfg.n_x, 1))) for a in model.focus_conc]
    remainder_probs = [sample_dirichlet_rows(rng, np.tile(a, (cfg.n_rem, 1))) for a in model.remainder_conc]
    return weights, coef, cov, focus_probs, remainder_probs


def init_state(model, data, rng):
    """Initial SamplerState: uniform allocations, prior parameter draws,
    uniform fills for masked cells, and latent normals respecting the cutoff
    interval of each observed ordinal value."""
    if len(data.schemas) != len(model.schemas) or any(
        a.name != b.name or a.levels != b.levels for a, b in zip(data.schemas, model.schemas)
    ):
        raise DataValidationError("dataset schema does not match model schema")
    cfg = model.config
    n = data.n

    completed = data.values.copy()
    for j in range(data.p):
        miss = data.mask[:, j]
        if miss.any():
            completed[miss, j] = rng.integers(1, data.schemas[j].levels + 1, size=int(miss.sum()))

    weights, coef, cov, focus_probs, remainder_probs = sample_prior_params(model, rng)

    h_top = rng.integers(0, cfg.n_top, size=n)
    h_z = rng.integers(0, cfg.n_z, size=n)
    h_x = rng.integers(0, cfg.n_x, size=n)
    h_rem = rng.integers(0, cfg.n_rem, size=n) if model.has_remainder else None

    D = model.design_matrix(completed[:, model.x_idx])
    mu = np.einsum("nd,ndq->nq", D, coef[h_z])
    z = np.empty((n, model.q))
    for jj in range(model.q):
        col = model.ord_idx[jj]
        sd = np.sqrt(cov[h_z, jj, jj])
        cuts = model.cutoffs[jj]
        y = completed[:, col]
        observed = ~data.mask[:, col]
        lo = np.where(observed, np.append(-np.inf, cuts)[y - 1], -np.inf)
        hi = np.where(observed, np.append(cuts, np.inf)[y - 1], np.inf)
        z[:, jj] = truncated_normal(rng, lo, hi, mu[:, jj], sd)

    return SamplerState(weights, coef, cov, focus_probs, remainder_probs,
                        z, h_top, h_z, h_x, h_rem, completed,
                        model.coef_mean.copy(), model.coef_scale.copy())


def check_state(state, model, data):
    """Assert every SamplerState invariant; used by tests and debug runs."""
    cfg = model.config
    assert state.h_top.min() >= 0 and state.h_top.max() < cfg.n_top
    assert state.h_z.min() >= 0 and state.h_z.max() < cfg.n_z
    assert state.h_x.min() >= 0 and state.h_x.max() < cfg.n_x
    if model.has_remainder:
        assert state.h_rem.min() >= 0 and state.h_rem.max() < cfg.n_rem
    w = state.weights
    assert abs(w.w_top.sum() - 1) < 1e-12
    assert np.allclose(w.w_z.sum(axis=0), 1, atol=1e-12)
    assert np.allclose(w.w_x.sum(axis=0), 1, atol=1e-12)
    if w.w_rem is not None:
        assert np.allclose(w.w_rem.sum(axis=0), 1, atol=1e-12)
    for r in range(cfg.n_z):
        np.linalg.cholesky(state.cov[r])
    for jj, col in enumerate(model.ord_idx):
        cuts = np.concatenate([[-np.inf], model.cutoffs[jj], [np.inf]])
        observed = ~data.mask[:, col]
        y = data.values[observed, col]
        zc = state.z[observed, jj]
        assert np.all(zc > cuts[y - 1]) and np.all(zc <= cuts[y])
    obs = ~data.mask
    assert np.array_equal(state.completed[obs], data.values[obs])
    assert np.all(state.completed >= 1) and np.all(state.completed <= data.levels[None, :])
