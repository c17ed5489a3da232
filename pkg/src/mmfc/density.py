"""Closed-form and Monte Carlo evaluation of the model's joint and conditional laws.

These routines serve as test oracles, feed the Hellinger comparisons, and
back the posterior predictive machinery.  All operations are pure functions
of an immutable state snapshot.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .schema import DataValidationError


@dataclass
class CellTable:
    """Sparse probability table keyed by category-code tuples."""

    probs: dict
    total: float = field(default=None)

    def __post_init__(self):
        if self.total is None:
            self.total = float(sum(self.probs.values()))
        if any(v < 0 for v in self.probs.values()):
            raise ValueError("cell probabilities must be nonnegative")

    def to_csv(self, path, names):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(names) + ["probability"])
            for cell in sorted(self.probs):
                writer.writerow(list(cell) + [repr(self.probs[cell])])

    @classmethod
    def from_counts(cls, tuples, counts):
        total = counts.sum()
        return cls({tuple(int(v) for v in t): c / total for t, c in zip(tuples, counts)})


def _mixed_block_factors(state, x_a, x_b):
    """Per-top-component factors of the two multinomial blocks at (x_a, x_b).

    Empty blocks contribute a factor of one (each weight column is a simplex,
    so the kernel-free sum collapses to 1).
    """
    w = state.weights
    if len(x_a) != len(state.focus_probs):
        raise ValueError(f"expected {len(state.focus_probs)} nominal focus codes, got {len(x_a)}")
    a = np.ones(w.w_x.shape[0])
    for jj, code in enumerate(x_a):
        a = a * state.focus_probs[jj][:, code - 1]
    A = a @ w.w_x
    if w.w_rem is None:
        if len(x_b):
            raise ValueError("model has no remainder block but remainder codes were given")
        return A, np.ones(len(w.w_top))
    if len(x_b) != len(state.remainder_probs):
        raise ValueError(f"expected {len(state.remainder_probs)} remainder codes, got {len(x_b)}")
    b = np.ones(w.w_rem.shape[0])
    for jj, code in enumerate(x_b):
        b = b * state.remainder_probs[jj][:, code - 1]
    return A, b @ w.w_rem


def nominal_joint_pmf(state, x_a, x_b=()):
    """P(nominal focus = x_a, remainder = x_b): the triple mixture sum over
    the top-level label and the two block labels."""
    w = state.weights
    A, B = _mixed_block_factors(state, x_a, x_b)
    return float(np.sum(w.w_top * A * B))


def _component_weights_at(model, state, x):
    """Unnormalized latent-block component weights at covariate row x;
    summing them over components gives the nominal pmf at x."""
    w = state.weights
    n_nom = len(model.nom_idx)
    x = np.asarray(x, dtype=int)
    A, B = _mixed_block_factors(state, x[:n_nom], x[n_nom:])
    return w.w_z @ (w.w_top * A * B)


def conditional_z_mixture(model, state, x):
    """Mixture representation of the latent block given covariates:
    normalized weights, per-component means D(x) coef_r, covariances."""
    t = _component_weights_at(model, state, x)
    weights = t / t.sum()
    means = np.einsum("d,rdq->rq", model.design_vector(x), state.coef)
    return weights, means, state.cov.copy()


def _interval_bounds(model, y):
    lo = np.empty(model.q)
    hi = np.empty(model.q)
    for jj in range(model.q):
        cuts = model.cutoffs[jj]
        k = int(y[jj])
        lo[jj] = -np.inf if k == 1 else cuts[k - 2]
        hi[jj] = np.inf if k == len(cuts) + 1 else cuts[k - 1]
    return lo, hi


def _is_diagonal(cov):
    off = cov - np.einsum("rij,ij->rij", cov, np.eye(cov.shape[1]))
    return not np.any(off)


def joint_cell_probability(model, state, cell, mc_draws=2000, rng=None):
    """P(ordinal focus = y, covariates = x) for one full cell, with the
    latent rectangle integrated exactly (single coordinate or diagonal
    covariances) or by antithetic Monte Carlo.

    Returns (estimate, standard error); the exact path reports se = 0.
    """
    cell = np.asarray(cell, dtype=int)
    if len(cell) != model.q + len(model.x_idx):
        raise ValueError("cell must list every variable in canonical order")
    y, x = cell[: model.q], cell[model.q:]
    lo, hi = _interval_bounds(model, y)
    means = np.einsum("d,rdq->rq", model.design_vector(x), state.coef)
    t = _component_weights_at(model, state, x)

    n_z = state.cov.shape[0]
    if model.q == 1 or _is_diagonal(state.cov):
        sd = np.sqrt(np.einsum("rjj->rj", state.cov))
        rect = (ndtr((hi - means) / sd) - ndtr((lo - means) / sd)).prod(axis=1)
        return float(t @ rect), 0.0

    if mc_draws < 1:
        raise ValueError("mc_draws must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    n_pairs = (mc_draws + 1) // 2
    rect = np.empty(n_z)
    rect_se = np.empty(n_z)
    for r in range(n_z):
        L = np.linalg.cholesky(state.cov[r])
        eps = rng.standard_normal((n_pairs, model.q)) @ L.T
        inside_p = np.all((means[r] + eps > lo) & (means[r] + eps <= hi), axis=1)
        inside_m = np.all((means[r] - eps > lo) & (means[r] - eps <= hi), axis=1)
        pair_means = 0.5 * (inside_p + inside_m)
        rect[r] = pair_means.mean()
        rect_se[r] = pair_means.std(ddof=1) / np.sqrt(n_pairs) if n_pairs > 1 else 0.5
    return float(t @ rect), float(np.sqrt((t**2) @ (rect_se**2)))


def hellinger(p, q, threshold=0.0):
    """Hellinger distance sqrt(1 - sum sqrt(p'q')) after restricting to cells
    where the reference table p has mass >= threshold and renormalizing both."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    kept = [c for c, v in p.probs.items() if v >= threshold and v > 0]
    if not kept:
        raise ValueError("no cells remain after thresholding the reference table")
    p_kept = np.array([p.probs[c] for c in kept])
    q_kept = np.array([q.probs.get(c, 0.0) for c in kept])
    p_kept = p_kept / p_kept.sum()
    q_total = q_kept.sum()
    if q_total == 0:
        return 1.0
    q_kept = q_kept / q_total
    bc = np.sqrt(p_kept * q_kept).sum()
    return float(np.sqrt(max(0.0, 1.0 - bc)))


def marginal_cells(schemas, columns=None, nonredundant=True):
    """Univariate estimand cells ((col, level),); level 1 dropped when
    nonredundant (the reference convention used for reporting)."""
    if columns is None:
        columns = range(len(schemas))
    start = 2 if nonredundant else 1
    return [((j, v),) for j in columns for v in range(start, schemas[j].levels + 1)]


def bivariate_cells(schemas, pairs=None, nonredundant=True):
    """Bivariate estimand cells ((col_i, level), (col_j, level)) over variable pairs."""
    if pairs is None:
        p = len(schemas)
        pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    start = 2 if nonredundant else 1
    cells = []
    for i, j in pairs:
        for vi in range(start, schemas[i].levels + 1):
            for vj in range(start, schemas[j].levels + 1):
                cells.append(((i, vi), (j, vj)))
    return cells


def empirical_cell_probs(data, cells):
    """Relative frequency of each requested cell; errors on masked cells.

    A cell is a tuple of (column, level) pairs; its frequency is the fraction
    of rows matching every pair.
    """
    if not data.is_complete():
        raise DataValidationError("empirical cell probabilities require a completed dataset")
    return _cell_probs_from_values(data.values, cells)


def _cell_probs_from_values(values, cells):
    n = values.shape[0]
    tables = {}
    out = np.empty(len(cells))
    for k, cell in enumerate(cells):
        cols = tuple(c for c, _ in cell)
        if cols not in tables:
            sizes = [int(values[:, c].max()) + 1 for c in cols]
            flat = np.zeros(1, dtype=np.int64)
            for c, size in zip(cols, sizes):
                flat = flat * size + values[:, c]
            tables[cols] = (np.bincount(flat, minlength=int(np.prod(sizes))), sizes)
        table, sizes = tables[cols]
        idx = 0
        for (c, v), size in zip(cell, sizes):
            if v >= size:  # level never observed in the data
                idx = None
                break
            idx = idx * size + v
        out[k] = 0.0 if idx is None else table[idx] / n
    return out


def empirical_joint_table(data, columns=None):
    """Sparse CellTable of observed joint frequencies over the given columns."""
    if not data.is_complete():
        raise DataValidationError("joint tables require a completed dataset")
    values = data.values if columns is None else data.values[:, list(columns)]
    uniq, counts = np.unique(values, axis=0, return_counts=True)
    return CellTable.from_counts(uniq, counts)


def enumerate_covariate_rows(model):
    """All covariate-code combinations, shape (prod levels, n_covariates)."""
    levels = [model.schemas[j].levels for j in model.x_idx]
    size = int(np.prod(levels)) if levels else 1
    if size > 2_000_000:
        raise ValueError("covariate space too large to enumerate exactly")
    if not levels:
        return np.zeros((1, 0), dtype=int)
    grids = np.meshgrid(*[np.arange(1, L + 1) for L in levels], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _component_weights_all(model, state, x_rows):
    """_component_weights_at vectorized over covariate rows: (rows, n_z)."""
    w = state.weights
    n_nom = len(model.nom_idx)
    C = x_rows.shape[0]
    a = np.ones((C, w.w_x.shape[0]))
    for jj in range(n_nom):
        a = a * state.focus_probs[jj][:, x_rows[:, jj] - 1].T
    A = a @ w.w_x
    if state.remainder_probs:
        b = np.ones((C, w.w_rem.shape[0]))
        for jj in range(len(model.rem_idx)):
            b = b * state.remainder_probs[jj][:, x_rows[:, n_nom + jj] - 1].T
        B = b @ w.w_rem
    else:
        B = np.ones((C, len(w.w_top)))
    return (A * B * w.w_top[None, :]) @ w.w_z.T


def model_marginal_table(model, state):
    """Exact model-implied marginal level probabilities for every variable.

    Ordinal focus marginals integrate the latent normal over the full
    covariate space, so the covariate level space must be enumerable.
    """
    w = state.weights
    out = [None] * len(model.schemas)
    x_marg = w.w_x @ w.w_top
    for jj, col in enumerate(model.nom_idx):
        out[col] = state.focus_probs[jj].T @ x_marg
    if model.has_remainder:
        rem_marg = w.w_rem @ w.w_top
        for jj, col in enumerate(model.rem_idx):
            out[col] = state.remainder_probs[jj].T @ rem_marg

    x_rows = enumerate_covariate_rows(model)
    T = _component_weights_all(model, state, x_rows)
    D = model.design_matrix(x_rows)
    for jj, col in enumerate(model.ord_idx):
        means = D @ state.coef[:, :, jj].T
        sds = np.sqrt(state.cov[:, jj, jj])
        cuts = np.concatenate([[-np.inf], model.cutoffs[jj], [np.inf]])
        levels = model.schemas[col].levels
        probs = np.empty(levels)
        for k in range(1, levels + 1):
            rect = ndtr((cuts[k] - means) / sds) - ndtr((cuts[k - 1] - means) / sds)
            probs[k - 1] = float((T * rect).sum())
        out[col] = probs
    return out
