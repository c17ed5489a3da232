"""Full-conditional updates and the MCMC chain driver, with within-chain imputation.

Sweep order is fixed: latent normals -> allocations -> component parameters ->
stick weights and concentrations -> imputation of masked cells.  Likelihood
terms are evaluated in log space with max-subtraction before exponentiation.
All randomness flows through a single numpy Generator per chain, so a seed
fully determines the output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import MAX_STICK, Model, MixtureWeights, init_state, sample_dirichlet_rows
from .samplers import inverse_wishart, truncated_normal

LOG_2PI = float(np.log(2.0 * np.pi))


class ChainError(RuntimeError):
    """An update failed; the message carries the sweep index."""


@dataclass
class ChainOptions:
    """Schedule and reproducibility knobs for one chain."""

    burn_in: int = 0
    thin: int = 1
    m: int = 1
    seed: int = 0
    ppc_snapshots: int = 0
    track_log_joint: bool = False

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.m < 1:
            raise ValueError("need burn_in >= 0, thin >= 1, m >= 1")
        if self.seed is None:
            raise ValueError("an explicit seed is required")


@dataclass
class SweepDiagnostics:
    sweep: int
    occupied_top: int
    occupied_z: int
    occupied_x: int
    occupied_rem: int
    alpha_top: float
    alpha_z: float
    alpha_x: float
    alpha_rem: float
    log_joint: float = None


@dataclass
class ChainRecord:
    """Saved imputations, per-sweep diagnostics, and optional parameter snapshots."""

    imputations: list
    diagnostics: list
    snapshots: list = field(default_factory=list)
    snapshot_sweeps: list = field(default_factory=list)
    options: ChainOptions = None

    def diagnostics_dict(self):
        keys = ("occupied_top", "occupied_z", "occupied_x", "occupied_rem",
                "alpha_top", "alpha_z", "alpha_x", "alpha_rem")
        out = {k: [getattr(d, k) for d in self.diagnostics] for k in keys}
        if self.options is not None and self.options.track_log_joint:
            out["log_joint"] = [d.log_joint for d in self.diagnostics]
        return out


def _sample_rows_log(rng, logw):
    """Draw one categorical index per row of a log-weight matrix."""
    shifted = logw - logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(shifted.max(axis=1))):
        raise ChainError("all candidate weights vanished in a categorical draw")
    w = np.exp(shifted)
    cdf = np.cumsum(w, axis=1)
    u = rng.random(logw.shape[0]) * cdf[:, -1]
    return (cdf < u[:, None]).sum(axis=1)


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def _ordinal_bounds(model, data, jj):
    """Per-row truncation interval for latent coordinate jj; infinite when masked."""
    col = model.ord_idx[jj]
    cuts = model.cutoffs[jj]
    y = np.clip(data.values[:, col], 1, None)
    observed = ~data.mask[:, col]
    lo_tab = np.concatenate([[-np.inf], cuts])
    hi_tab = np.concatenate([cuts, [np.inf]])
    lo = np.where(observed, lo_tab[y - 1], -np.inf)
    hi = np.where(observed, hi_tab[y - 1], np.inf)
    return lo, hi


def _cov_terms(cov):
    """Batched inverses and log determinants of the component covariances."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ChainError("a component covariance is not positive definite") from exc
    logdet = 2.0 * np.log(np.einsum("rjj->rj", chol)).sum(axis=1)
    return np.linalg.inv(cov), logdet


def update_latent_z(state, model, data, rng, D=None):
    """Coordinate-wise truncated-normal refresh of the latent continuous block."""
    if D is None:
        D = model.design_matrix(state.completed[:, model.x_idx])
    q = model.q
    mu = np.einsum("nd,ndq->nq", D, state.coef[state.h_z])
    prec, _ = _cov_terms(state.cov)
    G = prec[state.h_z]
    E = state.z - mu
    for jj in range(q):
        gjj = G[:, jj, jj]
        cond_sd = np.sqrt(1.0 / gjj)
        cross = (E * G[:, :, jj]).sum(axis=1) - E[:, jj] * gjj
        cond_mu = mu[:, jj] - cross / gjj
        lo, hi = _ordinal_bounds(model, data, jj)
        state.z[:, jj] = truncated_normal(rng, lo, hi, cond_mu, cond_sd)
        E[:, jj] = state.z[:, jj] - mu[:, jj]
    return state.z


def _normal_logdens_by_component(z_rows, mu_rows, cov, labels=None, cov_terms=None):
    """Row-wise multivariate-normal log densities.

    With ``labels`` None: (n, n_components) matrix of densities under every
    component (``mu_rows`` is (n_components, n, q)).  With ``labels``: a
    length-n vector under each row's own component.
    """
    q = z_rows.shape[1]
    inv, logdet = cov_terms if cov_terms is not None else _cov_terms(cov)
    if labels is None:
        E = z_rows[None, :, :] - mu_rows
        quad = np.einsum("rnq,rqk,rnk->rn", E, inv, E)
        return (-0.5 * (q * LOG_2PI + logdet[:, None] + quad)).T
    E = z_rows - mu_rows
    G = inv[labels]
    quad = np.einsum("nq,nqk,nk->n", E, G, E)
    return -0.5 * (q * LOG_2PI + logdet[labels] + quad)


def _top_alloc_logw(state, model):
    w = state.weights
    logw = _log(w.w_top)[None, :] + _log(w.w_z)[state.h_z, :] + _log(w.w_x)[state.h_x, :]
    if model.has_remainder:
        logw = logw + _log(w.w_rem)[state.h_rem, :]
    return logw


def _z_alloc_logw(state, model, D):
    n_z = model.config.n_z
    mu_all = np.einsum("nd,rdq->rnq", D, state.coef)
    logdens = _normal_logdens_by_component(state.z, mu_all, state.cov)
    return _log(state.weights.w_z)[:, state.h_top].T + logdens


def _x_alloc_logw(state, model):
    logw = _log(state.weights.w_x)[:, state.h_top].T
    for jj, col in enumerate(model.nom_idx):
        codes = state.completed[:, col]
        logw = logw + _log(state.focus_probs[jj])[:, codes - 1].T
    return logw


def _rem_alloc_logw(state, model):
    logw = _log(state.weights.w_rem)[:, state.h_top].T
    for jj, col in enumerate(model.rem_idx):
        codes = state.completed[:, col]
        logw = logw + _log(state.remainder_probs[jj])[:, codes - 1].T
    return logw


def update_allocations(state, model, data, rng, D=None):
    """Refresh the four allocation families from their categorical full conditionals."""
    if D is None:
        D = model.design_matrix(state.completed[:, model.x_idx])
    state.h_top = _sample_rows_log(rng, _top_alloc_logw(state, model))
    state.h_z = _sample_rows_log(rng, _z_alloc_logw(state, model, D))
    state.h_x = _sample_rows_log(rng, _x_alloc_logw(state, model))
    if model.has_remainder:
        state.h_rem = _sample_rows_log(rng, _rem_alloc_logw(state, model))
    return state.h_top, state.h_z, state.h_x, state.h_rem


def _draw_coef(state, model, rng, r, Dr, Zr, cov_inv):
    """Gaussian full conditional of vec(coef_r); empty components fall back to the prior."""
    d, q = model.d, model.q
    tau2 = state.coef_prior_scale
    b0 = state.coef_prior_mean
    if Dr.shape[0] == 0:
        return b0 + rng.standard_normal((d, q)) * np.sqrt(tau2)
    G = Dr.T @ Dr
    P = np.kron(cov_inv, G)
    P[np.diag_indices_from(P)] += np.repeat(1.0 / tau2, d)
    rhs = (b0 / tau2[None, :] + Dr.T @ Zr @ cov_inv).T.ravel()
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise ChainError(f"posterior precision for component {r} is ill-conditioned") from exc
    # draw = P^{-1} rhs + L^{-T} xi, collapsed into two triangular solves
    vec = np.linalg.solve(L.T, np.linalg.solve(L, rhs) + rng.standard_normal(d * q))
    return vec.reshape((d, q), order="F")


def update_component_params(state, model, data, rng, D=None):
    """Conjugate refresh of regression coefficients, covariances, and multinomial kernels."""
    if D is None:
        D = model.design_matrix(state.completed[:, model.x_idx])
    cfg = model.config
    cov_inv, _ = _cov_terms(state.cov)
    for r in range(cfg.n_z):
        rows = state.h_z == r
        Dr = D[rows]
        Zr = state.z[rows]
        state.coef[r] = _draw_coef(state, model, rng, r, Dr, Zr, cov_inv[r])
        E = Zr - Dr @ state.coef[r]
        scale = model.iw_scale + E.T @ E
        state.cov[r] = inverse_wishart(rng, model.iw_dof + Dr.shape[0], scale)

    for jj, col in enumerate(model.nom_idx):
        L = model.schemas[col].levels
        counts = np.bincount(state.h_x * L + state.completed[:, col] - 1, minlength=cfg.n_x * L)
        counts = counts.reshape(cfg.n_x, L)
        state.focus_probs[jj] = sample_dirichlet_rows(rng, model.focus_conc[jj][None, :] + counts)
    for jj, col in enumerate(model.rem_idx):
        L = model.schemas[col].levels
        counts = np.bincount(state.h_rem * L + state.completed[:, col] - 1, minlength=cfg.n_rem * L)
        counts = counts.reshape(cfg.n_rem, L)
        state.remainder_probs[jj] = sample_dirichlet_rows(rng, model.remainder_conc[jj][None, :] + counts)

    if cfg.hierarchical_coef_prior:
        _update_coef_prior(state, model, rng)
    return state.coef, state.cov, state.focus_probs, state.remainder_probs


def _update_coef_prior(state, model, rng):
    """Conjugate hierarchical refresh of the coefficient prior mean and scales."""
    cfg = model.config
    n_z, d = cfg.n_z, model.d
    v0 = cfg.coef_mean_prior_var
    a0, b0 = cfg.coef_scale_prior
    coef_sum = state.coef.sum(axis=0)
    for j in range(model.q):
        prec = 1.0 / v0 + n_z / state.coef_prior_scale[j]
        mean = (coef_sum[:, j] / state.coef_prior_scale[j]) / prec
        state.coef_prior_mean[:, j] = mean + rng.standard_normal(d) / np.sqrt(prec)
        ss = ((state.coef[:, :, j] - state.coef_prior_mean[None, :, j]) ** 2).sum()
        state.coef_prior_scale[j] = (b0 + 0.5 * ss) / rng.gamma(a0 + 0.5 * n_z * d)


def _stick_posteriors(counts, alpha, rng):
    """Conjugate beta draws for one stick family given per-component counts.

    ``counts`` is (K,) or (K, n_top); returns sticks with terminal entry 1.
    """
    tail = counts[::-1].cumsum(axis=0)[::-1] - counts
    v = rng.beta(1.0 + counts[:-1], alpha + tail[:-1])
    v = np.minimum(v, MAX_STICK)
    ones = np.ones((1,) + counts.shape[1:])
    return np.concatenate([v.reshape((-1,) + counts.shape[1:]), ones], axis=0).reshape(counts.shape)


def _draw_alpha(v_free, shape, rate, rng):
    """Gamma full conditional of a concentration given its non-terminal sticks."""
    logs = np.log1p(-np.minimum(v_free, MAX_STICK))
    return rng.gamma(shape + v_free.size, 1.0 / (rate - logs.sum()))


def update_weights(state, model, rng):
    """Refresh sticks from their beta full conditionals, then the concentrations."""
    cfg = model.config
    a, b = cfg.alpha_shape, cfg.alpha_rate
    w = state.weights

    n_top = np.bincount(state.h_top, minlength=cfg.n_top).astype(float)
    v_top = _stick_posteriors(n_top, w.alpha_top, rng)
    alpha_top = _draw_alpha(v_top[:-1], a, b, rng)

    n_z = np.bincount(state.h_z * cfg.n_top + state.h_top, minlength=cfg.n_z * cfg.n_top)
    n_z = n_z.reshape(cfg.n_z, cfg.n_top).astype(float)
    v_z = _stick_posteriors(n_z, w.alpha_z, rng)
    alpha_z = _draw_alpha(v_z[:-1], a, b, rng)

    n_x = np.bincount(state.h_x * cfg.n_top + state.h_top, minlength=cfg.n_x * cfg.n_top)
    n_x = n_x.reshape(cfg.n_x, cfg.n_top).astype(float)
    v_x = _stick_posteriors(n_x, w.alpha_x, rng)
    alpha_x = _draw_alpha(v_x[:-1], a, b, rng)

    v_rem, alpha_rem = None, None
    if model.has_remainder:
        n_rem = np.bincount(state.h_rem * cfg.n_top + state.h_top, minlength=cfg.n_rem * cfg.n_top)
        n_rem = n_rem.reshape(cfg.n_rem, cfg.n_top).astype(float)
        v_rem = _stick_posteriors(n_rem, w.alpha_rem, rng)
        alpha_rem = _draw_alpha(v_rem[:-1], a, b, rng)

    state.weights = MixtureWeights(v_top, v_z, v_x, v_rem, alpha_top, alpha_z, alpha_x, alpha_rem)
    return state.weights


def _impute_categorical_column(state, model, data, rng, col, kernel_probs, kernel_labels):
    """Redraw one masked nominal/remainder column from its categorical full conditional."""
    rows = np.flatnonzero(data.mask[:, col])
    if rows.size == 0:
        return
    L = model.schemas[col].levels
    m = rows.size
    k = int(np.flatnonzero(model.x_idx == col)[0])

    x_rep = np.tile(state.completed[rows][:, model.x_idx], (L, 1))
    for v in range(L):
        x_rep[v * m:(v + 1) * m, k] = v + 1
    Dv = model.design_matrix(x_rep)
    labels_rep = np.tile(state.h_z[rows], L)
    mu = np.einsum("nd,ndq->nq", Dv, state.coef[labels_rep])
    z_rep = np.tile(state.z[rows], (L, 1))
    logn = _normal_logdens_by_component(z_rep, mu, state.cov, labels_rep).reshape(L, m).T

    logw = _log(kernel_probs[kernel_labels[rows]]) + logn
    draws = _sample_rows_log(rng, logw) + 1
    state.completed[rows, col] = draws


def impute_missing(state, model, data, rng):
    """Redraw every masked cell, one variable at a time in canonical column order.

    Masked ordinal focus values follow deterministically from the current
    latent normals through the cutoffs; masked covariates are drawn from
    their kernel probabilities tilted by the latent-normal regression.
    """
    for jj, col in enumerate(model.ord_idx):
        rows = data.mask[:, col]
        if rows.any():
            cuts = model.cutoffs[jj]
            state.completed[rows, col] = np.searchsorted(cuts, state.z[rows, jj], side="left") + 1
    for jj, col in enumerate(model.nom_idx):
        _impute_categorical_column(state, model, data, rng, col, state.focus_probs[jj], state.h_x)
    for jj, col in enumerate(model.rem_idx):
        _impute_categorical_column(state, model, data, rng, col, state.remainder_probs[jj], state.h_rem)
    return state.completed


def log_joint(state, model, D=None):
    """Complete-data log joint of latents, current imputations, and allocations."""
    if D is None:
        D = model.design_matrix(state.completed[:, model.x_idx])
    w = state.weights
    mu = np.einsum("nd,ndq->nq", D, state.coef[state.h_z])
    total = _normal_logdens_by_component(state.z, mu, state.cov, state.h_z).sum()
    total += _log(w.w_top)[state.h_top].sum()
    total += _log(w.w_z)[state.h_z, state.h_top].sum()
    total += _log(w.w_x)[state.h_x, state.h_top].sum()
    for jj, col in enumerate(model.nom_idx):
        total += _log(state.focus_probs[jj])[state.h_x, state.completed[:, col] - 1].sum()
    if model.has_remainder:
        total += _log(w.w_rem)[state.h_rem, state.h_top].sum()
        for jj, col in enumerate(model.rem_idx):
            total += _log(state.remainder_probs[jj])[state.h_rem, state.completed[:, col] - 1].sum()
    return float(total)


def snapshot_schedule(burn_in, thin, m, count):
    """Deterministic sweep indices for parameter snapshots: the imputation
    emission sweeps plus evenly spaced extras until ``count`` is reached."""
    emissions = [burn_in + thin * (k + 1) for k in range(m)]
    if count <= 0:
        return []
    if count <= m:
        picks = np.unique(np.round(np.linspace(0, m - 1, count)).astype(int))
        return [emissions[i] for i in picks]
    window_lo, window_hi = burn_in + 1, emissions[-1]
    chosen = set(emissions)
    for c in np.unique(np.round(np.linspace(window_lo, window_hi, count)).astype(int)):
        if len(chosen) >= count:
            break
        chosen.add(int(c))
    sweep = window_lo
    while len(chosen) < count and sweep <= window_hi:
        chosen.add(sweep)
        sweep += 1
    return sorted(chosen)


def _sweep(state, model, data, rng):
    D = model.design_matrix(state.completed[:, model.x_idx])
    update_latent_z(state, model, data, rng, D)
    update_allocations(state, model, data, rng, D)
    update_component_params(state, model, data, rng, D)
    update_weights(state, model, rng)
    impute_missing(state, model, data, rng)


def run_chain(data, model_or_config, options, callback=None):
    """Run one chain; returns saved imputations, diagnostics, and snapshots.

    Emits the current completed dataset every ``thin`` sweeps after
    ``burn_in`` until ``m`` are collected.  Deterministic given the seed.
    """
    if isinstance(model_or_config, Model):
        model = model_or_config
    else:
        model = Model(data.schemas, model_or_config)
    rng = np.random.default_rng(np.random.SeedSequence(options.seed))
    state = init_state(model, data, rng)

    total = options.burn_in + options.thin * options.m
    emission = {options.burn_in + options.thin * (k + 1) for k in range(options.m)}
    snap_sweeps = snapshot_schedule(options.burn_in, options.thin, options.m, options.ppc_snapshots)
    snap_set = set(snap_sweeps)

    record = ChainRecord([], [], [], snap_sweeps, options)
    top_hit = {"top": False, "z": False, "x": False, "rem": False}
    for sweep in range(1, total + 1):
        try:
            _sweep(state, model, data, rng)
        except (ChainError, np.linalg.LinAlgError) as exc:
            raise ChainError(f"sweep {sweep}: {exc}") from exc
        cfg = model.config
        occ_rem = int(len(np.unique(state.h_rem))) if model.has_remainder else 0
        diag = SweepDiagnostics(
            sweep,
            int(len(np.unique(state.h_top))), int(len(np.unique(state.h_z))),
            int(len(np.unique(state.h_x))), occ_rem,
            float(state.weights.alpha_top), float(state.weights.alpha_z),
            float(state.weights.alpha_x),
            float(state.weights.alpha_rem) if model.has_remainder else None,
            log_joint(state, model) if options.track_log_joint else None,
        )
        record.diagnostics.append(diag)
        top_hit["top"] |= bool((state.h_top == cfg.n_top - 1).any())
        top_hit["z"] |= bool((state.h_z == cfg.n_z - 1).any())
        top_hit["x"] |= bool((state.h_x == cfg.n_x - 1).any())
        if model.has_remainder:
            top_hit["rem"] |= bool((state.h_rem == cfg.n_rem - 1).any())
        if callback is not None:
            callback(sweep, state, diag)
        if sweep in snap_set:
            record.snapshots.append(state.copy())
        if sweep in emission:
            record.imputations.append(data.with_values(state.completed))

    hit = [k for k, v in top_hit.items() if v]
    if hit:
        warnings.warn(
            f"allocation families {hit} occupied their top truncation index; "
            "consider raising the truncation levels",
            RuntimeWarning,
            stacklevel=2,
        )
    return record
