"""Multiple-imputation orchestration and combining rules for pooled inference."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .density import empirical_cell_probs
from .gibbs import run_chain


@dataclass
class MIEstimate:
    """Pooled point estimate and variance decomposition across m imputations.

    ``t_m = (1 + 1/m) b_m + u_bar``; the reference distribution is t with
    ``nu_m = (m - 1)(1 + u_bar / ((1 + 1/m) b_m))^2`` degrees of freedom,
    falling back to the normal when the between-imputation variance is zero.
    """

    q_bar: float
    b_m: float
    u_bar: float
    t_m: float
    nu_m: float
    m: int
    normal_reference: bool = False


def pool_estimates(q, u):
    """Combine per-imputation point estimates q and variance estimates u."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    m = len(q)
    if m < 2 or len(u) != m:
        raise ValueError("pooling requires m >= 2 aligned estimates")
    if np.any(u < 0):
        raise ValueError("within-imputation variances must be nonnegative")
    q_bar = q.mean()
    b_m = ((q - q_bar) ** 2).sum() / (m - 1)
    u_bar = u.mean()
    t_m = (1.0 + 1.0 / m) * b_m + u_bar
    if b_m == 0.0:
        return MIEstimate(q_bar, 0.0, u_bar, t_m, np.inf, m, normal_reference=True)
    nu_m = (m - 1) * (1.0 + u_bar / ((1.0 + 1.0 / m) * b_m)) ** 2
    return MIEstimate(q_bar, b_m, u_bar, t_m, nu_m, m)


def mi_interval(est, level=0.95):
    """Two-sided interval q_bar +/- quantile * sqrt(t_m); endpoints are not
    clamped to [0, 1]."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    tail = 0.5 * (1.0 + level)
    if est.normal_reference or np.isinf(est.nu_m):
        quant = stats.norm.ppf(tail)
    else:
        quant = stats.t.ppf(tail, est.nu_m)
    half = quant * np.sqrt(est.t_m)
    return est.q_bar - half, est.q_bar + half


def cell_estimates(completed, cells):
    """Pooled estimates of cell probabilities across completed datasets,
    with u = q(1 - q)/n per imputation."""
    if len(completed) < 2:
        raise ValueError("need at least two completed datasets")
    n = completed[0].n
    names = completed[0].names
    for d in completed[1:]:
        if d.n != n or d.names != names:
            raise ValueError("completed datasets disagree on size or schema")
    Q = np.stack([empirical_cell_probs(d, cells) for d in completed])
    U = Q * (1.0 - Q) / n
    return [pool_estimates(Q[:, k], U[:, k]) for k in range(len(cells))]


def generate_imputations(data, config, options):
    """Run the chain and return its m saved completed datasets in emission order."""
    return run_chain(data, config, options).imputations


def cell_label(cell, names):
    return "&".join(f"{names[c]}={v}" for c, v in cell)


def write_pooled_report(path, cells, names, estimates, level=0.95):
    """CSV report: one row per cell with q_bar, t_m, nu_m, and the interval."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "q_bar", "t_m", "nu_m", "lower", "upper"])
        for cell, est in zip(cells, estimates):
            lo, hi = mi_interval(est, level)
            writer.writerow([
                cell_label(cell, names),
                repr(float(est.q_bar)), repr(float(est.t_m)), repr(float(est.nu_m)),
                repr(float(lo)), repr(float(hi)),
            ])
