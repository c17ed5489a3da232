"""Posterior predictive checking: replicated datasets and imputed-vs-observed tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .schema import Dataset


def _sample_rows(rng, probs):
    """One categorical index per row of a probability matrix."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    return (cdf < u[:, None]).sum(axis=1)


def simulate_dataset(model, state, n, rng, return_state=False):
    """Draw a complete synthetic dataset of size n from the generative process:
    allocations, then covariates from their kernels, then latent normals and
    ordinal values through the cutoffs."""
    w = state.weights
    h_top = _sample_rows(rng, np.tile(w.w_top, (n, 1)))
    h_z = _sample_rows(rng, w.w_z.T[h_top])
    h_x = _sample_rows(rng, w.w_x.T[h_top])
    h_rem = _sample_rows(rng, w.w_rem.T[h_top]) if model.has_remainder else None

    values = np.zeros((n, len(model.schemas)), dtype=np.int64)
    for jj, col in enumerate(model.nom_idx):
        values[:, col] = _sample_rows(rng, state.focus_probs[jj][h_x]) + 1
    for jj, col in enumerate(model.rem_idx):
        values[:, col] = _sample_rows(rng, state.remainder_probs[jj][h_rem]) + 1

    D = model.design_matrix(values[:, model.x_idx])
    mu = np.einsum("nd,ndq->nq", D, state.coef[h_z])
    z = np.empty((n, model.q))
    for r in np.unique(h_z):
        rows = h_z == r
        L = np.linalg.cholesky(state.cov[r])
        z[rows] = mu[rows] + rng.standard_normal((int(rows.sum()), model.q)) @ L.T
    for jj, col in enumerate(model.ord_idx):
        values[:, col] = np.searchsorted(model.cutoffs[jj], z[:, jj], side="left") + 1

    dataset = Dataset(model.schemas, values, None)
    if not return_state:
        return dataset
    new_state = state.copy()
    new_state.completed = values.copy()
    new_state.z = z
    new_state.h_top, new_state.h_z, new_state.h_x, new_state.h_rem = h_top, h_z, h_x, h_rem
    return dataset, new_state


def replicate_datasets(record, model, n, count=25, rng=None):
    """One synthetic dataset per retained posterior parameter snapshot."""
    if len(record.snapshots) < count:
        raise ValueError(
            f"chain record holds {len(record.snapshots)} parameter snapshots but {count} are needed; "
            "rerun the chain with ppc_snapshots set"
        )
    if rng is None:
        rng = np.random.default_rng(0)
    return [simulate_dataset(model, snap, n, rng) for snap in record.snapshots[:count]]


@dataclass(frozen=True)
class PPCStatistic:
    """A cell frequency, optionally conditional on another cell.

    ``cell`` and ``given`` are tuples of (column, level) pairs; the statistic
    is the fraction of rows matching ``cell`` among rows matching ``given``.
    """

    cell: tuple
    given: tuple = ()

    def evaluate(self, values):
        keep = np.ones(values.shape[0], dtype=bool)
        for c, v in self.given:
            keep &= values[:, c] == v
        denom = int(keep.sum())
        if denom == 0:
            return np.nan
        hit = keep.copy()
        for c, v in self.cell:
            hit &= values[:, c] == v
        return hit.sum() / denom

    def label(self, names):
        base = "&".join(f"{names[c]}={v}" for c, v in self.cell)
        if not self.given:
            return base
        cond = "&".join(f"{names[c]}={v}" for c, v in self.given)
        return f"{base}|{cond}"


@dataclass
class PPCReport:
    """Replicated-data distribution and tail position per requested statistic."""

    labels: list
    estimates: list
    replicate_values: list
    tail_positions: list
    replicate_count: int = 0

    def to_dict(self):
        return {
            "replicate_count": self.replicate_count,
            "statistics": [
                {
                    "label": lab,
                    "estimate": est,
                    "tail_position": tail,
                    "replicates": reps,
                }
                for lab, est, tail, reps in zip(
                    self.labels, self.estimates, self.tail_positions, self.replicate_values
                )
            ],
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _tail_position(replicates, estimate):
    """Fraction of replicates below the estimate, ties counting half."""
    reps = np.asarray(replicates, dtype=float)
    reps = reps[~np.isnan(reps)]
    if reps.size == 0 or np.isnan(estimate):
        return np.nan
    below = (reps < estimate).sum()
    ties = (reps == estimate).sum()
    return float((below + 0.5 * ties) / reps.size)


def ppc_statistics(replicated, completed, specs):
    """Evaluate each statistic on every replicated dataset and pool the point
    estimate over the completed datasets."""
    names = replicated[0].names if replicated else completed[0].names
    for d in list(replicated) + list(completed):
        for c, v in {pair for s in specs for pair in tuple(s.cell) + tuple(s.given)}:
            if c >= d.p or not 1 <= v <= d.schemas[c].levels:
                raise ValueError(f"statistic references unknown column/level ({c}, {v})")
        break
    labels, estimates, rep_values, tails = [], [], [], []
    for spec in specs:
        reps = [spec.evaluate(d.values) for d in replicated]
        ests = [spec.evaluate(d.values) for d in completed]
        est = float(np.nanmean(ests)) if not np.all(np.isnan(ests)) else np.nan
        labels.append(spec.label(names))
        estimates.append(est)
        rep_values.append([float(r) for r in reps])
        tails.append(_tail_position(reps, est))
    return PPCReport(labels, estimates, rep_values, tails, replicate_count=len(replicated))


def imputed_vs_observed(data, completed):
    """Per variable: level frequencies among observed cells versus among
    imputed cells pooled over the completed datasets."""
    out = {}
    for j, s in enumerate(data.schemas):
        obs_rows = ~data.mask[:, j]
        obs_counts = np.bincount(data.values[obs_rows, j], minlength=s.levels + 1)[1:]
        imp_counts = np.zeros(s.levels, dtype=np.int64)
        miss_rows = data.mask[:, j]
        for d in completed:
            imp_counts += np.bincount(d.values[miss_rows, j], minlength=s.levels + 1)[1:]
        entry = {
            "levels": list(range(1, s.levels + 1)),
            "observed_counts": obs_counts.tolist(),
            "observed_freq": (obs_counts / obs_counts.sum()).tolist() if obs_counts.sum() else [],
            "imputed_counts": imp_counts.tolist(),
            "imputed_freq": (imp_counts / imp_counts.sum()).tolist() if imp_counts.sum() else [],
        }
        out[s.name] = entry
    return out
