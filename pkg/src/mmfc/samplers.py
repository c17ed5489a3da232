"""Vectorized sampling routines for truncated normals and inverse-Wishart matrices."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri


def truncated_normal(rng, lo, hi, mean, sd):
    """Draws from N(mean, sd^2) restricted to (lo, hi], elementwise.

    Inverse-CDF sampling with reflection of right-tail intervals onto the
    left tail, where the normal CDF keeps full precision.
    """
    lo, hi, mean, sd = np.broadcast_arrays(lo, hi, mean, sd)
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    flip = a > 0
    aa = np.where(flip, -b, a)
    bb = np.where(flip, -a, b)
    pa = ndtr(aa)
    pb = ndtr(bb)
    u = rng.random(a.shape)
    with np.errstate(invalid="ignore"):
        z = ndtri(pa + u * (pb - pa))
    # intervals beyond the representable left tail collapse to the bound
    z = np.where(pb <= 0, bb, z)
    z = np.clip(z, aa, bb)
    z = np.where(flip, -z, z)
    return mean + sd * z


def inverse_wishart(rng, dof, scale):
    """One draw from the inverse-Wishart with the usual sum-of-squares scale
    parameterization (mean = scale / (dof - q - 1) for dof > q + 1).

    Bartlett construction: with A the lower Bartlett factor of a
    Wishart(dof, I) draw and C = chol(scale), the draw is T'T for
    T = A^{-1} C'.
    """
    scale = np.asarray(scale, dtype=float)
    q = scale.shape[0]
    if dof <= q - 1:
        raise ValueError(f"inverse-Wishart needs dof > {q - 1}")
    A = np.zeros((q, q))
    A[np.diag_indices(q)] = np.sqrt(rng.chisquare(dof - np.arange(q)))
    if q > 1:
        A[np.tril_indices(q, -1)] = rng.standard_normal(q * (q - 1) // 2)
    C = np.linalg.cholesky(scale)
    T = np.linalg.solve(A, C.T)
    return T.T @ T
