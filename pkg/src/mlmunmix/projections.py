"""Exact Euclidean projections onto the canonical simplex and onto a box.

The simplex projection uses the finite sort/cumulative-sum/threshold
method: sort the entries in decreasing order, locate the largest prefix
whose running average keeps the shifted entries positive, subtract the
resulting threshold and clip at zero.  No iterative tolerance is involved;
the answer is exact up to rounding.
"""

import numpy as np

# points this close to feasible are left untouched, which makes repeated
# projection exactly idempotent; the displacement stays ~1e-12, far below
# any tolerance in the package
_FEASIBLE_RTOL = 1e-12


def _already_feasible(sums, mins):
    return (mins >= 0.0) & (np.abs(sums - 1.0) <= _FEASIBLE_RTOL * (1.0 + np.abs(sums)))


def project_simplex(v) -> np.ndarray:
    """Project a vector onto {a : a >= 0, sum(a) = 1}.

    Returns the unique minimizer of ||u - v||_2 over the simplex.
    Exactly idempotent: feasible-within-rounding inputs come back
    unchanged.  Ties at the threshold keep the component in the support
    (its value is exactly 0 only when strictly below the threshold).

    Raises ValueError on an empty vector or non-finite entries.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a vector with non-finite entries")
    if v.size == 1:
        return np.array([1.0])
    if _already_feasible(v.sum(), v.min()):
        return v.copy()

    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    # holds for every prefix up to the active-set size, fails after
    positive = u - (css - 1.0) / j > 0.0
    rho = np.nonzero(positive)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_simplex_columns(V) -> np.ndarray:
    """Column-wise simplex projection of an (m x n) matrix.

    Same algorithm and threshold rule as :func:`project_simplex` applied to
    every column independently.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError(f"expected an (m x n) matrix with m >= 1, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValueError("cannot project columns with non-finite entries")
    m = V.shape[0]
    if m == 1:
        return np.ones_like(V)
    feasible = _already_feasible(V.sum(axis=0), V.min(axis=0))

    U = np.sort(V, axis=0)[::-1]
    css = np.cumsum(U, axis=0)
    j = np.arange(1, m + 1)[:, None]
    positive = U - (css - 1.0) / j > 0.0
    # last True index per column
    rho = (m - 1) - np.argmax(positive[::-1], axis=0)
    theta = (np.take_along_axis(css, rho[None, :], axis=0)[0] - 1.0) / (rho + 1.0)
    out = np.maximum(V - theta[None, :], 0.0)
    if feasible.any():
        out[:, feasible] = V[:, feasible]
    return out


def project_box(v, lo: float, hi: float) -> np.ndarray:
    """Element-wise clamp of a vector or matrix into [lo, hi].

    Raises ValueError when lo > hi.
    """
    if lo > hi:
        raise ValueError(f"empty box: lo = {lo!r} > hi = {hi!r}")
    return np.clip(np.asarray(v, dtype=np.float64), lo, hi)
