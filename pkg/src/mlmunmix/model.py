"""Multilinear mixing forward model, residuals and the global objective.

A pixel with linear term y = E a and interaction probability p has the
noiseless closed-form spectrum x_j = (1 - p) y_j / (1 - p y_j), obtained by
summing the geometric series over all interaction orders.  The solver does
not fit that rational form directly; it minimizes the bilinear data-fit

    L(E, A, P) = sum_i || x_i - (1 - p_i) y_i - p_i y_i * x_i ||^2

whose residual is linear in each block.  Setting p = 0 recovers the linear
mixing model in both views.
"""

import numpy as np

from .core import asarray64

# closed form has a pole at p * y = 1; refuse slightly before it
DIVERGENCE_TOL = 1e-12


class DivergenceError(FloatingPointError):
    """The interaction series does not converge for the requested inputs."""


def mlm_from_linear(y, p: float) -> np.ndarray:
    """Closed-form multilinear spectrum from a linear term y and scalar p."""
    y = np.asarray(y, dtype=np.float64)
    peak = p * y.max() if y.size else 0.0
    if peak >= 1.0 - DIVERGENCE_TOL:
        raise DivergenceError(
            f"interaction series diverges: p * max(y) = {peak!r} >= 1"
        )
    return (1.0 - p) * y / (1.0 - p * y)


def mlm_forward(E, a, p: float) -> np.ndarray:
    """Noiseless model spectrum for one pixel: forward of y = E a at p."""
    return mlm_from_linear(asarray64(E) @ asarray64(a), p)


def mlm_forward_columns(E, A, P) -> np.ndarray:
    """Closed-form spectra for all pixels at once (d x n).

    Raises DivergenceError naming the first offending pixel.
    """
    Y = asarray64(E) @ asarray64(A)
    P = asarray64(P)
    peaks = P * Y.max(axis=0)
    bad = np.flatnonzero(peaks >= 1.0 - DIVERGENCE_TOL)
    if bad.size:
        raise DivergenceError(
            f"interaction series diverges at pixel {bad[0]}: "
            f"p * max(y) = {peaks[bad[0]]!r} >= 1"
        )
    return (1.0 - P)[None, :] * Y / (1.0 - P[None, :] * Y)


def mlm_residual(x, y, p: float) -> np.ndarray:
    """Bilinear residual r = x - (1 - p) y - p (y * x) for one pixel.

    This is the residual of the solver objective, not of the rational
    closed form; it vanishes exactly on closed-form data.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs y {y.shape}")
    return x - (1.0 - p) * y - p * (y * x)


def interaction_coefficients(X, P) -> np.ndarray:
    """Per-entry factors c_ji = (1 - p_i) + p_i x_ji (d x n).

    The bilinear model spectrum is c * (E A); the modified endmember matrix
    of pixel i is E scaled row-wise by column i of this array.
    """
    X = asarray64(X)
    P = asarray64(P)
    return (1.0 - P)[None, :] + P[None, :] * X


def modified_endmembers(E, x, p: float) -> np.ndarray:
    """Per-pixel endmember matrix whose ordinary least squares fit of x
    equals the bilinear objective: row j of E scaled by (1 - p) + p x_j."""
    E = asarray64(E)
    x = np.asarray(x, dtype=np.float64)
    if E.shape[0] != x.shape[0]:
        raise ValueError(f"E has {E.shape[0]} bands but x has {x.shape[0]}")
    return E * ((1.0 - p) + p * x)[:, None]


def objective(X, E, A, P) -> float:
    """Global data-fit L(E, A, P): sum over pixels of squared residuals.

    The cross-pixel reduction runs over the fixed pixel order, so repeated
    evaluations are bit-for-bit reproducible.
    """
    X = asarray64(X)
    E = asarray64(E)
    A = asarray64(A)
    P = asarray64(P)
    if E.shape[0] != X.shape[0] or E.shape[1] != A.shape[0] \
            or A.shape[1] != X.shape[1] or P.shape != (X.shape[1],):
        raise ValueError(
            f"dimension mismatch: X {X.shape}, E {E.shape}, A {A.shape}, P {P.shape}"
        )
    C = (1.0 - P)[None, :] + P[None, :] * X
    R = X - C * (E @ A)
    per_pixel = np.einsum("ji,ji->i", R, R)
    return float(np.sum(per_pixel))
