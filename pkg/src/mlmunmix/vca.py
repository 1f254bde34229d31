"""Endmember initialization by vertex component analysis (VCA).

VCA treats endmembers as the vertices of the simplex enclosing the data
cloud and hunts them with iterative orthogonal-subspace projections onto
random directions.  It is a pure-pixel selector: every output signature is
an actual column of the input cube (clamped into [0, 1] afterwards so the
result is a valid endmember matrix).
"""

from dataclasses import dataclass

import numpy as np

from .core import EndmemberMatrix, HyperCube, asarray64

# singular values below this fraction of the largest count as zero
_RANK_RTOL = 1e-12


class RankDeficiencyError(ValueError):
    """The data does not span enough dimensions for the requested count."""


@dataclass(frozen=True)
class VcaConfig:
    """Settings for one extraction.

    m: number of endmembers to select.
    snr_estimate: optional SNR in dB; estimated from the data when None.
        It only switches the preprocessing between the projective scaling
        (high SNR) and the mean-removed PCA lift (low SNR).
    seed: seed for the random projection directions (default 0).
    """

    m: int
    snr_estimate: float = None
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"endmember count must be >= 1, got {self.m}")


def estimate_snr(X, mean, projected) -> float:
    """SNR estimate (dB) from the energy split between the principal
    subspace and its residual; +inf when the residual vanishes."""
    d, n = X.shape
    m = projected.shape[0]
    p_total = float(np.sum(X * X)) / n
    p_signal = float(np.sum(projected * projected)) / n + float(mean @ mean)
    noise = p_total - p_signal
    signal = p_signal - (m / d) * p_total
    if noise <= 0.0:
        return np.inf
    if signal <= 0.0:
        return -np.inf
    return 10.0 * np.log10(signal / noise)


def _effective_rank(M) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > s[0] * _RANK_RTOL))


def vca_with_indices(cube, cfg: VcaConfig):
    """Run VCA and return (EndmemberMatrix, selected pixel indices).

    ------- Input -------
    cube : HyperCube or (d x n) array, one pixel per column.
    cfg  : VcaConfig.

    ------- Output ------
    endmembers : EndmemberMatrix, the selected pixel columns clamped
                 into [0, 1].
    indices    : int array of the m selected pixel indices, in selection
                 order.

    Preprocessing follows the classic construction: estimate the SNR from
    the m-dimensional principal subspace unless one is supplied, then use
    the projective scaling y = x / <x, u> when the SNR exceeds
    15 + 10 log10(m) dB and the mean-removed PCA lift with a constant
    coordinate otherwise.  The main loop draws isotropic Gaussian
    directions from the configured seed, projects them orthogonally to the
    simplex vertices found so far and takes the pixel with the largest
    absolute projection.  Deterministic given the seed.

    Raises RankDeficiencyError when the data collapses below the subspace
    dimension the chosen path needs.
    """
    X = asarray64(cube)
    if X.ndim != 2:
        raise ValueError(f"expected a (bands x pixels) matrix, got shape {X.shape}")
    d, n = X.shape
    m = cfg.m
    if m > min(d, n):
        raise ValueError(f"cannot extract {m} endmembers from a {d}x{n} cube")

    mean = X.mean(axis=1)
    X0 = X - mean[:, None]

    if cfg.snr_estimate is None:
        Um = np.linalg.svd(X0 @ X0.T / n, hermitian=True)[0][:, :m]
        snr = estimate_snr(X, mean, Um.T @ X0)
    else:
        snr = float(cfg.snr_estimate)
    snr_threshold = 15.0 + 10.0 * np.log10(m)

    if snr > snr_threshold:
        # projective scaling of the raw data in the m-dim subspace
        if _effective_rank(X) < m:
            raise RankDeficiencyError(
                f"data rank below {m}; cannot span the projective subspace"
            )
        Ud = np.linalg.svd(X @ X.T / n, hermitian=True)[0][:, :m]
        x = Ud.T @ X
        if m == 1:
            index = int(np.argmax(x[0] ** 2))
            indices = np.array([index])
            return _wrap(X, indices), indices
        u = x.mean(axis=1)
        denom = x.T @ u
        # pixels far darker than typical carry no directional information;
        # dividing by their near-zero brightness would let pure noise win
        # the argmax, so they are taken out of the candidate set
        floor = 0.05 * np.median(np.abs(denom))
        dim = np.abs(denom) <= floor
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        y = x / denom[None, :]
        if dim.any() and not dim.all():
            y[:, dim] = 0.0
    else:
        # mean-removed PCA to m-1 dims, lifted with a constant coordinate
        if _effective_rank(X0) < m - 1:
            raise RankDeficiencyError(
                f"mean-removed data rank below {m - 1}; "
                "not enough independent pixels"
            )
        if m == 1:
            proj = np.linalg.svd(X0 @ X0.T / n, hermitian=True)[0][:, :1].T @ X0
            index = int(np.argmax(proj[0] ** 2))
            indices = np.array([index])
            return _wrap(X, indices), indices
        Ud = np.linalg.svd(X0 @ X0.T / n, hermitian=True)[0][:, : m - 1]
        x = Ud.T @ X0
        c = np.sqrt(np.max(np.sum(x * x, axis=0)))
        y = np.vstack([x, np.full((1, n), c)])

    rng = np.random.default_rng(cfg.seed)
    A = np.zeros((m, m))
    A[-1, 0] = 1.0
    indices = np.zeros(m, dtype=int)
    for i in range(m):
        f = None
        for _ in range(16):
            w = rng.standard_normal(m)
            f = w - A @ (np.linalg.pinv(A) @ w)
            norm = np.linalg.norm(f)
            if norm > 1e-12:
                f = f / norm
                break
        else:
            raise RankDeficiencyError(
                "projected subspace collapsed while drawing directions"
            )
        v = f @ y
        k = int(np.argmax(np.abs(v)))
        indices[i] = k
        A[:, i] = y[:, k]
    return _wrap(X, indices), indices


def _wrap(X, indices) -> EndmemberMatrix:
    return EndmemberMatrix(np.clip(X[:, indices], 0.0, 1.0))


def vca(cube, cfg: VcaConfig) -> EndmemberMatrix:
    """Initial endmember matrix from VCA (see :func:`vca_with_indices`)."""
    return vca_with_indices(cube, cfg)[0]
