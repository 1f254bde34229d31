"""Ground-truth synthetic scenes: smooth endmembers, uniform-simplex
abundances, per-pixel interaction probabilities, closed-form mixing and
additive white Gaussian noise at a target SNR.

Randomness is counter-based: every pixel owns a Philox stream keyed by
(seed, pixel index), so generation is bitwise reproducible and independent
of any parallel execution order.  SNR is defined as the total-energy ratio
||X_clean||_F^2 / (n d sigma^2) with sigma^2 the per-sample noise variance.
"""

from dataclasses import dataclass

import numpy as np

from .core import (
    AbundanceMatrix,
    EndmemberMatrix,
    HyperCube,
    TransitionProbabilities,
    asarray64,
)
from .metrics import sam
from .model import DivergenceError, mlm_from_linear

_U64 = (1 << 64) - 1

# minimum spectral angle between generated signatures, degrees
_MIN_PAIRWISE_SAM = 5.0
_MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class PLaw:
    """Distribution of the per-pixel interaction probability."""

    kind: str              # "uniform" | "constant" | "zero"
    value: float = 0.0     # used by "constant"

    @staticmethod
    def uniform01():
        return PLaw("uniform")

    @staticmethod
    def constant(c: float):
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"constant probability {c!r} outside [0, 1]")
        return PLaw("constant", float(c))

    @staticmethod
    def zero():
        return PLaw("zero")

    def __post_init__(self):
        if self.kind not in ("uniform", "constant", "zero"):
            raise ValueError(f"unknown probability law {self.kind!r}")


@dataclass(frozen=True)
class SceneSpec:
    """Complete description of one synthetic scene."""

    d: int
    m: int
    height: int
    width: int
    snr_db: float
    p_law: PLaw = PLaw("uniform")
    seed: int = 0
    endmember_source: str = "synthetic"   # "synthetic" | "provided"

    def __post_init__(self):
        if self.m > self.d:
            raise ValueError(f"more endmembers ({self.m}) than bands ({self.d})")
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be positive")
        if not np.isfinite(self.snr_db):
            raise ValueError("target SNR must be finite")
        if self.endmember_source not in ("synthetic", "provided"):
            raise ValueError(f"unknown endmember source {self.endmember_source!r}")

    @property
    def n_pixels(self):
        return self.height * self.width


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Everything needed to score an unmixing run on this scene."""

    e_true: EndmemberMatrix
    a_true: AbundanceMatrix
    p_true: TransitionProbabilities
    x_clean: HyperCube
    x_noisy: HyperCube
    sigma2: float            # realized per-sample noise variance
    sigma2_nominal: float    # variance used to scale the noise draw


def _pixel_rng(seed: int, pixel: int):
    return np.random.Generator(
        np.random.Philox(key=[seed & _U64, (pixel + 1) & _U64])
    )


def _endmember_rng(seed: int):
    return np.random.Generator(np.random.Philox(key=[seed & _U64, 0]))


def sample_simplex_uniform(m: int, seed: int, size: int = None):
    """Exact uniform draw(s) on the canonical simplex.

    Normalized standard exponentials give the flat Dirichlet.  Returns a
    length-m vector, or an (m x size) matrix when size is given.
    Deterministic per seed.
    """
    if m < 1:
        raise ValueError(f"dimension must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    g = rng.standard_exponential((m,) if size is None else (m, size))
    return g / g.sum(axis=0)


def synthetic_endmembers(d: int, m: int, seed: int) -> EndmemberMatrix:
    """m smooth, distinct spectra in [0.05, 0.95].

    Each signature is a sum of 3 to 6 Gaussian bumps over the band axis,
    rescaled into a seeded subrange of [0.05, 0.95].  Candidates closer
    than 5 degrees (spectral angle) to an accepted signature are rejected;
    after 1000 rejections the draw fails, which is practically unreachable
    for m <= 8 and d >= 50.
    """
    if m > d:
        raise ValueError(f"more endmembers ({m}) than bands ({d})")
    rng = _endmember_rng(seed)
    t = np.arange(d, dtype=np.float64)
    accepted = []
    for k in range(m):
        for _ in range(_MAX_REJECTIONS):
            n_bumps = int(rng.integers(3, 7))
            centers = rng.uniform(0.0, d, n_bumps)
            widths = rng.uniform(0.03, 0.15, n_bumps) * d
            amps = rng.uniform(0.2, 1.0, n_bumps)
            s = np.zeros(d)
            for c, w, a in zip(centers, widths, amps):
                s += a * np.exp(-0.5 * ((t - c) / w) ** 2)
            span = s.max() - s.min()
            if span < 1e-12:
                continue
            lo = rng.uniform(0.05, 0.35)
            hi = rng.uniform(0.55, 0.95)
            s = lo + (hi - lo) * (s - s.min()) / span
            if all(sam(s, prev) >= _MIN_PAIRWISE_SAM for prev in accepted):
                accepted.append(s)
                break
        else:
            raise RuntimeError(
                f"could not draw endmember {k + 1}/{m} within "
                f"{_MAX_REJECTIONS} attempts (d={d})"
            )
    return EndmemberMatrix(np.column_stack(accepted))


def generate_scene(spec: SceneSpec, e_provided=None) -> GroundTruth:
    """Draw a full scene: abundances, probabilities, clean spectra, noise.

    With a provided endmember matrix whose entries can reach 1, uniform
    probability draws are capped at 0.95 so no pixel can sit on the pole of
    the closed form; the stock synthetic endmembers stay below 0.95, so the
    full [0, 1) draw is safe there.
    """
    if spec.endmember_source == "provided":
        if e_provided is None:
            raise ValueError("spec asks for provided endmembers but none given")
        E = e_provided if isinstance(e_provided, EndmemberMatrix) \
            else EndmemberMatrix(asarray64(e_provided))
        if E.data.shape != (spec.d, spec.m):
            raise ValueError(
                f"provided endmembers are {E.data.shape}, "
                f"expected ({spec.d}, {spec.m})"
            )
    else:
        E = synthetic_endmembers(spec.d, spec.m, spec.seed)
    Ed = E.data

    p_cap = 1.0
    if spec.p_law.kind == "uniform" and Ed.max() >= 1.0 - 1e-12:
        p_cap = 0.95

    n = spec.n_pixels
    d, m = spec.d, spec.m
    A = np.empty((m, n))
    P = np.empty(n)
    Z = np.empty((d, n))
    for i in range(n):
        rng = _pixel_rng(spec.seed, i)
        g = rng.standard_exponential(m)
        A[:, i] = g / g.sum()
        if spec.p_law.kind == "uniform":
            P[i] = rng.random() * p_cap
        elif spec.p_law.kind == "constant":
            P[i] = spec.p_law.value
        else:
            P[i] = 0.0
        Z[:, i] = rng.standard_normal(d)

    Y = Ed @ A
    peaks = P * Y.max(axis=0)
    bad = np.flatnonzero(peaks >= 1.0 - 1e-12)
    if bad.size:
        raise DivergenceError(
            f"pixel {bad[0]} hits the series pole: p * max(y) = {peaks[bad[0]]!r}"
        )
    X_clean = (1.0 - P)[None, :] * Y / (1.0 - P[None, :] * Y)

    sigma2_nominal = float(np.sum(X_clean * X_clean)) / (
        n * d * 10.0 ** (spec.snr_db / 10.0)
    )
    noise = np.sqrt(sigma2_nominal) * Z
    X_noisy = X_clean + noise
    sigma2 = float(np.mean(noise * noise))

    grid = dict(height=spec.height, width=spec.width)
    return GroundTruth(
        e_true=E,
        a_true=AbundanceMatrix(A),
        p_true=TransitionProbabilities(P),
        x_clean=HyperCube(X_clean, **grid),
        x_noisy=HyperCube(X_noisy, **grid),
        sigma2=sigma2,
        sigma2_nominal=sigma2_nominal,
    )
