"""Dense data model for hyperspectral unmixing.

Conventions shared by the whole package: all numerics are float64 (narrower
input is widened on construction), a pixel is a column of the reflectance
matrix, an abundance vector is a column of the abundance matrix.  Every
container is immutable after construction: the wrapped arrays are marked
read-only, and invalid data is rejected at construction time.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# sum-to-one slack after exact simplex projection (pure rounding)
SUM_TO_ONE_TOL = 1e-9

# per-step slack allowed in an objective trace, relative to 1 + |value|
TRACE_MONOTONE_TOL = 1e-9


def asarray64(x) -> np.ndarray:
    """Return the float64 ndarray behind ``x`` (domain object or array-like)."""
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _frozen_array(x, ndim) -> np.ndarray:
    arr = np.array(getattr(x, "data", x), dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_cube(data, height, width):
    issues = []
    if data.ndim != 2:
        issues.append(f"cube data must be 2-d (bands x pixels), got shape {data.shape}")
        return issues
    d, n = data.shape
    if d < 1 or n < 1:
        issues.append(f"cube must have at least one band and one pixel, got {d}x{n}")
    if not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        issues.append(f"cube contains non-finite entry at band {bad[0]}, pixel {bad[1]}")
    if (height is None) != (width is None):
        issues.append("height and width must be given together")
    elif height is not None and height * width != n:
        issues.append(f"grid {height}x{width} does not match pixel count {n}")
    return issues


def _check_endmembers(data):
    issues = []
    if data.ndim != 2:
        issues.append(f"endmember matrix must be 2-d, got shape {data.shape}")
        return issues
    if data.shape[1] < 1:
        issues.append("endmember matrix needs at least one column")
    if not np.all(np.isfinite(data)):
        issues.append("endmember matrix contains non-finite entries")
        return issues
    if np.any(data < 0.0) or np.any(data > 1.0):
        j, k = np.argwhere((data < 0.0) | (data > 1.0))[0]
        issues.append(
            f"endmember entry ({j}, {k}) = {data[j, k]!r} outside [0, 1]"
        )
    zero = np.flatnonzero(~data.any(axis=0))
    for k in zero:
        issues.append(f"endmember column {k} is identically zero")
    return issues


def _check_abundances(data):
    issues = []
    if data.ndim != 2:
        issues.append(f"abundance matrix must be 2-d, got shape {data.shape}")
        return issues
    if not np.all(np.isfinite(data)):
        issues.append("abundance matrix contains non-finite entries")
        return issues
    if np.any(data < 0.0):
        l, i = np.argwhere(data < 0.0)[0]
        issues.append(f"abundance entry ({l}, {i}) = {data[l, i]!r} is negative")
    sums = data.sum(axis=0)
    off = np.flatnonzero(np.abs(sums - 1.0) > SUM_TO_ONE_TOL)
    for i in off[:8]:
        issues.append(f"abundance column {i} sums to {sums[i]!r}, not 1")
    if off.size > 8:
        issues.append(f"... and {off.size - 8} more columns violate sum-to-one")
    return issues


def _check_probabilities(data):
    issues = []
    if data.ndim != 1:
        issues.append(f"probability vector must be 1-d, got shape {data.shape}")
        return issues
    if not np.all(np.isfinite(data)):
        issues.append("probability vector contains non-finite entries")
        return issues
    bad = np.flatnonzero((data < 0.0) | (data > 1.0))
    for i in bad[:8]:
        issues.append(f"probability entry {i} = {data[i]!r} outside [0, 1]")
    return issues


def _raise_if(issues):
    if issues:
        raise ValueError("; ".join(issues))


@dataclass(frozen=True, eq=False)
class HyperCube:
    """Observed reflectances, one column per pixel (d bands x n pixels)."""

    data: np.ndarray
    bands: tuple = None           # optional wavelength labels in nm
    height: int = None
    width: int = None

    def __post_init__(self):
        arr = _frozen_array(self.data, 2)
        object.__setattr__(self, "data", arr)
        if self.bands is not None:
            object.__setattr__(self, "bands", tuple(float(b) for b in self.bands))
            if len(self.bands) != arr.shape[0]:
                raise ValueError(
                    f"{len(self.bands)} band labels for {arr.shape[0]} bands"
                )
        _raise_if(_check_cube(arr, self.height, self.width))

    @property
    def n_bands(self):
        return self.data.shape[0]

    @property
    def n_pixels(self):
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class EndmemberMatrix:
    """Endmember signatures, one column per material, entries in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, 2)
        object.__setattr__(self, "data", arr)
        _raise_if(_check_endmembers(arr))

    @property
    def n_bands(self):
        return self.data.shape[0]

    @property
    def n_endmembers(self):
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class AbundanceMatrix:
    """Fractional abundances; every column lies on the probability simplex."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, 2)
        object.__setattr__(self, "data", arr)
        _raise_if(_check_abundances(arr))

    @property
    def n_endmembers(self):
        return self.data.shape[0]

    @property
    def n_pixels(self):
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class TransitionProbabilities:
    """Per-pixel probability of a further light-material interaction."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, 1)
        object.__setattr__(self, "data", arr)
        _raise_if(_check_probabilities(arr))

    @property
    def n_pixels(self):
        return self.data.shape[0]


class Termination(Enum):
    """Why the block coordinate descent stopped."""

    ABSOLUTE_THRESHOLD = "absolute_threshold"
    RELATIVE_THRESHOLD = "relative_threshold"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True, eq=False)
class UnmixingResult:
    """Estimates plus the per-outer-iteration objective trace.

    ``objective_trace[0]`` is the objective at initialization; entry ``t``
    (t >= 1) is the value after the t-th outer sweep, so the trace has
    ``iterations + 1`` entries and is non-increasing within rounding.
    """

    endmembers: EndmemberMatrix
    abundances: AbundanceMatrix
    probabilities: TransitionProbabilities
    objective_trace: np.ndarray
    termination: Termination
    iterations: int
    wall_time: float

    def __post_init__(self):
        trace = _frozen_array(self.objective_trace, 1)
        object.__setattr__(self, "objective_trace", trace)
        rises = np.flatnonzero(
            np.diff(trace) > TRACE_MONOTONE_TOL * (1.0 + np.abs(trace[:-1]))
        )
        if rises.size:
            t = rises[0]
            raise ValueError(
                f"objective trace increases at step {t}: "
                f"{trace[t]!r} -> {trace[t + 1]!r}"
            )


def validate(cube, endmembers, abundances, probabilities) -> list:
    """Check a full (X, E, A, P) ensemble; return violations, never raise.

    Accepts the domain objects or raw arrays.  An empty list means every
    type invariant holds and all dimensions agree.
    """
    X = asarray64(cube)
    E = asarray64(endmembers)
    A = asarray64(abundances)
    P = asarray64(probabilities)

    height = getattr(cube, "height", None)
    width = getattr(cube, "width", None)
    issues = _check_cube(X, height, width)
    issues += _check_endmembers(E)
    issues += _check_abundances(A)
    issues += _check_probabilities(P)

    if X.ndim == 2 and E.ndim == 2 and X.shape[0] != E.shape[0]:
        issues.append(f"cube has {X.shape[0]} bands but endmembers have {E.shape[0]}")
    if E.ndim == 2 and A.ndim == 2 and E.shape[1] != A.shape[0]:
        issues.append(
            f"endmember count {E.shape[1]} does not match abundance rows {A.shape[0]}"
        )
    if X.ndim == 2 and A.ndim == 2 and X.shape[1] != A.shape[1]:
        issues.append(f"cube has {X.shape[1]} pixels but abundances have {A.shape[1]}")
    if X.ndim == 2 and P.ndim == 1 and P.shape[0] != X.shape[1]:
        issues.append(f"probability vector length {P.shape[0]} != pixel count {X.shape[1]}")
    return issues
