"""Block coordinate descent for the bilinear unmixing objective.

One outer iteration visits the blocks in the fixed order A, P, E.  The A
and E blocks each take a single gradient-projection step with stepsize
1/L, where L is the Frobenius norm of the block's (Gram) Hessian; the P
block has an exact closed-form minimizer.  This follows the unscaled
gradient convention: both gradients omit the factor 2 of the true
derivative of a squared norm, and the matching Hessians omit it too, so
the step grad/L is unchanged and each visit can only decrease the
objective.  Four modes cover {linear, nonlinear} x {fixed, free
endmembers}; the linear modes pin every probability to zero and run the
identical machinery with the P block skipped.
"""

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    AbundanceMatrix,
    EndmemberMatrix,
    Termination,
    TransitionProbabilities,
    UnmixingResult,
    asarray64,
)
from .model import interaction_coefficients, modified_endmembers, objective
from .projections import project_simplex, project_simplex_columns

# below this Lipschitz value a block variable is frozen instead of stepped
DEGENERATE_LIPSCHITZ = 1e-15

# below this denominator the closed-form probability is undefined
DEGENERATE_DENOMINATOR = 1e-20

_REL_FLOOR = 1e-300


class SolverMode(Enum):
    LU_FIXED_E = "lu_fixed_e"
    LU_FREE_E = "lu_free_e"
    NLU_FIXED_E = "nlu_fixed_e"
    NLU_FREE_E = "nlu_free_e"

    @property
    def updates_probability(self) -> bool:
        return self in (SolverMode.NLU_FIXED_E, SolverMode.NLU_FREE_E)

    @property
    def updates_endmembers(self) -> bool:
        return self in (SolverMode.LU_FREE_E, SolverMode.NLU_FREE_E)

    @classmethod
    def from_name(cls, name: str):
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(mode.value for mode in cls)
            raise ValueError(f"unknown solver mode {name!r}; expected one of {valid}")


@dataclass(frozen=True)
class SolverConfig:
    """Driver settings.

    eta1 is the absolute objective threshold; when None it defaults to
    n * noise_power if the noise power is known and is disabled (0)
    otherwise.  eta2 is the relative-decrease threshold.  seed is reserved
    for randomized tie-breaking and unused by the default blocks.
    """

    mode: SolverMode
    eta1: float = None
    eta2: float = 1e-3
    max_outer_iterations: int = 500
    seed: int = 0
    noise_power: float = None

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", SolverMode.from_name(self.mode))
        if not self.eta2 > 0.0:
            raise ValueError(f"eta2 must be positive, got {self.eta2!r}")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")

    def effective_eta1(self, n_pixels: int) -> float:
        if self.eta1 is not None:
            return float(self.eta1)
        if self.noise_power is not None:
            return n_pixels * float(self.noise_power)
        return 0.0


@dataclass
class StepDiagnostics:
    """Per-outer-iteration numbers reported to the progress callback."""

    iteration: int
    lipschitz_a: np.ndarray
    lipschitz_e: np.ndarray          # None when the E block is skipped
    objective_start: float
    objective_after_abundance: float
    objective_after_probability: float   # None when the P block is skipped
    objective_after_endmembers: float    # None when the E block is skipped
    degenerate_pixels: np.ndarray
    degenerate_rows: np.ndarray
    block_seconds: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# per-pixel / per-row operations
# ---------------------------------------------------------------------------

def update_abundance(x, a, E, p: float) -> np.ndarray:
    """One gradient-projection step on ||x - Etilde a||^2 over the simplex.

    Stepsize is 1/L with L = ||Etilde^T Etilde||_F; the result stays on the
    simplex and never increases the pixel objective.  A numerically zero
    modified endmember matrix freezes the pixel (a is returned unchanged).
    """
    a = np.asarray(a, dtype=np.float64)
    Et = modified_endmembers(E, x, p)
    gram = Et.T @ Et
    lipschitz = np.linalg.norm(gram)
    if lipschitz < DEGENERATE_LIPSCHITZ:
        return a.copy()
    grad = Et.T @ (Et @ a - np.asarray(x, dtype=np.float64))
    return project_simplex(a - grad / lipschitz)


def update_probability(x, y) -> float:
    """Exact constrained minimizer of the per-pixel probability objective.

    Closed form clipped into [0, 1]; a vanishing denominator (y = 0 or
    x = 1 on every band where y is nonzero) returns 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs y {y.shape}")
    w = y - y * x
    denom = float(w @ w)
    if denom < DEGENERATE_DENOMINATOR:
        return 0.0
    raw = float(w @ (y - x)) / denom
    return min(max(raw, 0.0), 1.0)


def endmember_gradient(E, X, A, P) -> np.ndarray:
    """Gradient of the endmember objective, unscaled convention (no factor 2)."""
    E = asarray64(E)
    X = asarray64(X)
    A = asarray64(A)
    P = asarray64(P)
    if E.shape[0] != X.shape[0] or E.shape[1] != A.shape[0] \
            or A.shape[1] != X.shape[1] or P.shape != (X.shape[1],):
        raise ValueError(
            f"dimension mismatch: X {X.shape}, E {E.shape}, A {A.shape}, P {P.shape}"
        )
    C = interaction_coefficients(X, P)
    R = C * (E @ A) - X
    return (R * C) @ A.T


def row_lipschitz(a_tilde_rows) -> float:
    """Frobenius norm of one band row's Gram Hessian.

    a_tilde_rows holds that band's row of the per-pixel modified abundance
    outer products, one row per pixel (n x m); the Hessian is the sum of
    their outer products, symmetric positive semidefinite by construction.
    """
    T = np.atleast_2d(np.asarray(a_tilde_rows, dtype=np.float64))
    H = T.T @ T
    return float(np.linalg.norm(H))


def update_endmembers(E, X, A, P) -> np.ndarray:
    """One projected-gradient sweep over all band rows of E.

    Each row moves by grad/L with its own Lipschitz constant, then clamps
    into [0, 1]; rows with a vanishing constant are left unchanged.
    """
    E = asarray64(E)
    E_new, _, _ = _endmember_sweep(E, asarray64(X), asarray64(A), asarray64(P))
    return E_new


# ---------------------------------------------------------------------------
# batched sweeps (single code path for all four modes)
# ---------------------------------------------------------------------------

def _abundance_sweep(X, E, A, P):
    """One projected step for every pixel; returns (A_new, L_a, degenerate)."""
    d, m = E.shape
    C = interaction_coefficients(X, P)
    C2 = C * C
    Y = E @ A
    G = E.T @ (C2 * Y - C * X)
    # per-pixel ||Etilde^T Etilde||_F via the flattened band outer products
    K = (E[:, :, None] * E[:, None, :]).reshape(d, m * m)
    gram_flat = C2.T @ K
    L = np.sqrt(np.einsum("ij,ij->i", gram_flat, gram_flat))
    degenerate = L < DEGENERATE_LIPSCHITZ
    safe = np.where(degenerate, 1.0, L)
    A_new = project_simplex_columns(A - G / safe[None, :])
    if degenerate.any():
        A_new[:, degenerate] = A[:, degenerate]
    return A_new, L, np.flatnonzero(degenerate)


def _probability_sweep(X, Y):
    """Closed-form probability for every pixel; returns (P_new, degenerate)."""
    W = Y - Y * X
    denom = np.einsum("ji,ji->i", W, W)
    numer = np.einsum("ji,ji->i", W, Y - X)
    degenerate = denom < DEGENERATE_DENOMINATOR
    safe = np.where(degenerate, 1.0, denom)
    P_new = np.clip(numer / safe, 0.0, 1.0)
    P_new[degenerate] = 0.0
    return P_new, np.flatnonzero(degenerate)


def _endmember_sweep(E, X, A, P):
    """One projected step for every band row; returns (E_new, L_e, degenerate)."""
    m, n = A.shape
    C = interaction_coefficients(X, P)
    C2 = C * C
    R = C * (E @ A) - X
    G = (R * C) @ A.T
    # per-row ||Hessian||_F via the flattened abundance outer products
    KA = (A[:, None, :] * A[None, :, :]).reshape(m * m, n)
    hess_flat = C2 @ KA.T
    L = np.sqrt(np.einsum("ij,ij->i", hess_flat, hess_flat))
    degenerate = L < DEGENERATE_LIPSCHITZ
    safe = np.where(degenerate, 1.0, L)
    E_new = np.clip(E - G / safe[:, None], 0.0, 1.0)
    if degenerate.any():
        E_new[degenerate] = E[degenerate]
    return E_new, L, np.flatnonzero(degenerate)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def solve(cube, cfg: SolverConfig, E0, P0=None, progress=None) -> UnmixingResult:
    """Run the block coordinate descent until the stopping rule fires.

    cube: HyperCube (or d x n array); E0: initial endmembers, typically
    from VCA; P0: initial probabilities, all zeros when None (linear modes
    require zeros).  Abundances start uniform at 1/m.  The stopping rule
    fires when the objective drops below eta1, when the relative decrease
    falls below eta2, or at the iteration cap, whichever comes first.

    progress, when given, is called after every outer iteration as
    progress(iteration, objective, diagnostics).
    """
    start = time.perf_counter()
    X = asarray64(cube)
    E = asarray64(E0).copy()
    d, n = X.shape
    m = E.shape[1]
    if E.shape[0] != d:
        raise ValueError(f"E0 has {E.shape[0]} bands but the cube has {d}")

    if P0 is None:
        P = np.zeros(n)
    else:
        P = asarray64(P0).copy()
        if P.shape != (n,):
            raise ValueError(f"P0 has shape {P.shape}, expected ({n},)")
    if not cfg.mode.updates_probability and np.any(P != 0.0):
        raise ValueError(
            f"mode {cfg.mode.value} pins probabilities to zero; got nonzero P0"
        )

    A = np.full((m, n), 1.0 / m)
    eta1 = cfg.effective_eta1(n)

    current = objective(X, E, A, P)
    trace = [current]
    termination = Termination.MAX_ITERATIONS
    iterations = 0

    for t in range(1, cfg.max_outer_iterations + 1):
        obj_start = current
        timings = {}

        tic = time.perf_counter()
        A, lip_a, degenerate_pixels = _abundance_sweep(X, E, A, P)
        timings["abundance"] = time.perf_counter() - tic
        obj_after_a = objective(X, E, A, P)
        current = obj_after_a

        obj_after_p = None
        if cfg.mode.updates_probability:
            tic = time.perf_counter()
            P, degenerate_p = _probability_sweep(X, E @ A)
            timings["probability"] = time.perf_counter() - tic
            obj_after_p = objective(X, E, A, P)
            current = obj_after_p
            degenerate_pixels = np.union1d(degenerate_pixels, degenerate_p)

        obj_after_e = None
        lip_e = None
        degenerate_rows = None
        if cfg.mode.updates_endmembers:
            tic = time.perf_counter()
            E, lip_e, degenerate_rows = _endmember_sweep(E, X, A, P)
            timings["endmember"] = time.perf_counter() - tic
            obj_after_e = objective(X, E, A, P)
            current = obj_after_e

        trace.append(current)
        iterations = t
        if progress is not None:
            progress(
                t,
                current,
                StepDiagnostics(
                    iteration=t,
                    lipschitz_a=lip_a,
                    lipschitz_e=lip_e,
                    objective_start=obj_start,
                    objective_after_abundance=obj_after_a,
                    objective_after_probability=obj_after_p,
                    objective_after_endmembers=obj_after_e,
                    degenerate_pixels=degenerate_pixels,
                    degenerate_rows=degenerate_rows,
                    block_seconds=timings,
                ),
            )

        previous = trace[-2]
        if current < eta1:
            termination = Termination.ABSOLUTE_THRESHOLD
            break
        if (previous - current) / max(abs(previous), _REL_FLOOR) < cfg.eta2:
            termination = Termination.RELATIVE_THRESHOLD
            break

    return UnmixingResult(
        endmembers=EndmemberMatrix(E),
        abundances=AbundanceMatrix(A),
        probabilities=TransitionProbabilities(P),
        objective_trace=np.asarray(trace),
        termination=termination,
        iterations=iterations,
        wall_time=time.perf_counter() - start,
    )
