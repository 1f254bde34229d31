"""Quantitative evaluation: NMSE in dB, spectral angles, column alignment."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import asarray64


def nmse(est, truth) -> float:
    """10 log10(||est - truth||_F^2 / ||truth||_F^2); -inf for a perfect fit."""
    est = asarray64(est)
    truth = asarray64(truth)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    denom = float(np.sum(truth * truth))
    if denom == 0.0:
        raise ValueError("NMSE undefined for an identically-zero truth")
    err = float(np.sum((est - truth) ** 2))
    if err == 0.0:
        return float("-inf")
    return 10.0 * np.log10(err / denom)


def sam(e, e_hat) -> float:
    """Spectral angle between two signatures, in degrees."""
    e = np.asarray(e, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    ne = np.linalg.norm(e)
    nh = np.linalg.norm(e_hat)
    if ne == 0.0 or nh == 0.0:
        raise ValueError("spectral angle undefined for a zero vector")
    cosine = np.clip(float(e @ e_hat) / (ne * nh), -1.0, 1.0)
    return float(np.degrees(np.arccos(cosine)))


def sam_cost_matrix(E_hat, E_true) -> np.ndarray:
    """cost[k, j] = angle between truth column k and estimate column j."""
    Eh = asarray64(E_hat)
    Et = asarray64(E_true)
    m = Et.shape[1]
    cost = np.empty((m, m))
    for k in range(m):
        for j in range(m):
            cost[k, j] = sam(Et[:, k], Eh[:, j])
    return cost


def align_endmembers(E_hat, E_true, A_hat=None):
    """Match estimated columns to the truth by total spectral angle.

    Returns (permutation, aligned E_hat, aligned A_hat or None) where
    permutation[k] is the estimate column assigned to truth column k, the
    assignment being the exact minimizer of the summed angles.  The same
    permutation reorders abundance rows; per-pixel probabilities carry no
    column ambiguity and are never permuted.
    """
    Eh = asarray64(E_hat)
    Et = asarray64(E_true)
    if Eh.shape != Et.shape:
        raise ValueError(f"shape mismatch: {Eh.shape} vs {Et.shape}")
    cost = sam_cost_matrix(Eh, Et)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(Et.shape[1], dtype=int)
    perm[rows] = cols
    A_aligned = None
    if A_hat is not None:
        A_aligned = asarray64(A_hat)[perm, :]
    return perm, Eh[:, perm], A_aligned


@dataclass(frozen=True)
class EvalReport:
    """One run's scores; nmse_p_db is None when the run did not estimate P."""

    nmse_a_db: float
    nmse_e_db: float
    nmse_p_db: float
    sam_mean_deg: float
    sam_per_endmember: tuple
    permutation: tuple

    CSV_HEADER = "method,sam_e_deg,nmse_e_db,nmse_a_db,nmse_p_db"

    @staticmethod
    def _fmt(value):
        if value is None:
            return "/"
        if value == float("-inf"):
            return "-inf"
        return format(value, ".17g")

    def key_value_lines(self) -> list:
        lines = [
            f"nmse_a_db = {self._fmt(self.nmse_a_db)}",
            f"nmse_e_db = {self._fmt(self.nmse_e_db)}",
            f"nmse_p_db = {self._fmt(self.nmse_p_db)}",
            f"sam_mean_deg = {self._fmt(self.sam_mean_deg)}",
            "sam_per_endmember = "
            + ",".join(self._fmt(v) for v in self.sam_per_endmember),
            "permutation = " + ",".join(str(int(k)) for k in self.permutation),
        ]
        return lines

    def csv_row(self, method: str) -> str:
        return ",".join(
            [
                method,
                self._fmt(self.sam_mean_deg),
                self._fmt(self.nmse_e_db),
                self._fmt(self.nmse_a_db),
                self._fmt(self.nmse_p_db),
            ]
        )


def evaluate(E_hat, A_hat, P_hat, E_true, A_true, P_true) -> EvalReport:
    """Align the estimate to the truth and score it.

    Pass P_hat=None for linear runs; the probability score is then omitted
    (serialized as "/").
    """
    perm, E_aligned, A_aligned = align_endmembers(E_hat, E_true, A_hat)
    Et = asarray64(E_true)
    angles = tuple(
        sam(Et[:, k], E_aligned[:, k]) for k in range(Et.shape[1])
    )
    nmse_p = None
    if P_hat is not None:
        nmse_p = nmse(asarray64(P_hat), asarray64(P_true))
    return EvalReport(
        nmse_a_db=nmse(A_aligned, A_true),
        nmse_e_db=nmse(E_aligned, E_true),
        nmse_p_db=nmse_p,
        sam_mean_deg=float(np.mean(angles)),
        sam_per_endmember=angles,
        permutation=tuple(int(k) for k in perm),
    )
