"""Consensus + innovations estimation of the area inertia parameters.

Every area ``j`` keeps a full estimate ``theta_j`` of the parameter vector
``theta = [a_1 .. a_n]`` and integrates

    theta_j' = -alpha Gamma_j sum_{k in N_j} (theta_j - theta_k)
               - Gamma_j c_j^T (c_j theta_j - y_j)

with explicit Euler rounds. Only estimates cross area borders.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NumericalDivergenceError
from .regression import RegressorRow

DEFAULT_GAMMA = 2.45
DEFAULT_ALPHA = 0.4


@dataclass(frozen=True)
class EstimatorBank:
    """Estimates ``theta_hat[j]`` of every area plus the gains."""

    theta_hat: np.ndarray
    Gamma: np.ndarray
    alpha: float
    step: int = 0

    def __post_init__(self):
        th = np.asarray(self.theta_hat, dtype=float)
        G = np.asarray(self.Gamma, dtype=float)
        n = th.shape[0]
        if th.shape != (n, n):
            raise ConfigurationError(f"theta_hat must be n x n, got {th.shape}")
        if G.shape != (n, n, n):
            raise ConfigurationError(f"Gamma must be n x n x n, got {G.shape}")
        for j in range(n):
            if not np.allclose(G[j], G[j].T, atol=0):
                raise ConfigurationError(f"Gamma_{j + 1} is not symmetric")
            if np.linalg.eigvalsh(G[j]).min() <= 0:
                raise ConfigurationError(f"Gamma_{j + 1} is not positive definite")
        if not self.alpha > 0:
            raise ConfigurationError("consensus gain alpha must be strictly positive")
        object.__setattr__(self, "theta_hat", th)
        object.__setattr__(self, "Gamma", G)

    @classmethod
    def uniform(cls, n: int, theta0, gamma: float = DEFAULT_GAMMA,
                alpha: float = DEFAULT_ALPHA) -> "EstimatorBank":
        th = np.broadcast_to(np.asarray(theta0, dtype=float), (n,))
        return cls(np.tile(th, (n, 1)), np.tile(gamma * np.eye(n), (n, 1, 1)), alpha)

    @property
    def n(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def gain_bound(self) -> float:
        """r1: the largest spectral norm among the Gamma_j."""
        return float(max(np.linalg.norm(g, 2) for g in self.Gamma))


def check_step_size(bank: EstimatorBank, dt: float, laplacian_bound: float,
                    regressor_bound: float = 0.0) -> float:
    """Bound on ``||dt Gamma_j (alpha L + c_j^T c_j)||``; raises when >= 1."""
    v = dt * bank.gain_bound * (bank.alpha * laplacian_bound + regressor_bound)
    if v >= 1.0:
        raise ConfigurationError(
            f"estimator step too large: dt*||Gamma||*(alpha*||L|| + r2) = {v:.3g} >= 1")
    return v


def area_update(theta_j: np.ndarray, Gamma_j: np.ndarray, alpha: float, row: RegressorRow,
                received: Sequence[np.ndarray], dt: float) -> np.ndarray:
    """One Euler step of one area's estimate from the round's snapshot."""
    consensus = np.zeros_like(theta_j)
    for th_k in received:
        consensus += theta_j - th_k
    c = row.c
    innovation = c * (c @ theta_j - row.y)
    return theta_j - dt * (Gamma_j @ (alpha * consensus + innovation))


def ci_step(bank: EstimatorBank, rows: Sequence[RegressorRow],
            neighbor_estimates: Sequence[Sequence[np.ndarray]], dt: float,
            executor: ThreadPoolExecutor | None = None) -> EstimatorBank:
    """Advance all areas one round (Jacobi: everyone reads the same snapshot).

    ``neighbor_estimates[j]`` lists the estimates area ``j + 1`` received this
    round. With an ``executor`` each area is updated as its own task; the
    result is bit-identical to the sequential loop.
    """
    n = bank.n
    if len(rows) != n or len(neighbor_estimates) != n:
        raise ValueError(f"expected {n} rows and neighbour lists")

    def task(j):
        return area_update(bank.theta_hat[j], bank.Gamma[j], bank.alpha, rows[j],
                           neighbor_estimates[j], dt)

    if executor is None:
        new = [task(j) for j in range(n)]
    else:
        new = list(executor.map(task, range(n)))  # map returning is the round barrier
    theta = np.array(new)
    if not np.all(np.isfinite(theta)):
        j = int(np.flatnonzero(~np.all(np.isfinite(theta), axis=1))[0]) + 1
        raise NumericalDivergenceError(f"estimate of area {j} diverged at step {bank.step + 1}",
                                       area=j, step=bank.step + 1)
    return replace(bank, theta_hat=theta, step=bank.step + 1)


# --------------------------------------------------------------------------
# inertia reconstruction
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InertiaEstimates:
    """Inertia implied by each area's estimate; undefined entries are NaN.

    ``H_ca_hat[j, i]`` is area ``j``'s estimate of the inertia of area ``i``.
    ``defined`` flags entries with a usable (positive) parameter estimate;
    the totals of an area are defined only when its whole row is.
    """

    H_ca_hat: np.ndarray
    a_tot_hat: np.ndarray
    H_tot_hat: np.ndarray
    defined: np.ndarray


def reconstruct_inertia(bank_or_theta, omega_s: float, eps: float = 1e-12) -> InertiaEstimates:
    th = bank_or_theta.theta_hat if isinstance(bank_or_theta, EstimatorBank) else \
        np.atleast_2d(np.asarray(bank_or_theta, dtype=float))
    ok = th > eps
    safe = np.where(ok, th, 1.0)
    H = np.where(ok, omega_s / (2.0 * safe), np.nan)
    row_ok = ok.all(axis=1)
    inv_sum = np.where(ok, 1.0 / safe, 0.0).sum(axis=1)
    a_tot = np.where(row_ok, 1.0 / np.where(row_ok, inv_sum, 1.0), np.nan)
    H_tot = np.where(row_ok, omega_s / (2.0 * np.where(row_ok, a_tot, 1.0)), np.nan)
    return InertiaEstimates(H, a_tot, H_tot, ok)


# --------------------------------------------------------------------------
# persistency of excitation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PeReport:
    window: float
    gram: np.ndarray = field(repr=False)
    iota_lower: float
    iota_upper: float
    regressor_bound: float
    pe_satisfied: bool


def pe_report(nu_history, dt: float, T: float, end: int | None = None,
              rel_tol: float = 1e-9) -> PeReport:
    """Cooperative PE check over the last ``T`` seconds of regressor history.

    ``nu_history`` has shape (steps, n): the regressor value ``nu_j`` of every
    area at every step (or a sequence of per-step row lists). Because each
    ``c_j`` only has entry ``j``, ``sum_j c_j^T c_j = diag(nu_j^2)`` and the
    windowed Gram integral is a diagonal matrix (rectangle rule).
    """
    nu = _as_nu_array(nu_history)
    end = nu.shape[0] if end is None else end
    m = int(round(T / dt))
    if m <= 0:
        raise ValueError("window must cover at least one step")
    if m > end:
        raise ValueError(f"history has {end} steps, window needs {m}")
    seg = nu[end - m:end]
    gram = np.diag(dt * (seg ** 2).sum(axis=0))
    ev = np.linalg.eigvalsh(gram)
    r2 = float((seg ** 2).max()) if seg.size else 0.0
    ok = ev[0] > rel_tol * T
    return PeReport(T, gram, float(ev[0]), float(ev[-1]), r2, bool(ok))


def _as_nu_array(history) -> np.ndarray:
    if isinstance(history, np.ndarray):
        return np.atleast_2d(history.astype(float))
    rows = list(history)
    if rows and isinstance(rows[0], (list, tuple)) and rows[0] and \
            isinstance(rows[0][0], RegressorRow):
        return np.array([[r.nu for r in step] for step in rows])
    return np.atleast_2d(np.asarray(rows, dtype=float))


def centralized_solution(rows: Sequence[RegressorRow]) -> np.ndarray:
    """Least-squares solution of the stacked regression (oracle for static rows)."""
    C = np.array([r.c for r in rows])
    y = np.array([r.y for r in rows])
    sol, *_ = np.linalg.lstsq(C, y, rcond=None)
    return sol
