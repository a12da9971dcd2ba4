"""Second-order regression filter and the per-area linear regression rows.

The filter is ``F(s) = l1 l2 / ((s + l1)(s + l2))``, realised as

    x1' = l1 (u - x1),   x2' = l2 (x1 - x2),
    F[u] = x2,           F[s u] = x2' = l2 (x1 - x2),

so the derivative path never differentiates the input. Both paths are
discretised with the trapezoidal (Tustin) rule, which keeps the DC gain of
``F`` at exactly one.

For area ``j`` the filtered signals

    y_j  = F[s omega_av_j],   nu_j = F[p_m,j - p_e,j]

satisfy ``y_j = nu_j * a_j`` with ``a_j = omega_s / (2 H_j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, NumericalDivergenceError


@dataclass(frozen=True)
class FilterParams:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ConfigurationError("filter poles must be positive")

    @property
    def settling_time(self) -> float:
        """10 / min(lambda): the transient horizon excluded from metrics."""
        return 10.0 / min(self.lambda1, self.lambda2)


@dataclass(frozen=True)
class FilterState:
    """Filter states ``x`` (shape (..., 2)) and the last input sample.

    ``u_prev`` is ``None`` before the first sample: the first call only
    records the input, so a step applied at t = 0 is held over [0, dt].
    """

    x: np.ndarray
    u_prev: np.ndarray | None = None

    @classmethod
    def zeros(cls, channels: int | tuple = ()) -> "FilterState":
        shape = (channels,) if isinstance(channels, int) else tuple(channels)
        return cls(np.zeros(shape + (2,)))


@lru_cache(maxsize=64)
def _tustin(l1: float, l2: float, dt: float):
    A = np.array([[-l1, 0.0], [l2, -l2]])
    B = np.array([l1, 0.0])
    M = np.linalg.inv(np.eye(2) - 0.5 * dt * A)
    Ad = M @ (np.eye(2) + 0.5 * dt * A)
    Bd = 0.5 * dt * (M @ B)
    return Ad, Bd


def filter_step(fs: FilterState, params: FilterParams, input_sample, dt: float):
    """Feed one input sample; returns ``(state, F_output, F_of_derivative_output)``.

    Works elementwise on arrays of independent channels.
    """
    u = np.asarray(input_sample, dtype=float)
    if not np.all(np.isfinite(u)):
        bad = int(np.flatnonzero(~np.isfinite(np.atleast_1d(u)))[0])
        raise NumericalDivergenceError(f"non-finite filter input on channel {bad}", channel=bad)
    if fs.u_prev is None:
        x = fs.x
    else:
        Ad, Bd = _tustin(params.lambda1, params.lambda2, dt)
        x = fs.x @ Ad.T + (fs.u_prev + u)[..., None] * Bd
    out = FilterState(x, u.copy())
    return out, x[..., 1], params.lambda2 * (x[..., 0] - x[..., 1])


def step_response(t, l1=1.0, l2=1.0):
    """Analytical unit-step response of F (both distinct and repeated poles)."""
    t = np.asarray(t, dtype=float)
    if math.isclose(l1, l2):
        return 1.0 - np.exp(-l1 * t) * (1.0 + l1 * t)
    return 1.0 - (l2 * np.exp(-l1 * t) - l1 * np.exp(-l2 * t)) / (l2 - l1)


@dataclass(frozen=True)
class RegressorRow:
    """One area's regression equation ``y = c theta`` with ``c = nu e_j``."""

    j: int
    n: int
    y: float
    nu: float

    @property
    def c(self) -> np.ndarray:
        c = np.zeros(self.n)
        c[self.j - 1] = self.nu
        return c


def build_regressor_row(j: int, n: int, y: float, nu: float) -> RegressorRow:
    if not 1 <= j <= n:
        raise IndexError(f"area index {j} outside 1..{n}")
    return RegressorRow(j, n, float(y), float(nu))


def stack_regressors(rows) -> tuple[np.ndarray, np.ndarray]:
    """Stacked regressor matrix (n x n, diagonal here) and outputs."""
    return np.array([r.c for r in rows]), np.array([r.y for r in rows])


@dataclass(frozen=True)
class TrueParameters:
    theta: np.ndarray
    a_tot: float


def true_parameters(H_ca, omega_s: float) -> TrueParameters:
    H_ca = np.asarray(H_ca, dtype=float)
    if np.any(H_ca <= 0):
        raise ValueError("area inertia must be positive")
    theta = omega_s / (2.0 * H_ca)
    return TrueParameters(theta, float(1.0 / np.sum(1.0 / theta)))


class AreaRegression:
    """Per-area regression front end: two filter channels for every area.

    Channel ``j`` filters the frequency deviation of area ``j`` (derivative
    path), channel ``n + j`` its power imbalance. Feeding ``omega_av - omega_s``
    instead of ``omega_av`` leaves ``F[s omega_av]`` unchanged but keeps the
    zero initial filter state consistent with a run that starts at nominal
    frequency.
    """

    def __init__(self, n: int, params: FilterParams, dt: float, omega_s: float):
        self.n = n
        self.params = params
        self.dt = dt
        self.omega_s = omega_s
        self.state = FilterState.zeros(2 * n)

    def __call__(self, signals) -> list[RegressorRow]:
        u = np.concatenate([signals.omega_av - self.omega_s, signals.p_m_ca - signals.p_e_ca])
        self.state, f, fs = filter_step(self.state, self.params, u, self.dt)
        n = self.n
        return [RegressorRow(j + 1, n, float(fs[j]), float(f[n + j])) for j in range(n)]
