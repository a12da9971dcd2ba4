"""Multi-machine swing-equation grid over a Kron-reduced network.

Each machine follows

    d(delta_i)/dt = omega_i - omega_s
    d(omega_i)/dt = omega_s / (2 H_i) * (p_m,i - p_e,i)

with constant internal EMF behind a constant-impedance reduced network.
The electrical power is the classical reduced-network power flow

    p_e,i = sum_k E_i E_k (G_ik cos(delta_i - delta_k) + B_ik sin(delta_i - delta_k)).

All powers and inertia constants are on one global per-unit base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NumericalDivergenceError

OMEGA_S_60HZ = 2.0 * math.pi * 60.0


# --------------------------------------------------------------------------
# schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSchedule:
    """Multiply the inertia of ``machine`` (1-based) by ``factor`` for t >= ``t``."""

    machine: int
    t: float
    factor: float


@dataclass(frozen=True)
class SineSchedule:
    """H_i(t) = H_i * (1 + amplitude * sin(2 pi t / period + phase))."""

    machine: int
    amplitude: float
    period: float
    phase: float = 0.0


@lru_cache(maxsize=256)
def _load_level(seed: int, amplitude: float, k: int, n: int) -> np.ndarray:
    rng = np.random.default_rng([seed, k])
    return rng.uniform(-amplitude, amplitude, n)


@dataclass(frozen=True)
class RandomLoadSchedule:
    """Seeded random scaling of every machine's local load.

    A new uniform level in ``[-amplitude, amplitude]`` is drawn per load every
    ``period`` seconds; the first interval stays at nominal so a run can start
    from equilibrium. Transitions between levels follow a raised-cosine ramp
    of length ``ramp`` which keeps the load (and hence the power imbalance)
    continuously differentiable. ``ramp = 0`` gives piecewise-constant steps.
    """

    period: float = 2.0
    amplitude: float = 0.02
    ramp: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigurationError("load period must be positive")
        if not 0 <= self.ramp <= self.period:
            raise ConfigurationError("load ramp must lie in [0, period]")
        if self.amplitude < 0 or self.amplitude >= 1:
            raise ConfigurationError("load amplitude must lie in [0, 1)")

    def level(self, k: int, n: int) -> np.ndarray:
        if k <= 0 or self.amplitude == 0:
            return np.zeros(n)
        return _load_level(self.seed, self.amplitude, k, n).copy()

    def scaling(self, t: float, n: int) -> np.ndarray:
        k = math.floor(t / self.period)
        new = self.level(k, n)
        tau = t - k * self.period
        if self.ramp == 0 or tau >= self.ramp:
            return 1.0 + new
        old = self.level(k - 1, n)
        w = 0.5 * (1.0 - math.cos(math.pi * tau / self.ramp))
        return 1.0 + old + w * (new - old)


# --------------------------------------------------------------------------
# configuration and state
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Generator:
    id: int
    delta: float
    omega: float
    H: float
    p_m: float
    internal_emf: float


@dataclass
class SystemConfig:
    """Static description of a reduced multi-machine system.

    ``p_set`` are the mechanical power setpoints; ``droop`` adds an optional
    proportional primary-frequency response so that
    ``p_m = p_set - droop * (omega - omega_s) / omega_s``.

    Loads are constant admittances already folded into ``admittance``. Load
    ``l`` contributes the rank-one term ``load_y[l] * u u^T`` with
    ``u = load_u[l]`` (its sensitivity vector in the reduced network), so a
    load scaling ``s`` gives ``Y(s) = Y + sum_l (s_l - 1) load_y[l] u_l u_l^T``.
    Without explicit loads every machine carries one local load equal to its
    diagonal conductance.
    """

    admittance: np.ndarray
    H: np.ndarray
    E: np.ndarray
    p_set: np.ndarray
    delta0: np.ndarray | None = None
    droop: np.ndarray | None = None
    load_y: np.ndarray | None = None
    load_u: np.ndarray | None = None
    omega_s: float = OMEGA_S_60HZ
    step_dt: float = 1e-3
    inertia_schedule: tuple = ()
    load_schedule: RandomLoadSchedule | None = None
    name: str = "grid"

    def __post_init__(self):
        Y = np.asarray(self.admittance, dtype=complex)
        self.admittance = Y
        n = Y.shape[0]
        if Y.ndim != 2 or Y.shape != (n, n):
            raise ConfigurationError(f"admittance must be square, got {Y.shape}")
        if n < 2:
            raise ConfigurationError("need at least two machines")
        if not np.allclose(Y, Y.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Y).max())):
            raise ConfigurationError("reduced admittance must be symmetric")
        self.H = self._vec(self.H, "H")
        self.E = self._vec(self.E, "E")
        self.p_set = self._vec(self.p_set, "p_set")
        self.delta0 = np.zeros(n) if self.delta0 is None else self._vec(self.delta0, "delta0")
        self.droop = np.zeros(n) if self.droop is None else self._vec(self.droop, "droop")
        if self.load_y is None:
            self.load_y = Y.real.diagonal().astype(complex)
            self.load_u = np.eye(n, dtype=complex)
        else:
            self.load_y = np.asarray(self.load_y, dtype=complex).reshape(-1)
            self.load_u = np.asarray(self.load_u, dtype=complex)
            if self.load_u.shape != (self.load_y.size, n):
                raise ConfigurationError(
                    f"load_u must have shape ({self.load_y.size}, {n}), got {self.load_u.shape}")
        if np.any(self.H <= 0):
            raise ConfigurationError("inertia constants must be positive")
        if not self.step_dt > 0:
            raise ConfigurationError("step_dt must be positive")
        if not self.omega_s > 0:
            raise ConfigurationError("omega_s must be positive")
        for s in self.inertia_schedule:
            if not 1 <= s.machine <= n:
                raise ConfigurationError(f"schedule refers to unknown machine {s.machine}")
            if isinstance(s, StepSchedule) and s.factor <= 0:
                raise ConfigurationError("step schedule factor must be positive")
            if isinstance(s, SineSchedule) and s.period <= 0:
                raise ConfigurationError("sine schedule period must be positive")
        # worst case of all schedules combined must keep H > 0
        lo = np.ones(n)
        for s in self.inertia_schedule:
            if isinstance(s, StepSchedule):
                lo[s.machine - 1] *= min(1.0, s.factor)
            else:
                lo[s.machine - 1] *= 1.0 - abs(s.amplitude)
        if np.any(lo <= 0):
            raise ConfigurationError("inertia schedule can drive H to a nonpositive value")

    def _vec(self, v, name):
        a = np.array(v, dtype=float).reshape(-1)
        if a.shape != (self.admittance.shape[0],):
            raise ConfigurationError(
                f"{name} has {a.size} entries, expected {self.admittance.shape[0]}")
        return a

    @property
    def N(self) -> int:
        return self.admittance.shape[0]

    @property
    def n_loads(self) -> int:
        return self.load_y.size

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class GridState:
    """Immutable snapshot of all machines at time ``t``."""

    t: float
    delta: np.ndarray
    omega: np.ndarray
    H: np.ndarray
    p_m: np.ndarray
    p_e: np.ndarray
    E: np.ndarray = field(repr=False)

    @property
    def generators(self) -> list[Generator]:
        return [Generator(i + 1, float(self.delta[i]), float(self.omega[i]),
                          float(self.H[i]), float(self.p_m[i]), float(self.E[i]))
                for i in range(len(self.delta))]


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def apply_schedules(config: SystemConfig, t: float, t_step: float | None = None):
    """Effective inertia and load scaling at time ``t``.

    Step schedules are right-continuous. Inside an integration step they are
    frozen at ``t_step`` (the step's start time) so that a discontinuity never
    falls between Runge-Kutta stages.

    Returns ``(H, load_scale)``.
    """
    if t < 0:
        raise ConfigurationError("schedules are defined for t >= 0")
    ts = t if t_step is None else t_step
    H = config.H.copy()
    for s in config.inertia_schedule:
        i = s.machine - 1
        if isinstance(s, StepSchedule):
            if ts >= s.t:
                H[i] *= s.factor
        else:
            H[i] *= 1.0 + s.amplitude * math.sin(2.0 * math.pi * t / s.period + s.phase)
    if np.any(H <= 0):
        bad = int(np.argmin(H)) + 1
        raise ConfigurationError(f"schedule yields nonpositive inertia for machine {bad}")
    if config.load_schedule is None:
        scale = np.ones(config.n_loads)
    else:
        scale = config.load_schedule.scaling(t, config.n_loads)
    return H, scale


def effective_admittance(config: SystemConfig, load_scale: np.ndarray | None = None):
    """Reduced admittance with the loads scaled by ``load_scale``."""
    if load_scale is None:
        return config.admittance
    U = config.load_u
    return config.admittance + (U.T * ((load_scale - 1.0) * config.load_y)) @ U


def _power(delta, E, Y, U=None, dy=None):
    v = E * np.exp(1j * delta)
    i = Y @ v
    if U is not None:
        i = i + U.T @ (dy * (U @ v))
    return (v * np.conj(i)).real


def _load_terms(config, load_scale):
    if load_scale is None or config.load_schedule is None:
        return None, None
    return config.load_u, (load_scale - 1.0) * config.load_y


def electrical_power(state: GridState, config: SystemConfig,
                     load_scale: np.ndarray | None = None) -> np.ndarray:
    """Per-machine electrical power p_e,i (pu) of ``state`` on ``config``'s network."""
    delta = np.asarray(state.delta, dtype=float)
    E = np.asarray(state.E, dtype=float)
    if delta.shape != (config.N,) or E.shape != (config.N,):
        raise ConfigurationError(
            f"state has {delta.size} machines but config has {config.N}")
    p = _power(delta, E, config.admittance, *_load_terms(config, load_scale))
    if not np.all(np.isfinite(p)):
        raise NumericalDivergenceError("electrical power is not finite",
                                       machine=int(np.flatnonzero(~np.isfinite(p))[0]) + 1)
    return p


def mechanical_power(config: SystemConfig, omega: np.ndarray) -> np.ndarray:
    return config.p_set - config.droop * (omega - config.omega_s) / config.omega_s


def initial_state(config: SystemConfig, t: float = 0.0, omega=None) -> GridState:
    """State at the configured operating point (``delta0``, ``omega_s``)."""
    omega = np.full(config.N, config.omega_s) if omega is None else np.asarray(omega, float)
    H, scale = apply_schedules(config, t)
    delta = config.delta0.copy()
    pe = _power(delta, config.E, config.admittance, *_load_terms(config, scale))
    return GridState(t, delta, omega, H, mechanical_power(config, omega), pe, config.E)


def swing_step(state: GridState, config: SystemConfig) -> GridState:
    """Advance the swing dynamics by one classical RK4 step of ``config.step_dt``."""
    h = config.step_dt
    t0 = state.t
    E = state.E
    ws = config.omega_s

    def rhs(t, delta, omega):
        H, scale = apply_schedules(config, t, t_step=t0)
        pe = _power(delta, E, config.admittance, *_load_terms(config, scale))
        pm = mechanical_power(config, omega)
        return omega - ws, ws / (2.0 * H) * (pm - pe)

    d0, w0 = state.delta, state.omega
    k1d, k1w = rhs(t0, d0, w0)
    k2d, k2w = rhs(t0 + h / 2, d0 + h / 2 * k1d, w0 + h / 2 * k1w)
    k3d, k3w = rhs(t0 + h / 2, d0 + h / 2 * k2d, w0 + h / 2 * k2w)
    k4d, k4w = rhs(t0 + h, d0 + h * k3d, w0 + h * k3w)
    delta = d0 + h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
    omega = w0 + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)

    bad = ~(np.isfinite(delta) & np.isfinite(omega))
    if bad.any():
        i = int(np.flatnonzero(bad)[0]) + 1
        raise NumericalDivergenceError(f"machine {i} diverged at t={t0 + h:.6g} s", machine=i)

    t1 = t0 + h
    H, scale = apply_schedules(config, t1)
    pe = _power(delta, E, config.admittance, *_load_terms(config, scale))
    return GridState(t1, delta, omega, H, mechanical_power(config, omega), pe, E)


def simulate(config: SystemConfig, duration: float, state: GridState | None = None):
    """Integrate for ``duration`` seconds; returns the list of visited states."""
    state = initial_state(config) if state is None else state
    steps = int(round(duration / config.step_dt))
    out = [state]
    for _ in range(steps):
        state = swing_step(state, config)
        out.append(state)
    return out


# --------------------------------------------------------------------------
# synthetic systems
# --------------------------------------------------------------------------

def synthetic_system(areas: Sequence[Sequence[float]] = ((150, 150), (100, 100), (60, 60)),
                     intra_b: float = 20.0, inter_b: float = 4.0,
                     loss_ratio: float = 0.05, p_load: float = 30.0,
                     droop: float = 60.0, **kwargs) -> SystemConfig:
    """A small ring-of-areas test system with an equilibrium at delta0.

    ``areas`` lists the machine inertias per area. Machines inside an area are
    coupled with susceptance ``intra_b``; neighbouring areas (in a ring) are
    coupled through their first machines with ``inter_b``. Every machine has a
    local load conductance ``p_load`` and the mechanical setpoints are chosen so
    that the configured angles are an equilibrium.
    """
    H = np.array([h for a in areas for h in a], dtype=float)
    N = H.size
    owner = np.array([j for j, a in enumerate(areas) for _ in a])
    first = [int(np.flatnonzero(owner == j)[0]) for j in range(len(areas))]
    B = np.zeros((N, N))
    for i in range(N):
        for k in range(i + 1, N):
            if owner[i] == owner[k]:
                B[i, k] = intra_b
    na = len(areas)
    for j in range(na):
        k = (j + 1) % na
        if na == 2 and j == 1:
            break
        a, b = sorted((first[j], first[k]))
        B[a, b] += inter_b
    B = B + B.T
    Y = -(loss_ratio * B) + 1j * B
    # series elements contribute -sum of off-diagonals to the diagonal
    Y[np.diag_indices(N)] = -Y.sum(axis=1)
    Y[np.diag_indices(N)] += p_load
    E = np.full(N, 1.0)
    # spread angles so that inter-area flows are nonzero
    delta0 = 0.05 * np.sin(np.arange(N) * 1.3)
    p_set = _power(delta0, E, Y)
    kw = dict(name=f"synthetic-{N}")
    kw.update(kwargs)
    return SystemConfig(Y, H, E, p_set, delta0=delta0, droop=np.full(N, droop),
                        load_y=np.full(N, p_load, dtype=complex),
                        load_u=np.eye(N, dtype=complex), **kw)


# --------------------------------------------------------------------------
# grid definition files
# --------------------------------------------------------------------------

MACHINE_COLUMNS = ("id", "H", "E", "p_set", "delta0", "droop")


def _sections(text: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    cur = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip().lower()
            out.setdefault(cur, [])
            continue
        if cur is None:
            raise ConfigurationError(f"content outside a section: {raw!r}")
        out[cur].append(line)
    return out


def _kv(tokens: Sequence[str]) -> dict[str, str]:
    d = {}
    for tok in tokens:
        if "=" not in tok:
            raise ConfigurationError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        d[k.strip()] = v.strip()
    return d


def parse_schedule_line(line: str):
    """Parse one schedule entry, e.g. ``inertia_step machine=1 t=40 factor=0.8``."""
    kind, *rest = line.replace(",", " ").split()
    a = _kv(rest)
    try:
        if kind == "inertia_step":
            return StepSchedule(int(a["machine"]), float(a["t"]), float(a["factor"]))
        if kind == "inertia_sine":
            return SineSchedule(int(a["machine"]), float(a["amplitude"]), float(a["period"]),
                                float(a.get("phase", 0.0)))
        if kind == "load_random":
            return RandomLoadSchedule(float(a.get("period", 2.0)), float(a.get("amplitude", 0.02)),
                                      float(a.get("ramp", 1.0)), int(a.get("seed", 0)))
    except KeyError as exc:
        raise ConfigurationError(f"schedule {kind!r} is missing {exc}") from None
    raise ConfigurationError(f"unknown schedule kind {kind!r}")


def format_schedule(s) -> str:
    if isinstance(s, StepSchedule):
        return f"inertia_step machine={s.machine} t={s.t!r} factor={s.factor!r}"
    if isinstance(s, SineSchedule):
        return (f"inertia_sine machine={s.machine} amplitude={s.amplitude!r} "
                f"period={s.period!r} phase={s.phase!r}")
    return (f"load_random period={s.period!r} amplitude={s.amplitude!r} "
            f"ramp={s.ramp!r} seed={s.seed}")


def parse_grid(text: str, **overrides) -> SystemConfig:
    sec = _sections(text)
    for required in ("machines", "admittance"):
        if required not in sec:
            raise ConfigurationError(f"grid file lacks a [{required}] section")
    system = _kv(sec.get("system", []))
    rows = [line.split() for line in sec["machines"]]
    width = {len(r) for r in rows}
    if len(width) != 1 or not 5 <= width.pop() <= len(MACHINE_COLUMNS):
        raise ConfigurationError("machine rows need 5 or 6 columns: " + " ".join(MACHINE_COLUMNS))
    table = np.array(rows, dtype=float)
    ids = table[:, 0].astype(int)
    if list(ids) != list(range(1, len(ids) + 1)):
        raise ConfigurationError("machine ids must be 1..N in order")
    N = len(ids)
    Y = np.array([line.split() for line in sec["admittance"]], dtype=float)
    if Y.shape != (N, 2 * N):
        raise ConfigurationError(f"admittance must be {N} rows of {2 * N} numbers, got {Y.shape}")
    Y = Y[:, 0::2] + 1j * Y[:, 1::2]
    load_y = load_u = None
    if sec.get("loads"):
        L = np.array([line.split() for line in sec["loads"]], dtype=float)
        if L.shape[1] != 3 + 2 * N:
            raise ConfigurationError(f"load rows need {3 + 2 * N} numbers: id y_re y_im u_re u_im ...")
        load_y = L[:, 1] + 1j * L[:, 2]
        load_u = L[:, 3::2] + 1j * L[:, 4::2]
    inertia, load = [], None
    for line in sec.get("schedules", []):
        s = parse_schedule_line(line)
        if isinstance(s, RandomLoadSchedule):
            load = s
        else:
            inertia.append(s)
    kw = dict(
        admittance=Y, H=table[:, 1], E=table[:, 2], p_set=table[:, 3], delta0=table[:, 4],
        droop=table[:, 5] if table.shape[1] > 5 else None,
        load_y=load_y, load_u=load_u,
        omega_s=float(system.get("omega_s", OMEGA_S_60HZ)),
        step_dt=float(system.get("step_dt", 1e-3)),
        inertia_schedule=tuple(inertia), load_schedule=load,
        name=system.get("name", "grid"),
    )
    kw.update(overrides)
    return SystemConfig(**kw)


def load_grid(path, **overrides) -> SystemConfig:
    return parse_grid(Path(path).read_text(encoding="utf-8"), **overrides)


def format_grid(config: SystemConfig, header: str = "") -> str:
    lines = []
    if header:
        lines += ["# " + h for h in header.splitlines()]
    lines += ["[system]", f"name = {config.name}", f"omega_s = {float(config.omega_s)!r}",
              f"step_dt = {float(config.step_dt)!r}", "", "[machines]",
              "# " + " ".join(MACHINE_COLUMNS)]
    for i in range(config.N):
        vals = (config.H[i], config.E[i], config.p_set[i], config.delta0[i], config.droop[i])
        lines.append(f"{i + 1} " + " ".join(repr(float(v)) for v in vals))
    lines += ["", "[admittance]", "# row-major, each entry as a re im pair"]
    for row in config.admittance:
        lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    lines += ["", "[loads]", "# id y_re y_im then the sensitivity vector u as re im pairs"]
    for l in range(config.n_loads):
        y = config.load_y[l]
        u = " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in config.load_u[l])
        lines.append(f"{l + 1} {float(y.real)!r} {float(y.imag)!r} {u}")
    sched = [format_schedule(s) for s in config.inertia_schedule]
    if config.load_schedule is not None:
        sched.append(format_schedule(config.load_schedule))
    if sched:
        lines += ["", "[schedules]"] + sched
    return "\n".join(lines) + "\n"


def save_grid(config: SystemConfig, path, header: str = "") -> None:
    Path(path).write_text(format_grid(config, header), encoding="utf-8")


def bundled_grid_path(name: str = "ieee39") -> Path:
    return Path(__file__).parent / "data" / f"{name}.grid"
