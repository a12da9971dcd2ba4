"""Control-area partition, measured area signals, COI diagnostics and noise."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .grid import GridState


@dataclass(frozen=True)
class AreaPartition:
    """Disjoint, nonempty machine sets (1-based ids), one per control area."""

    membership: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "membership",
                           tuple(tuple(int(i) for i in m) for m in self.membership))
        for j, m in enumerate(self.membership):
            if not m:
                raise ConfigurationError(f"area {j + 1} has no machines")
        flat = [i for m in self.membership for i in m]
        if len(flat) != len(set(flat)):
            raise ConfigurationError("areas must be disjoint")

    @classmethod
    def parse(cls, text: str) -> "AreaPartition":
        """``"1; 2-7; 8-10"`` -> ({1}, {2..7}, {8..10})."""
        return cls(tuple(parse_id_list(part) for part in text.split(";")))

    @property
    def n(self) -> int:
        return len(self.membership)

    @property
    def N(self) -> int:
        return sum(len(m) for m in self.membership)

    def validate(self, N: int) -> None:
        flat = sorted(i for m in self.membership for i in m)
        if flat != list(range(1, N + 1)):
            raise ConfigurationError(f"areas must cover machines 1..{N} exactly, got {flat}")

    def matrix(self) -> np.ndarray:
        """n x N 0/1 membership matrix."""
        M = np.zeros((self.n, self.N))
        for j, m in enumerate(self.membership):
            M[j, [i - 1 for i in m]] = 1.0
        return M

    def area_of(self) -> np.ndarray:
        """0-based area index of every machine."""
        out = np.empty(self.N, dtype=int)
        for j, m in enumerate(self.membership):
            out[[i - 1 for i in m]] = j
        return out

    def format(self) -> str:
        return "; ".join(" ".join(str(i) for i in m) for m in self.membership)


def parse_id_list(text: str) -> tuple[int, ...]:
    ids: list[int] = []
    for tok in text.replace(",", " ").split():
        if "-" in tok:
            a, b = tok.split("-")
            ids.extend(range(int(a), int(b) + 1))
        else:
            ids.append(int(tok))
    return tuple(ids)


@dataclass(frozen=True)
class AreaSignals:
    """What each TSO measures: average frequency and area power totals."""

    t: float
    omega_av: np.ndarray
    p_m_ca: np.ndarray
    p_e_ca: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.omega_av, self.p_m_ca, self.p_e_ca])

    @classmethod
    def unstack(cls, t: float, v: np.ndarray) -> "AreaSignals":
        n = v.size // 3
        return cls(t, v[:n], v[n:2 * n], v[2 * n:])


@dataclass(frozen=True)
class CoiDiagnostics:
    omega_coi: float
    omega_coi_area: np.ndarray
    H_ca: np.ndarray
    H_tot: float
    p_e_tot: float
    p_m_tot: float


def _check(state: GridState, partition: AreaPartition) -> None:
    partition.validate(len(state.omega))


def aggregate_area_signals(state: GridState, partition: AreaPartition) -> AreaSignals:
    _check(state, partition)
    omega_av = np.array([state.omega[[i - 1 for i in m]].mean() for m in partition.membership])
    p_m = np.array([state.p_m[[i - 1 for i in m]].sum() for m in partition.membership])
    p_e = np.array([state.p_e[[i - 1 for i in m]].sum() for m in partition.membership])
    return AreaSignals(state.t, omega_av, p_m, p_e)


def coi_diagnostics(state: GridState, partition: AreaPartition) -> CoiDiagnostics:
    _check(state, partition)
    H, w = state.H, state.omega
    H_ca = np.array([H[[i - 1 for i in m]].sum() for m in partition.membership])
    coi_area = np.array([(H[idx] * w[idx]).sum() / H[idx].sum()
                         for idx in ([i - 1 for i in m] for m in partition.membership)])
    return CoiDiagnostics(
        omega_coi=float((H * w).sum() / H.sum()),
        omega_coi_area=coi_area,
        H_ca=H_ca,
        H_tot=float(H_ca.sum()),
        p_e_tot=float(state.p_e.sum()),
        p_m_tot=float(state.p_m.sum()),
    )


class AreaAggregator:
    """Precomputed membership matrix for fast per-step aggregation."""

    def __init__(self, partition: AreaPartition, N: int):
        partition.validate(N)
        self.partition = partition
        self.M = partition.matrix()
        self.count = self.M.sum(axis=1)

    def __call__(self, state: GridState) -> AreaSignals:
        M = self.M
        return AreaSignals(state.t, (M @ state.omega) / self.count, M @ state.p_m, M @ state.p_e)


# --------------------------------------------------------------------------
# measurement noise
# --------------------------------------------------------------------------

NOISE_KINDS = ("none", "gaussian", "laplacian")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive zero-mean measurement noise at fixed SNRs.

    ``snr_freq_db`` applies to the average-frequency channels, ``snr_power_db``
    to both power channels. Signal power is the mean square of the clean
    signal's AC part (deviation from its mean) over the last ``window`` s.
    """

    kind: str = "none"
    snr_power_db: float = 58.0
    snr_freq_db: float = 95.0
    seed: int = 0
    window: float = 10.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigurationError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.snr_power_db) and math.isfinite(self.snr_freq_db)):
            raise ConfigurationError("SNRs must be finite")
        if self.window <= 0:
            raise ConfigurationError("noise window must be positive")

    def snr_db(self, n: int) -> np.ndarray:
        """Per-channel SNR for the stacked (omega_av, p_m, p_e) layout."""
        return np.concatenate([np.full(n, self.snr_freq_db), np.full(2 * n, self.snr_power_db)])


def noise_power(signal_power, snr_db):
    return np.asarray(signal_power) * 10.0 ** (-np.asarray(snr_db) / 10.0)


def unit_noise(kind: str, rng: np.random.Generator, size=None):
    """Zero-mean, unit-variance samples of the given noise kind."""
    if kind == "gaussian":
        return rng.standard_normal(size)
    if kind == "laplacian":
        # variance of Laplace(0, b) is 2 b^2
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size)
    raise ConfigurationError(f"no sampler for noise kind {kind!r}")


def channel_rngs(spec: NoiseSpec, channels: int) -> list[np.random.Generator]:
    """One independent stream per channel, derived from the spec's seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(channels)]


def add_noise(signals: AreaSignals, spec: NoiseSpec, window: np.ndarray,
              rngs: Sequence[np.random.Generator] | None = None) -> AreaSignals:
    """Noisy copy of ``signals``.

    ``window`` holds recent clean samples, shape (m, 3n) in the stacked
    (omega_av, p_m, p_e) layout; it sets each channel's AC signal power.
    """
    if spec.kind == "none":
        return signals
    clean = signals.stack()
    window = np.asarray(window, dtype=float).reshape(-1, clean.size)
    if window.shape[0] < 2:
        raise ConfigurationError("noise window needs at least two samples")
    p_sig = window.var(axis=0)
    sigma = np.sqrt(noise_power(p_sig, spec.snr_db(clean.size // 3)))
    rngs = channel_rngs(spec, clean.size) if rngs is None else rngs
    noise = np.array([unit_noise(spec.kind, r) for r in rngs])
    return AreaSignals.unstack(signals.t, clean + sigma * noise)


class NoiseInjector:
    """Streaming version of :func:`add_noise` with an O(1) rolling window.

    Keeps running sums over the last ``window / dt`` clean samples per channel
    and draws each channel's noise from its own seeded stream in blocks.
    """

    BLOCK = 4096

    def __init__(self, spec: NoiseSpec, n: int, dt: float):
        self.spec = spec
        self.n = n
        self.channels = 3 * n
        self.length = max(2, int(round(spec.window / dt)))
        self.snr = spec.snr_db(n)
        self.buf: deque = deque()
        self.ref = None
        self.s1 = np.zeros(self.channels)
        self.s2 = np.zeros(self.channels)
        self.rngs = channel_rngs(spec, self.channels) if spec.kind != "none" else []
        self._block = None
        self._pos = self.BLOCK
        self.injected_sq = np.zeros(self.channels)
        self.signal_sq = np.zeros(self.channels)
        self.samples = 0

    def _draw(self) -> np.ndarray:
        if self._pos >= self.BLOCK:
            self._block = np.array([unit_noise(self.spec.kind, r, self.BLOCK) for r in self.rngs])
            self._pos = 0
        z = self._block[:, self._pos]
        self._pos += 1
        return z

    def signal_power(self) -> np.ndarray:
        m = len(self.buf)
        if m < 2:
            return np.zeros(self.channels)
        mean = self.s1 / m
        return np.maximum(self.s2 / m - mean * mean, 0.0)

    def __call__(self, signals: AreaSignals) -> AreaSignals:
        if self.spec.kind == "none":
            return signals
        x = signals.stack()
        if self.ref is None:
            self.ref = x.copy()
        d = x - self.ref
        self.buf.append(d)
        self.s1 += d
        self.s2 += d * d
        if len(self.buf) > self.length:
            old = self.buf.popleft()
            self.s1 -= old
            self.s2 -= old * old
        p_sig = self.signal_power()
        sigma = np.sqrt(noise_power(p_sig, self.snr))
        noise = sigma * self._draw()
        self.injected_sq += noise * noise
        self.signal_sq += p_sig
        self.samples += 1
        return AreaSignals.unstack(signals.t, x + noise)

    def empirical_snr_db(self) -> np.ndarray:
        """Realised SNR per channel (average window signal power over injected noise power)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return 10.0 * np.log10(self.signal_sq / self.injected_sq)
