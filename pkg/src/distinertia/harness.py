"""Scenario configuration, the closed simulation/estimation loop and outputs.

A run wires the pieces together once per step ``k`` (t_k = k dt):

    grid state -> area signals (+ noise) -> filters -> regressor rows
               -> mailbox exchange -> consensus + innovations round

and then advances the grid with one RK4 step. Everything that crosses an
area border goes through the :class:`~distinertia.graph.Mailbox`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .areas import AreaAggregator, AreaPartition, NoiseInjector, NoiseSpec
from .errors import ConfigurationError, FrequencyBandError
from .estimator import (DEFAULT_ALPHA, DEFAULT_GAMMA, EstimatorBank, check_step_size, ci_step,
                        pe_report, reconstruct_inertia)
from .graph import (CommGraph, Mailbox, connectivity_report, incidence_and_laplacian,
                    parse_edges)
from .grid import (RandomLoadSchedule, StepSchedule, SystemConfig, _sections, bundled_grid_path,
                   format_schedule, initial_state, load_grid, parse_schedule_line, swing_step,
                   synthetic_system)
from .regression import AreaRegression, FilterParams

CASES = ("nominal", "gaussian", "laplacian")
STREAMS = ("estimates", "truth", "signals", "regression", "machines", "errors")
SCENARIO_DIR = Path(__file__).parent / "data" / "scenarios"


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------

@dataclass
class Scenario:
    """Everything a run depends on. ``seed`` drives loads and noise."""

    grid: str = "ieee39"
    partition: AreaPartition = field(default_factory=lambda: AreaPartition.parse("1; 2-7; 8-10"))
    comm: CommGraph = field(default_factory=lambda: CommGraph.complete(3))
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    filter: FilterParams = field(default_factory=FilterParams)
    gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA
    h_init: float = 100.0
    decimation: int = 1
    delay: int = 0
    inertia_schedule: tuple = ()
    load_schedule: RandomLoadSchedule | None = None
    duration: float = 60.0
    dt: float = 1e-3
    seed: int = 0
    warmup: float = 10.0
    base_mva: float | None = None
    freq_band_hz: float | None = None
    record_every: int = 10
    settle_horizon: float = 20.0
    settle_threshold: float = 0.05
    name: str = "scenario"
    base_dir: str = "."

    def __post_init__(self):
        if self.duration < 0:
            raise ConfigurationError("duration must be nonnegative")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.decimation < 1 or self.record_every < 1:
            raise ConfigurationError("decimation and record_every must be >= 1")
        if self.comm.n != self.partition.n:
            raise ConfigurationError(
                f"communication graph has {self.comm.n} nodes for {self.partition.n} areas")
        if self.comm.start > 0:
            raise ConfigurationError("communication schedule must start at t <= 0")
        if self.h_init <= 0:
            raise ConfigurationError("h_init must be positive")

    def switch_times(self) -> list[float]:
        ts = [t for t in self.comm.switch_times if t > 0]
        ts += [s.t for s in self.inertia_schedule if isinstance(s, StepSchedule)]
        return sorted(set(ts))

    def events(self) -> list[float]:
        """Discrete events: the start, topology switches and inertia steps."""
        return [0.0] + [t for t in self.switch_times() if t < self.duration]

    def seeds(self) -> tuple[int, int]:
        load_seed, noise_seed = np.random.SeedSequence(self.seed).generate_state(2)
        return int(load_seed), int(noise_seed)

    def with_case(self, case: str) -> "Scenario":
        if case not in CASES:
            raise ConfigurationError(f"case must be one of {CASES}")
        kind = "none" if case == "nominal" else case
        return replace(self, noise=replace(self.noise, kind=kind), name=f"{self.name}-{case}")

    def system(self) -> SystemConfig:
        """Grid config with this scenario's step, schedules, seed and base."""
        if self.grid.startswith("synthetic"):
            n_ca = self.partition.n
            sizes = [len(m) for m in self.partition.membership]
            spec = self.grid.split(":", 1)[1] if ":" in self.grid else ""
            hs = [float(x) for x in spec.split(",")] if spec else [150.0, 100.0, 60.0]
            if len(hs) != n_ca:
                raise ConfigurationError("synthetic grid needs one inertia per area")
            cfg = synthetic_system([[h] * s for h, s in zip(hs, sizes)])
        else:
            path = Path(self.grid)
            if not path.suffix:
                path = bundled_grid_path(self.grid)
            elif not path.is_absolute():
                path = Path(self.base_dir) / path
            cfg = load_grid(path)
        load = self.load_schedule
        if load is not None:
            load = replace(load, seed=self.seeds()[0])
        cfg = cfg.with_(step_dt=self.dt, inertia_schedule=tuple(self.inertia_schedule),
                        load_schedule=load)
        if self.base_mva is not None:
            cfg = rescale_base(cfg, cfg_base_mva(cfg), self.base_mva)
        self.partition.validate(cfg.N)
        return cfg


def cfg_base_mva(cfg: SystemConfig) -> float:
    return getattr(cfg, "base_mva", 100.0)


def rescale_base(cfg: SystemConfig, old_mva: float, new_mva: float) -> SystemConfig:
    """Express ``cfg`` on another system power base.

    Powers, admittances, droop gains and inertia constants all scale with
    ``old_mva / new_mva``; angles, EMFs and frequencies do not.
    """
    k = old_mva / new_mva
    return cfg.with_(admittance=cfg.admittance * k, H=cfg.H * k, p_set=cfg.p_set * k,
                     droop=cfg.droop * k, load_y=cfg.load_y * k)


def _kv_lines(lines) -> dict[str, str]:
    out = {}
    for line in lines:
        if "=" not in line:
            raise ConfigurationError(f"expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip().lower()] = v.strip()
    return out


def _opt_float(v: str | None):
    if v is None or v.strip().lower() in ("", "none", "off"):
        return None
    return float(v)


SCENARIO_KEYS = {
    "scenario": {"name", "grid", "duration", "dt", "seed", "warmup", "base_mva",
                 "freq_band_hz", "record_every", "settle_horizon", "settle_threshold"},
    "noise": {"kind", "snr_power_db", "snr_freq_db", "window"},
    "filter": {"lambda1", "lambda2"},
    "estimator": {"gamma", "alpha", "h_init", "decimation", "delay"},
    "areas": {"partition"},
}


def parse_scenario(text: str, base_dir: str = ".") -> Scenario:
    """Parse the scenario grammar (see README, "Scenario files")."""
    sec = _sections(text)
    unknown = set(sec) - set(SCENARIO_KEYS) - {"comm", "schedules"}
    if unknown:
        raise ConfigurationError(f"unknown scenario sections: {sorted(unknown)}")
    kv = {name: _kv_lines(sec.get(name, [])) for name in SCENARIO_KEYS}
    for name, keys in SCENARIO_KEYS.items():
        extra = set(kv[name]) - keys
        if extra:
            raise ConfigurationError(f"unknown keys in [{name}]: {sorted(extra)}")
    s, nz, fl, es = kv["scenario"], kv["noise"], kv["filter"], kv["estimator"]
    if "partition" not in kv["areas"]:
        raise ConfigurationError("[areas] needs a partition")
    partition = AreaPartition.parse(kv["areas"]["partition"])
    comm_lines = _kv_lines(sec.get("comm", []))
    if comm_lines:
        comm = CommGraph(partition.n, tuple(sorted((float(t), parse_edges(e))
                                                   for t, e in comm_lines.items())))
    else:
        comm = CommGraph.complete(partition.n)
    inertia, load = [], None
    for line in sec.get("schedules", []):
        item = parse_schedule_line(line)
        if isinstance(item, RandomLoadSchedule):
            load = item
        else:
            inertia.append(item)
    return Scenario(
        grid=s.get("grid", "ieee39"),
        partition=partition,
        comm=comm,
        noise=NoiseSpec(nz.get("kind", "none"), float(nz.get("snr_power_db", 58.0)),
                        float(nz.get("snr_freq_db", 95.0)), 0, float(nz.get("window", 10.0))),
        filter=FilterParams(float(fl.get("lambda1", 1.0)), float(fl.get("lambda2", 1.0))),
        gamma=float(es.get("gamma", DEFAULT_GAMMA)),
        alpha=float(es.get("alpha", DEFAULT_ALPHA)),
        h_init=float(es.get("h_init", 100.0)),
        decimation=int(es.get("decimation", 1)),
        delay=int(es.get("delay", 0)),
        inertia_schedule=tuple(inertia),
        load_schedule=load,
        duration=float(s.get("duration", 60.0)),
        dt=float(s.get("dt", 1e-3)),
        seed=int(s.get("seed", 0)),
        warmup=float(s.get("warmup", 10.0)),
        base_mva=_opt_float(s.get("base_mva")),
        freq_band_hz=_opt_float(s.get("freq_band_hz")),
        record_every=int(s.get("record_every", 10)),
        settle_horizon=float(s.get("settle_horizon", 20.0)),
        settle_threshold=float(s.get("settle_threshold", 0.05)),
        name=s.get("name", "scenario"),
        base_dir=base_dir,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists() and not path.suffix:
        path = SCENARIO_DIR / f"{path}.scn"
    return parse_scenario(path.read_text(encoding="utf-8"), base_dir=str(path.parent))


def format_scenario(sc: Scenario) -> str:
    """Scenario file text that parses back to ``sc`` (seed excluded from schedules)."""
    def num(v):
        return "none" if v is None else repr(float(v))
    lines = ["[scenario]", f"name = {sc.name}", f"grid = {sc.grid}",
             f"duration = {num(sc.duration)}", f"dt = {num(sc.dt)}", f"seed = {sc.seed}",
             f"warmup = {num(sc.warmup)}", f"base_mva = {num(sc.base_mva)}",
             f"freq_band_hz = {num(sc.freq_band_hz)}", f"record_every = {sc.record_every}",
             f"settle_horizon = {num(sc.settle_horizon)}",
             f"settle_threshold = {num(sc.settle_threshold)}",
             "", "[areas]", "partition = " + "; ".join(
                 " ".join(str(i) for i in m) for m in sc.partition.membership),
             "", "[comm]"]
    for t, edges in sc.comm.schedule:
        lines.append(f"{t!r} = " + (", ".join(f"{a}-{b}" for a, b in edges) or "none"))
    lines += ["", "[noise]", f"kind = {sc.noise.kind}",
              f"snr_power_db = {num(sc.noise.snr_power_db)}",
              f"snr_freq_db = {num(sc.noise.snr_freq_db)}", f"window = {num(sc.noise.window)}",
              "", "[filter]", f"lambda1 = {num(sc.filter.lambda1)}",
              f"lambda2 = {num(sc.filter.lambda2)}",
              "", "[estimator]", f"gamma = {num(sc.gamma)}", f"alpha = {num(sc.alpha)}",
              f"h_init = {num(sc.h_init)}", f"decimation = {sc.decimation}",
              f"delay = {sc.delay}", "", "[schedules]"]
    lines += [format_schedule(s) for s in sc.inertia_schedule]
    if sc.load_schedule is not None:
        lines.append(format_schedule(sc.load_schedule))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

@dataclass
class RunMetrics:
    """Summary of one run. Scalar metrics only use samples after ``warmup``.

    ``runtime_s`` is wall-clock time; it is kept out of the written summary
    so that output files depend on the scenario and seed alone.
    """

    name: str
    steps: int
    duration: float
    t: np.ndarray = field(repr=False)
    param_error: np.ndarray = field(repr=False)  # (m, n) ||theta_j - theta|| / ||theta||
    disagreement: np.ndarray = field(repr=False)  # (m,) max_jk ||theta_j - theta_k||
    H_tot_hat: np.ndarray = field(repr=False)  # (m, n)
    H_tot: np.ndarray = field(repr=False)  # (m,)
    freq_min_hz: float = math.nan
    freq_max_hz: float = math.nan
    final_error: float = math.nan
    final_H_tot_error: float = math.nan
    steady_error: float = math.nan
    settling: list = field(default_factory=list)
    settled: bool = False
    pe: object = None
    connectivity: object = None
    noise_snr_db: list | None = None
    runtime_s: float = 0.0
    band_ok: bool = True

    @property
    def tracking_error(self) -> np.ndarray:
        """max_j ||theta_j - theta(t)|| / ||theta(t)||."""
        return self.param_error.max(axis=1) if self.param_error.size else np.zeros(0)

    def summary(self) -> dict:
        d = {
            "name": self.name, "steps": self.steps, "duration": self.duration,
            "freq_min_hz": self.freq_min_hz, "freq_max_hz": self.freq_max_hz,
            "final_error": self.final_error, "final_H_tot_error": self.final_H_tot_error,
            "steady_error": self.steady_error, "settled": self.settled,
            "settling": self.settling, "band_ok": self.band_ok,
            "noise_snr_db": self.noise_snr_db,
        }
        if self.pe is not None:
            d["pe"] = {"window": self.pe.window, "iota_lower": self.pe.iota_lower,
                       "iota_upper": self.pe.iota_upper, "r2": self.pe.regressor_bound,
                       "pe_satisfied": self.pe.pe_satisfied}
        if self.connectivity is not None:
            c = self.connectivity
            d["connectivity"] = {"window": c.window, "lambda2_lower": c.lambda2_lower,
                                 "r3": c.laplacian_norm_bound,
                                 "connected_on_average": c.connected_on_average}
        return _jsonable(d)


@dataclass
class RunResult:
    scenario: Scenario
    metrics: RunMetrics
    streams: dict  # name -> (header list, rows array)
    nu: np.ndarray = field(repr=False)  # (steps, n) full-rate regressors
    y: np.ndarray = field(repr=False)
    theta_true: np.ndarray = field(repr=False)  # (steps, n)
    theta_hat: np.ndarray = field(repr=False)  # (steps, n, n)
    omega_s: float = 0.0


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return o


def settling_analysis(t, err, events, end, horizon=20.0, threshold=0.05):
    """Per event: first time the error is below ``threshold`` and whether it
    got there within ``horizon`` and stayed there until the next event.

    When the next event comes before ``horizon`` has elapsed the event is
    not judged on its own (its transient carries into the next one).
    """
    out = []
    bounds = list(events) + [end]
    for e0, e1 in zip(bounds[:-1], bounds[1:]):
        sel = (t >= e0) & (t < e1) if e1 < end else (t >= e0) & (t <= e1)
        ts, es = t[sel], err[sel]
        below = es < threshold
        # settle time: start of the final run of below-threshold samples
        if below.size and below[-1]:
            last_above = np.flatnonzero(~below)
            t_settle = float(ts[last_above[-1] + 1]) if last_above.size else float(ts[0])
        else:
            t_settle = math.nan
        judged = e1 - e0 >= horizon
        ok = (not judged) or (not math.isnan(t_settle) and t_settle <= e0 + horizon)
        out.append({"event": float(e0), "next": float(e1), "settle_time": t_settle,
                     "judged": judged, "ok": bool(ok)})
    return out


def run_scenario(scenario: Scenario, out_dir=None, single_threaded: bool = False,
                 enforce_band: bool = True, progress=None) -> RunResult:
    """Execute ``scenario``; optionally write CSV streams and summaries to ``out_dir``.

    Raises :class:`NumericalDivergenceError` on divergence and
    :class:`FrequencyBandError` (after writing outputs) when a configured
    frequency band is violated and ``enforce_band`` is set.
    """
    t_start = time.perf_counter()
    sc = scenario
    cfg = sc.system()
    n = sc.partition.n
    ws = cfg.omega_s
    dt = sc.dt
    steps = int(round(sc.duration / dt))
    dt_est = dt * sc.decimation

    state = initial_state(cfg)
    aggregate = AreaAggregator(sc.partition, cfg.N)
    _, noise_seed = sc.seeds()
    noise = NoiseInjector(replace(sc.noise, seed=noise_seed), n, dt)
    regression = AreaRegression(n, sc.filter, dt, ws)
    bank = EstimatorBank.uniform(n, ws / (2.0 * sc.h_init), sc.gamma, sc.alpha)
    r3 = max(np.linalg.norm(incidence_and_laplacian(sc.comm, t).L, 2)
             for t in sc.comm.switch_times)
    check_step_size(bank, dt_est, r3)
    mailbox = Mailbox(sc.comm, sc.delay)
    M = sc.partition.matrix()

    nu_hist = np.zeros((steps, n))
    y_hist = np.zeros((steps, n))
    th_true = np.zeros((steps, n))
    th_hat = np.zeros((steps, n, n))
    rec = sc.record_every
    m = (steps + rec - 1) // rec
    machines = np.zeros((m, 1 + 2 * cfg.N))
    signals_rec = np.zeros((m, 1 + 3 * n))
    wmin, wmax = np.inf, -np.inf
    rows = None

    executor = None if single_threaded else ThreadPoolExecutor(max_workers=n)
    try:
        for k in range(steps):
            t = k * dt
            clean = aggregate(state)
            meas = noise(clean)
            rows = regression(meas)
            nu_hist[k] = [r.nu for r in rows]
            y_hist[k] = [r.y for r in rows]
            th_true[k] = ws / (2.0 * (M @ state.H))
            th_hat[k] = bank.theta_hat
            wmin = min(wmin, state.omega.min())
            wmax = max(wmax, state.omega.max())
            if k % rec == 0:
                i = k // rec
                machines[i] = np.concatenate([[t], state.omega, state.H])
                signals_rec[i] = np.concatenate([[t], meas.stack()])
            if k % sc.decimation == 0:
                mailbox.begin(k // sc.decimation, t)
                for j in range(n):
                    mailbox.post(j + 1, bank.theta_hat[j])
                received = [[th for _, th in mailbox.collect(j + 1)] for j in range(n)]
                bank = ci_step(bank, rows, received, dt_est, executor)
            state = swing_step(state, cfg)
            if progress is not None and k % 1000 == 0:
                progress(k, steps)
    finally:
        if executor is not None:
            executor.shutdown()

    result = _finish(sc, cfg, steps, nu_hist, y_hist, th_true, th_hat, machines,
                     signals_rec, wmin, wmax, noise, time.perf_counter() - t_start)
    if out_dir is not None:
        write_outputs(result, out_dir)
    if enforce_band and not result.metrics.band_ok:
        raise FrequencyBandError(
            f"frequencies left 60 +/- {sc.freq_band_hz} Hz: "
            f"[{result.metrics.freq_min_hz:.5f}, {result.metrics.freq_max_hz:.5f}] Hz")
    return result


def _finish(sc, cfg, steps, nu_hist, y_hist, th_true, th_hat, machines, signals_rec,
            wmin, wmax, noise, runtime):
    n = sc.partition.n
    ws = cfg.omega_s
    dt = sc.dt
    t_all = np.arange(steps) * dt
    rec = sc.record_every
    idx = np.arange(0, steps, rec)
    t = t_all[idx]
    diff = th_hat[idx] - th_true[idx][:, None, :]
    norm = np.linalg.norm(th_true[idx], axis=1)
    param_error = np.linalg.norm(diff, axis=2) / norm[:, None] if idx.size else np.zeros((0, n))
    pair = th_hat[idx][:, :, None, :] - th_hat[idx][:, None, :, :]
    disagreement = np.linalg.norm(pair, axis=3).max(axis=(1, 2)) if idx.size else np.zeros(0)
    H_tot_true = (ws / 2.0) * (1.0 / th_true[idx]).sum(axis=1) if idx.size else np.zeros(0)
    H_tot_hat = np.array([reconstruct_inertia(th, ws).H_tot_hat for th in th_hat[idx]]) \
        if idx.size else np.zeros((0, n))

    hz = 1.0 / (2.0 * math.pi)
    metrics = RunMetrics(sc.name, steps, sc.duration, t, param_error, disagreement,
                         H_tot_hat, H_tot_true)
    metrics.runtime_s = runtime
    if steps:
        metrics.freq_min_hz = float(wmin * hz)
        metrics.freq_max_hz = float(wmax * hz)
        if sc.freq_band_hz is not None:
            nominal = ws * hz
            metrics.band_ok = bool(metrics.freq_min_hz >= nominal - sc.freq_band_hz and
                                   metrics.freq_max_hz <= nominal + sc.freq_band_hz)
    post = t >= sc.warmup
    if post.any():
        err = metrics.tracking_error
        metrics.final_error = float(err[-1])
        metrics.final_H_tot_error = float(np.max(np.abs(H_tot_hat[-1] - H_tot_true[-1]))
                                          / H_tot_true[-1])
        events = sc.events()
        last_event = np.array([max(e for e in events if e <= x) for x in t])
        steady = post & (t - last_event >= sc.settle_horizon)
        metrics.steady_error = float(err[steady].mean()) if steady.any() else math.nan
        metrics.settling = settling_analysis(t, err, events, sc.duration,
                                             sc.settle_horizon, sc.settle_threshold)
        metrics.settled = all(s["ok"] for s in metrics.settling)
        T = min(20.0, sc.duration - sc.warmup)
        if T > 0 and steps >= int(round(T / dt)):
            metrics.pe = pe_report(nu_hist, dt, T)
            metrics.connectivity = connectivity_report(sc.comm, sc.duration - T, sc.duration)
    if noise.samples:
        metrics.noise_snr_db = noise.empirical_snr_db().tolist()

    # time-series streams (decimated to the recording grid)
    inert = [reconstruct_inertia(th, ws) for th in th_hat[idx]]
    est_rows = []
    for r, (tk, th, ie) in enumerate(zip(t, th_hat[idx], inert)):
        for j in range(n):
            est_rows.append([tk, j + 1, *th[j], ie.a_tot_hat[j], ie.H_tot_hat[j]])
    N = cfg.N
    H_ca_true = (ws / 2.0) / th_true[idx] if idx.size else np.zeros((0, n))
    streams = {
        "estimates": (["t", "area"] + [f"theta_{i + 1}" for i in range(n)] +
                      ["a_tot_hat", "H_tot_hat"], np.array(est_rows).reshape(-1, n + 4)),
        "truth": (["t"] + [f"theta_{i + 1}" for i in range(n)] + ["a_tot"] +
                  [f"H_ca_{i + 1}" for i in range(n)] + ["H_tot"],
                  np.column_stack([t, th_true[idx], 1.0 / (1.0 / th_true[idx]).sum(axis=1),
                                   H_ca_true, H_tot_true])
                  if idx.size else np.zeros((0, 2 * n + 3))),
        "signals": (["t"] + [f"omega_av_{j + 1}" for j in range(n)] +
                    [f"p_m_ca_{j + 1}" for j in range(n)] +
                    [f"p_e_ca_{j + 1}" for j in range(n)], signals_rec),
        "regression": (["t"] + [f"y_{j + 1}" for j in range(n)] +
                       [f"nu_{j + 1}" for j in range(n)],
                       np.column_stack([t, y_hist[idx], nu_hist[idx]])
                       if idx.size else np.zeros((0, 2 * n + 1))),
        "machines": (["t"] + [f"omega_{i + 1}" for i in range(N)] +
                     [f"H_{i + 1}" for i in range(N)], machines),
        "errors": (["t"] + [f"param_error_{j + 1}" for j in range(n)] +
                   ["tracking_error", "disagreement"],
                   np.column_stack([t, param_error, metrics.tracking_error, disagreement])
                   if idx.size else np.zeros((0, n + 3))),
    }
    return RunResult(sc, metrics, streams, nu_hist, y_hist, th_true, th_hat, ws)


# --------------------------------------------------------------------------
# output files
# --------------------------------------------------------------------------

def format_float(v) -> str:
    f = float(v)
    return repr(f) if math.isfinite(f) else "nan"


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV, header row, '.' decimal, shortest round-trip floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(x) for x in row] for row in r]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def write_outputs(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in result.streams.items():
        write_csv(out / f"{name}.csv", header, rows)
    (out / "metrics.json").write_text(
        json.dumps(result.metrics.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "run_metadata.json").write_text(
        json.dumps(run_metadata(result.scenario), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    (out / "scenario.scn").write_text(format_scenario(result.scenario), encoding="utf-8")
    return out


def run_metadata(sc: Scenario) -> dict:
    """Every knob of the run, including derived seeds."""
    load_seed, noise_seed = sc.seeds()
    d = {
        "package_version": __version__,
        "name": sc.name, "grid": sc.grid, "duration": sc.duration, "dt": sc.dt,
        "seed": sc.seed, "load_seed": load_seed, "noise_seed": noise_seed,
        "warmup": sc.warmup, "base_mva": sc.base_mva, "freq_band_hz": sc.freq_band_hz,
        "record_every": sc.record_every, "settle_horizon": sc.settle_horizon,
        "settle_threshold": sc.settle_threshold,
        "partition": [list(m) for m in sc.partition.membership],
        "comm_schedule": [[t, [list(e) for e in edges]] for t, edges in sc.comm.schedule],
        "noise": asdict(sc.noise), "filter": asdict(sc.filter),
        "estimator": {"gamma": sc.gamma, "alpha": sc.alpha, "h_init": sc.h_init,
                      "decimation": sc.decimation, "delay": sc.delay},
        "inertia_schedule": [format_schedule(s) for s in sc.inertia_schedule],
        "load_schedule": None if sc.load_schedule is None else format_schedule(sc.load_schedule),
    }
    return _jsonable(d)


def export_plot_data(streams: dict, names=None, path=None):
    """Long-format ``t,series,value`` table of the chosen streams.

    Series are named ``<stream>.<column>``; for the per-area ``estimates``
    stream the area is folded into the name (``estimates.theta_2@3`` is
    area 3's estimate of theta_2). Returns the CSV text and writes it to
    ``path`` when given.
    """
    names = list(streams) if names is None else list(names)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["t", "series", "value"])
    for name in names:
        header, rows = streams[name]
        rows = np.asarray(rows, dtype=float).reshape(-1, len(header))
        per_area = len(header) > 1 and header[1] == "area"
        first = 2 if per_area else 1
        for row in rows:
            suffix = f"@{int(row[1])}" if per_area else ""
            for col in range(first, len(header)):
                w.writerow([format_float(row[0]), f"{name}.{header[col]}{suffix}",
                            format_float(row[col])])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def read_streams(run_dir, names=None) -> dict:
    run_dir = Path(run_dir)
    names = names or [s for s in STREAMS if (run_dir / f"{s}.csv").exists()]
    return {name: read_csv(run_dir / f"{name}.csv") for name in names}


def read_plot_data(path) -> list[tuple[float, str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        return [(float(a), b, float(c)) for a, b, c in r]


# --------------------------------------------------------------------------
# the reference experiment
# --------------------------------------------------------------------------

def reference_scenario(case: str = "nominal") -> Scenario:
    return load_scenario(SCENARIO_DIR / "reference.scn").with_case(case)


def reference_suite(out_dir=None, single_threaded: bool = False, progress=None) -> dict:
    """Run the nominal, Gaussian and Laplacian cases; returns case -> RunResult."""
    results = {}
    for case in CASES:
        sub = None if out_dir is None else Path(out_dir) / case
        results[case] = run_scenario(reference_scenario(case), sub, single_threaded,
                                     progress=progress)
    if out_dir is not None:
        (Path(out_dir) / "comparison.csv").write_text(comparison_table(results), encoding="utf-8")
    return results


def comparison_table(results: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["case", "final_error", "steady_error", "final_H_tot_error", "settled",
                "freq_min_hz", "freq_max_hz"])
    for case, res in results.items():
        m = res.metrics
        w.writerow([case, format_float(m.final_error), format_float(m.steady_error),
                    format_float(m.final_H_tot_error), int(m.settled),
                    format_float(m.freq_min_hz), format_float(m.freq_max_hz)])
    return buf.getvalue()


def check_assumptions(run_dir, window: float = 20.0) -> dict:
    """PE and connected-on-average reports from a recorded run directory."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "run_metadata.json").read_text(encoding="utf-8"))
    header, data = read_csv(run_dir / "regression.csv")
    n = len(meta["partition"])
    if data.shape[0] < 2:
        raise ValueError("recorded run is too short for an assumption check")
    t = data[:, 0]
    nu = data[:, 1 + n:1 + 2 * n]
    dt_rec = float(t[1] - t[0])
    pe = pe_report(nu, dt_rec, window)
    graph = CommGraph(n, tuple((t0, tuple(tuple(e) for e in edges))
                               for t0, edges in meta["comm_schedule"]))
    t_end = float(t[-1]) + dt_rec
    conn = connectivity_report(graph, t_end - window, t_end)
    return {"pe": pe, "connectivity": conn}
