import json
import math
from dataclasses import replace

import numpy as np
import pytest

from distinertia.cli import main
from distinertia.errors import ConfigurationError, FrequencyBandError
from distinertia.graph import CommGraph
from distinertia.harness import (SCENARIO_DIR, export_plot_data, format_scenario, load_scenario,
                                 parse_scenario, read_csv, read_plot_data,
                                 reference_scenario, run_scenario, settling_analysis)


@pytest.fixture(scope="module")
def short():
    return replace(load_scenario("synthetic6"), duration=4.0, warmup=1.0)


@pytest.fixture(scope="module")
def short_run(short, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_scenario(short, out), out


def test_bundled_scenarios_roundtrip():
    for path in SCENARIO_DIR.glob("*.scn"):
        sc = load_scenario(path)
        again = parse_scenario(format_scenario(sc), base_dir=sc.base_dir)
        assert again == sc


def test_reference_scenario_settings():
    sc = reference_scenario()
    assert sc.gamma == 2.45 and sc.alpha == 0.4
    assert sc.comm.edges_at(4.999) == ((1, 2), (1, 3), (2, 3))
    assert sc.comm.edges_at(5.0) == ((1, 2), (1, 3))
    assert sc.partition.membership == ((1,), (2, 3, 4, 5, 6, 7), (8, 9, 10))
    assert sc.events() == [0.0, 5.0, 40.0]
    noisy = reference_scenario("gaussian")
    assert (noisy.noise.kind, noisy.noise.snr_power_db, noisy.noise.snr_freq_db) == \
        ("gaussian", 58.0, 95.0)


@pytest.mark.parametrize("text", [
    "[scenario]\nduration = 1\n",  # no partition
    "[areas]\npartition = 1; 2\n[bogus]\n",
    "[areas]\npartition = 1; 2\n[estimator]\ngama = 1\n",
    "[areas]\npartition = 1; 2\n[comm]\n0 = 1-3\n",
    "[areas]\npartition = 1; 2\n[scenario]\nduration = -1\n",
])
def test_bad_scenarios(text):
    with pytest.raises(ConfigurationError):
        parse_scenario(text)


def test_run_outputs(short_run, short):
    res, out = short_run
    for name in ("estimates", "truth", "signals", "regression", "machines", "errors"):
        header, data = read_csv(out / f"{name}.csv")
        assert data.shape[0] == res.streams[name][1].shape[0] > 0
        assert header == res.streams[name][0]
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["seed"] == short.seed and meta["estimator"]["gamma"] == 2.45
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["steps"] == 4000
    # CSV uses CRLF row endings and '.' decimals
    raw = (out / "errors.csv").read_bytes()
    assert raw.startswith(b"t,param_error_1") and b"\r\n" in raw


def test_csv_roundtrip_is_exact(short_run):
    res, out = short_run
    _, data = read_csv(out / "estimates.csv")
    assert np.array_equal(data, res.streams["estimates"][1])


def test_zero_duration_run(short, tmp_path):
    res = run_scenario(replace(short, duration=0.0), tmp_path)
    m = res.metrics
    assert m.steps == 0 and m.t.size == 0 and math.isnan(m.final_error)
    header, data = read_csv(tmp_path / "errors.csv")
    assert data.shape == (0, len(header))
    assert main(["run", "--scenario", str(_write(tmp_path, replace(short, duration=0.0))),
                 "--out", str(tmp_path / "cli")]) == 0


def _write(tmp_path, sc):
    p = tmp_path / "s.scn"
    p.write_text(format_scenario(sc))
    return p


def test_same_seed_gives_identical_bytes(short, tmp_path):
    sc = replace(short, duration=3.0, noise=replace(short.noise, kind="laplacian"))
    run_scenario(sc, tmp_path / "a")
    run_scenario(sc, tmp_path / "b", single_threaded=True)
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
    run_scenario(replace(sc, seed=sc.seed + 1), tmp_path / "c")
    assert (tmp_path / "a" / "signals.csv").read_bytes() != \
        (tmp_path / "c" / "signals.csv").read_bytes()


def test_export_plot_data(short_run, tmp_path):
    res, out = short_run
    assert export_plot_data(res.streams, []) == "t,series,value\r\n"
    text = export_plot_data(res.streams, ["errors"], tmp_path / "p.csv")
    header, rows = res.streams["errors"]
    assert text.count("\r\n") == 1 + rows.shape[0] * (len(header) - 1)
    back = read_plot_data(tmp_path / "p.csv")
    col = header.index("tracking_error")
    series = [v for _, s, v in back if s == "errors.tracking_error"]
    assert np.abs(np.array(series) - rows[:, col]).max() <= 1e-12
    est = export_plot_data(res.streams, ["estimates"])
    assert "estimates.theta_2@3" in est
    one = {"x": (["t", "v"], np.array([[0.0, 1.0], [0.1, 2.0], [0.2, 3.0]]))}
    assert len(export_plot_data(one).splitlines()) == 1 + 3


def test_cli_run_check_export(short, tmp_path):
    scn = _write(tmp_path, short)
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scn), "--out", str(out), "--seed", "11",
                 "--case", "gaussian", "--single-threaded"]) == 0
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["seed"] == 11 and meta["noise"]["kind"] == "gaussian"
    assert main(["check-assumptions", "--out", str(out), "--window", "1.0"]) == 0
    assert main(["export", "--out", str(out), "--streams", "truth"]) == 0
    assert (out / "plot_data.csv").read_text().startswith("t,series,value")
    assert main(["run", "--scenario", str(tmp_path / "missing.scn"), "--out", str(out)]) == 1


def test_band_violation_fails_the_run(short, tmp_path):
    sc = replace(short, freq_band_hz=1e-4)
    with pytest.raises(FrequencyBandError):
        run_scenario(sc, tmp_path)
    assert (tmp_path / "metrics.json").exists()
    assert main(["run", "--scenario", str(_write(tmp_path, sc)), "--out", str(tmp_path / "x")]) == 3


def test_divergence_exit_code(short, tmp_path):
    sc = replace(short, gamma=1e6, duration=1.0)
    code = main(["run", "--scenario", str(_write(tmp_path, sc)), "--out", str(tmp_path / "x")])
    assert code == 1  # rejected up front by the step-size bound
    sc = replace(short, gamma=2e4, alpha=1e-5, duration=8.0)
    with np.errstate(all="ignore"):
        code = main(["run", "--scenario", str(_write(tmp_path, sc)), "--out", str(tmp_path / "y")])
    assert code == 2


def test_link_loss_raises_disagreement():
    base = replace(load_scenario("synthetic6"), duration=9.0, warmup=0.0)
    lossy = replace(base, comm=CommGraph(3, ((0.0, ((1, 2), (1, 3), (2, 3))),
                                             (5.0, ((1, 2), (1, 3))))))
    a = run_scenario(base, single_threaded=True).metrics
    b = run_scenario(lossy, single_threaded=True).metrics
    win = (a.t >= 5.0) & (a.t <= 9.0)
    assert b.disagreement[win].max() > a.disagreement[win].max()
    assert b.disagreement[-1] < b.disagreement[win].max()


def test_settling_analysis():
    t = np.arange(0, 60, 0.5)
    err = np.where(t < 12, 1.0, 0.01)
    err = np.where((t >= 40) & (t < 50), 0.2, err)
    rep = settling_analysis(t, err, [0.0, 5.0, 40.0], 60.0)
    assert [r["judged"] for r in rep] == [False, True, True]
    assert rep[1]["settle_time"] == 12.0 and rep[1]["ok"]
    assert rep[2]["settle_time"] == 50.0 and rep[2]["ok"]
    bad = settling_analysis(t, np.where(t > 30, 0.2, 0.01), [0.0], 60.0)
    assert not bad[0]["ok"]
