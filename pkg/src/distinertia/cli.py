"""Command-line entry point: ``distinertia {run,reference-suite,check-assumptions,export}``.

Exit codes: 0 success, 1 configuration or I/O error, 2 numerical divergence,
3 frequency band violated.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigurationError, FrequencyBandError, NumericalDivergenceError
from .harness import (CASES, check_assumptions, comparison_table, export_plot_data,
                      load_scenario, read_streams, reference_scenario, run_scenario)

EXIT_CONFIG, EXIT_DIVERGED, EXIT_BAND = 1, 2, 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distinertia",
                                description="Distributed control-area inertia estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=False):
        sp.add_argument("--scenario", required=scenario_required,
                        help="scenario file, or the name of a bundled scenario")
        sp.add_argument("--seed", type=_u64, help="override the scenario seed")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--single-threaded", action="store_true",
                        help="update the areas sequentially instead of one task per area")

    run = sub.add_parser("run", help="run one scenario")
    common(run)
    run.add_argument("--case", choices=CASES, help="override the noise case")

    suite = sub.add_parser("reference-suite", help="nominal, Gaussian and Laplacian cases")
    common(suite)

    chk = sub.add_parser("check-assumptions", help="PE and connectivity reports of a recorded run")
    chk.add_argument("--out", required=True, help="directory of a recorded run")
    chk.add_argument("--window", type=float, default=20.0, help="window length T in seconds")

    exp = sub.add_parser("export", help="long-format t,series,value table of a recorded run")
    exp.add_argument("--out", required=True, help="directory of a recorded run")
    exp.add_argument("--streams", default="", help="comma separated stream names (default all)")
    exp.add_argument("--file", default="plot_data.csv", help="output file inside --out")
    return p


def _scenario(args, case=None):
    sc = reference_scenario() if args.scenario is None else load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if case is not None:
        sc = sc.with_case(case)
    return sc


def _report(metrics) -> str:
    m = metrics.summary()
    keys = ("name", "final_error", "steady_error", "final_H_tot_error", "settled",
            "freq_min_hz", "freq_max_hz")
    return " ".join(f"{k}={m[k]}" for k in keys) + f" runtime_s={metrics.runtime_s:.2f}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            res = run_scenario(_scenario(args, args.case), args.out, args.single_threaded)
            print(_report(res.metrics))
        elif args.command == "reference-suite":
            results = {}
            for case in CASES:
                sc = _scenario(args, case)
                results[case] = run_scenario(sc, Path(args.out) / case, args.single_threaded)
                print(_report(results[case].metrics))
            table = comparison_table(results)
            (Path(args.out) / "comparison.csv").write_text(table, encoding="utf-8")
            print(table, end="")
        elif args.command == "check-assumptions":
            rep = check_assumptions(args.out, args.window)
            pe, conn = rep["pe"], rep["connectivity"]
            print(json.dumps({
                "pe": {"window": pe.window, "iota_lower": pe.iota_lower,
                       "iota_upper": pe.iota_upper, "pe_satisfied": pe.pe_satisfied},
                "connectivity": {"window": conn.window, "lambda2_lower": conn.lambda2_lower,
                                 "connected_on_average": conn.connected_on_average}},
                indent=2))
        elif args.command == "export":
            names = [s for s in args.streams.split(",") if s] or None
            streams = read_streams(args.out, names)
            export_plot_data(streams, names, Path(args.out) / args.file)
    except NumericalDivergenceError as exc:
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FrequencyBandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAND
    except (ConfigurationError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
