"""Command-line entry point: run scenarios, summarize results, benchmark solvers."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness


def _cmd_run(args) -> int:
    sleep = None if args.ap_sleep is None else args.ap_sleep == "on"
    sc = harness.load_scenario(args.scenario, seed=args.seed, ap_sleep=sleep)
    path = harness.run_scenario(sc, args.out, threads=args.threads)
    print(path)
    return 0


def _cmd_summarize(args) -> int:
    records = harness.read_records(args.results)
    rows, cdf = harness.summarize(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(rows, out / "summary.csv")
    harness.write_csv(cdf, out / "cdf.csv")
    for r in rows:
        lam = "" if r["lambda"] is None else f" lambda={r['lambda']:g}"
        gam = "" if r["gamma"] is None else f" gamma={r['gamma']:g}"
        print(f"{r['scheme']:8s} {r['direction']}{lam}{gam}: mean SE {r['mean_se']:.3f}, "
              f"95%-likely {r['se_95_likely']:.3f}, EE {r['mean_ee'] / 1e6:.3f} Mbit/J, "
              f"|M_k| {r['mean_serving']:.2f}")
    return 0


def _cmd_converge(args) -> int:
    bench = harness.load_benchmark(args.bench, seed=args.seed)
    rows, traces = harness.convergence_report(bench)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(rows, out / "convergence.csv")
    with (out / "traces.ndjson").open("w") as fh:
        for t in traces:
            fh.write(json.dumps(t, sort_keys=True) + "\n")
    worst = max(r["rel_gap"] for r in rows)
    print(f"{len(rows)} solver runs, worst relative gap {worst:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparselsf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario file")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--ap-sleep", choices=("on", "off"))
    run.add_argument("--out", default="results")
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="aggregate a results.ndjson file into CSV tables")
    summ.add_argument("results")
    summ.add_argument("--out", default="summary")
    summ.set_defaults(func=_cmd_summarize)

    conv = sub.add_parser("converge", help="solver accuracy and timing against the reference oracle")
    conv.add_argument("bench")
    conv.add_argument("--seed", type=int)
    conv.add_argument("--out", default="convergence")
    conv.set_defaults(func=_cmd_converge)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
