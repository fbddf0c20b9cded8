"""Command-line entry point: ``hds-sim calibrate | run | sweep``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .calibration import calibrate_k, load_calibration, save_calibration
from .harness import CATALOG, ExperimentConfig, emit_report, load_config, run_monte_carlo
from .scenarios import KnownHypotheses


def _csv_list(cast):
    def parse(text: str):
        return [cast(t) for t in text.split(",") if t.strip()]

    return parse


def _format_for(path: str, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "json" if Path(path).suffix.lower() == ".json" else "csv"


def cmd_calibrate(args) -> int:
    model, default_k, _ = CATALOG[args.scenario]
    k = args.K or default_k
    entries = []
    for hyp in (model, KnownHypotheses(model)):
        sizes = calibrate_k(
            model,
            args.levels,
            margin=args.margin,
            max_k=args.max_k,
            runs=args.runs,
            seed=args.seed,
            hyp=hyp,
            n_anomalies=k,
        )
        logging.info("%s: K_l = %s", hyp.scenario_hash(), sizes)
        entries += [{"scenario": hyp.scenario_hash(), "level": l, "K": s} for l, s in enumerate(sizes)]
    doc = {"scenario_id": args.scenario, "margin": args.margin, "runs": args.runs, "seed": args.seed, "entries": entries}
    save_calibration(doc, args.out)
    return 0


def _run(config: ExperimentConfig, args) -> int:
    if args.workers:
        config = replace(config, workers=args.workers)
    trace = open(args.trace, "w") if getattr(args, "trace", None) else None
    try:
        report = run_monte_carlo(config, trace_out=trace)
    finally:
        if trace:
            trace.close()
    emit_report(report, _format_for(args.out, args.format), args.out)
    return 0


def cmd_run(args) -> int:
    return _run(load_config(args.config), args)


def cmd_sweep(args) -> int:
    model, default_k, default_policies = CATALOG[args.scenario]
    kw = {}
    if args.calibration:
        kw["calibration"] = load_calibration(args.calibration)
    else:
        kw.update(auto_calibrate=True, calib_runs=args.calib_runs)
    config = ExperimentConfig(
        scenario=model,
        scenario_id=args.scenario,
        M_values=tuple(args.M),
        K=args.K or default_k,
        cost=args.c,
        policies=tuple(args.policies or default_policies),
        runs=args.runs,
        base_seed=args.seed,
        **kw,
    )
    return _run(config, args)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hds-sim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="calibrate fixed internal-test sample sizes")
    p.add_argument("--scenario", choices=sorted(CATALOG), required=True)
    p.add_argument("--margin", type=float, default=0.05)
    p.add_argument("--runs", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=int, default=6, help="tree depth L (M = 2**L)")
    p.add_argument("--K", type=int, default=None, help="number of anomalies")
    p.add_argument("--max-k", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="run an experiment from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int)
    p.add_argument("--trace", help="write a JSON-lines trace of trial 0 per (policy, M)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="risk versus M for catalog scenarios")
    p.add_argument("--scenario", choices=sorted(CATALOG), required=True)
    p.add_argument("--policies", type=_csv_list(str))
    p.add_argument("--M", type=_csv_list(int), required=True)
    p.add_argument("--K", type=int)
    p.add_argument("--c", type=float, default=0.01)
    p.add_argument("--runs", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibration", help="calibration document (default: calibrate on the fly)")
    p.add_argument("--calib-runs", type=int, default=10**4)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
