"""Command line entry point: ``stconsensus run | analyze | estimate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, build_provider, builtin_config, load_config, parse_seeds
from .harness import analyze_matrix_file, estimate_mean_topology, failures, run_scenario


def _deltas(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else builtin_config(args.scenario)
    if args.seeds:
        cfg = cfg.with_seeds(parse_seeds(args.seeds))
    summaries = run_scenario(cfg, args.out, jobs=args.jobs)
    bad = failures(summaries)
    ok = sum(s.converged for s in summaries)
    print(f"{cfg.name}: {ok}/{len(summaries)} converged, {len(bad)} failures", file=sys.stderr)
    if bad:
        print(json.dumps({"failures": bad}, indent=2))
        return 1
    return 0


def cmd_analyze(args) -> int:
    report = analyze_matrix_file(args.matrix, _deltas(args.delta))
    print(report.to_json())
    return 0


def cmd_estimate(args) -> int:
    cfg = load_config(args.config) if args.config else builtin_config(args.scenario)
    prov = build_provider(cfg)
    if not hasattr(prov, "mean_laplacian"):
        raise ConfigError([f"mode: {cfg.mode} has no topology sampler to estimate from"])
    est = estimate_mean_topology(prov, args.samples, args.seed, args.delta)
    print(json.dumps(est.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stconsensus", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario over its seeds")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="scenario JSON file")
    src.add_argument("--scenario", help="built-in scenario name, e.g. paper-sec4")
    r.add_argument("--seeds", help="override seeds: 7, 0-99 or 1,5,9")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="report matrix properties over a delta grid")
    a.add_argument("--matrix", required=True, help="JSON file holding a square matrix")
    a.add_argument("--delta", default="0", help="comma-separated delta grid")
    a.set_defaults(func=cmd_analyze)

    e = sub.add_parser("estimate", help="empirical mean Laplacian of a sampled topology")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--scenario")
    e.add_argument("--samples", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--delta", type=float, default=None, help="tree threshold (default: any positive weight)")
    e.set_defaults(func=cmd_estimate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"failures": [{"reason": "config", "errors": exc.errors}]}, indent=2))
        return 2
    except (ValueError, OSError) as exc:
        print(json.dumps({"failures": [{"reason": "input", "error": str(exc)}]}, indent=2))
        return 2


if __name__ == "__main__":
    sys.exit(main())
