"""Command line front end: run campaigns, validate configs, export CDFs."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .harness import (SchemeSpec, empirical_cdf, group_rows, read_report,
                      run_campaign, write_report)
from .scenario import ScenarioConfig


def _fail(message: str, code: int = 2) -> int:
    json.dump({"error": message}, sys.stderr)
    sys.stderr.write("\n")
    return code


def _load_config(path: Optional[str]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    return ScenarioConfig.from_json(path)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _load_config(args.config)
        config.validate()
        beamforming = [s.strip() for s in args.beamforming.split(",") if s.strip()]
        scheduling = [s.strip() for s in args.scheduling.split(",") if s.strip()]
        widths = [int(s) for s in args.m.split(",")] if args.m else []
        schemes = []
        for bf in beamforming:
            for sched in scheduling:
                if sched == "hybrid":
                    if not widths:
                        raise ValueError("hybrid scheduling requires --m")
                    for m in widths:
                        schemes.append(SchemeSpec(bf, sched, m))
                else:
                    schemes.append(SchemeSpec(bf, sched))
        if not schemes:
            raise ValueError("no schemes requested")
        result = run_campaign(config, schemes, args.trials,
                              campaign_seed=args.seed, jobs=args.jobs,
                              backend=args.backend)
        write_report(result, args.out)
    except Exception as exc:
        return _fail(str(exc))
    json.dump({
        "rows": len(result.rows),
        "failures": len(result.failures),
        "out": args.out,
    }, sys.stdout)
    sys.stdout.write("\n")
    return 0 if not result.failures else 1


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        config = _load_config(args.config)
        config.validate()
    except Exception as exc:
        return _fail(str(exc))
    json.dump({"ok": True, "config": config.to_dict()}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def _cmd_cdf(args: argparse.Namespace) -> int:
    try:
        rows = read_report(args.input)
        keys = [k.strip() for k in args.group.split(",") if k.strip()]
        groups = group_rows(rows, keys)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"group,{args.metric},probability\n")
            for key in sorted(groups, key=str):
                label = "/".join("" if part is None else str(part) for part in key)
                values = [getattr(r, args.metric) for r in groups[key]]
                xs, ps = empirical_cdf(values)
                for x, p in zip(xs, ps):
                    fh.write(f"{label},{x:.17g},{p:.17g}\n")
    except Exception as exc:
        return _fail(str(exc))
    json.dump({"groups": len(groups), "out": args.out}, sys.stdout)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leopos",
        description="Cooperative downlink positioning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte-Carlo campaign")
    p_run.add_argument("--config", help="scenario JSON (defaults otherwise)")
    p_run.add_argument("--trials", type=int, default=10)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--beamforming", default="dsta",
                       help="comma list: dsta,zf,scb,scbwi")
    p_run.add_argument("--scheduling", default="hybrid",
                       help="comma list: comm,hybrid,gdop,parallax")
    p_run.add_argument("--m", default="",
                       help="comma list of shortlist widths for hybrid")
    p_run.add_argument("--out", required=True, help="report CSV path")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--backend", default="auto",
                       choices=("auto", "clarabel", "cvxpy"))
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario config")
    p_val.add_argument("--config", help="scenario JSON (defaults otherwise)")
    p_val.set_defaults(func=_cmd_validate)

    p_cdf = sub.add_parser("cdf", help="empirical CDF per scheme group")
    p_cdf.add_argument("--in", dest="input", required=True, help="report CSV")
    p_cdf.add_argument("--metric", default="crlb_m2",
                       choices=("crlb_m2", "position_error_m", "gdop"))
    p_cdf.add_argument("--group", default="beamforming,scheduling,m")
    p_cdf.add_argument("--out", required=True, help="CDF CSV path")
    p_cdf.set_defaults(func=_cmd_cdf)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
