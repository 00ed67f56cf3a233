"""Command line runner: ``ri2d <experiment> --seed S [--set key=value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import (EXPERIMENTS, SCHEMAS, ExperimentConfig, ValidationError,
                          run_experiment)
from .report import FORMATS, ReportError, emit_report

EXIT_OK, EXIT_VALIDATION, EXIT_TRUNCATION = 0, 2, 3
log = logging.getLogger("ri2d")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ri2d", description="Random interlacement experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        keys = ", ".join(sorted(SCHEMAS[name]))
        sp = sub.add_parser(name, help=f"parameters: {keys}")
        sp.add_argument("--config", type=Path, help="JSON file with seed, params and out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--format", choices=FORMATS, action="append",
                        help="repeatable; default csv and json")
        sp.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override one parameter (value parsed as JSON when possible)")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def build_config(args) -> ExperimentConfig:
    errs = []
    raw: dict = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError([f"config: cannot read {args.config}: {e}"])
        if not isinstance(raw, dict):
            raise ValidationError(["config: top level must be an object"])
        if raw.get("experiment", args.experiment) != args.experiment:
            errs.append(f"experiment: config says {raw['experiment']!r}, "
                        f"command line says {args.experiment!r}")
        unknown = set(raw) - {"experiment", "seed", "params", "out"}
        errs += [f"{k}: unknown config key" for k in sorted(unknown)]
    params = dict(raw.get("params") or {})
    for item in args.set:
        if "=" not in item:
            errs.append(f"--set {item!r}: expected K=V")
            continue
        k, v = item.split("=", 1)
        params[k.strip()] = _parse_value(v)
    if args.replicas is not None:
        params["replicas"] = args.replicas
    if args.workers < 1:
        errs.append("workers: must be at least 1")
    seed = args.seed if args.seed is not None else raw.get("seed")
    out = args.out if args.out is not None else raw.get("out")
    cfg = ExperimentConfig(args.experiment, seed, params, str(out) if out else None)
    try:
        cfg = cfg.validated()
    except ValidationError as e:
        errs += e.errors
    if errs:
        raise ValidationError(errs)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except ValidationError as e:
        for msg in e.errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    rec = run_experiment(cfg, workers=args.workers)
    out = Path(cfg.out or ".")
    try:
        for fmt in args.format or ["csv", "json"]:
            for p in emit_report(rec, fmt, out):
                log.info("wrote %s", p)
    except ReportError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    print(json.dumps({"experiment": rec.experiment, "replicas": len(rec.rows),
                      "truncated": len(rec.truncated), "partial": rec.partial,
                      "wall_clock": round(rec.wall_clock, 3), "aggregate": rec.aggregate},
                     sort_keys=True, default=str))
    if rec.truncation_fraction > cfg.params["max_truncation"]:
        print(f"error: {len(rec.truncated)} truncated replicas exceed the allowed fraction "
              f"{cfg.params['max_truncation']}", file=sys.stderr)
        return EXIT_TRUNCATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
