"""Command line front end: ``mixbandits run|presets|conc-lab|bounds``.

A config argument is a YAML path or the name of a shipped preset.  Exit
status: 0 when every declared assertion passes, 1 when any fails, 2 for an
invalid config.
"""
from __future__ import annotations

import argparse
import os
import sys

from ..errors import ConfigError
from .config import ExperimentConfig, load_config
from .presets import load_preset, preset_names, preset_summary
from .runner import bounds_report, run_experiment


def _load(ref: str) -> ExperimentConfig:
    if os.path.exists(ref):
        return load_config(ref)
    if ref in preset_names():
        return load_preset(ref)
    raise ConfigError("config", f"{ref!r} is neither a file nor a preset")


def _apply_flags(cfg: ExperimentConfig, args) -> ExperimentConfig:
    cfg = cfg.with_seeds(args.seed_base, args.seed_count)
    return cfg.with_output(args.out)


def _run(args, lab: bool) -> int:
    cfg = _apply_flags(_load(args.config), args)
    if lab != cfg.is_lab:
        want = "concentration_lab" if lab else "a simulation scenario"
        raise ConfigError("scenario", f"this command needs {want}, got {cfg.scenario}")
    bundle = run_experiment(cfg, jobs=args.jobs)
    print(f"wrote {bundle.out_dir}")
    for w in bundle.aggregate.get("warnings", []):
        print(f"warning: {w}")
    print(bundle.report())
    return 0 if bundle.passed else 1


def _presets(args) -> int:
    for name in preset_names():
        print(f"{name:24s} {preset_summary(name)}")
    return 0


def _bounds(args) -> int:
    print(bounds_report(_load(args.config)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixbandits",
                                     description="Bandits with dependent rewards.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("config", help="YAML config path or preset name")
        p.add_argument("--seed-base", type=int, default=None)
        p.add_argument("--seed-count", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("run", help="simulate a config and check its assertions")
    add_run_flags(p)
    p.set_defaults(func=lambda a: _run(a, False))
    p = sub.add_parser("conc-lab", help="run a concentration_lab config")
    add_run_flags(p)
    p.set_defaults(func=lambda a: _run(a, True))
    p = sub.add_parser("presets", help="shipped configs")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=_presets)
    p = sub.add_parser("bounds", help="print mixing sums and regret bounds, no simulation")
    p.add_argument("config")
    p.set_defaults(func=_bounds)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
