"""Command-line front end for the stabilization experiments.

Exit codes: 0 on success, 2 on configuration errors, 3 on solver failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields, replace

from .experiments import (
    PRESET_NAMES,
    ConfigError,
    ExperimentConfig,
    convergence_report,
    execute,
    preset,
)
from .timestepper import SolverError

_SCALAR_FLAGS = {
    # flag/dest -> config field
    "mode": "mode",
    "ell": "ell",
    "subdiv": "subdiv",
    "support_fraction": "support_fraction",
    "kernel": "kernel",
    "gamma": "gamma",
    "lambda1": "lambda1",
    "tfinal": "tfinal",
    "k0": "k0",
    "y0": "y0",
    "yhat0": "yhat0",
    "seed": "seed",
    "solver": "solver",
    "memory": "memory",
    "label": "label",
}
_LIST_FLAGS = {"eta": float, "lambda2": float, "rf": int}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_PARSERS = {"int": int, "float": float, "str": str}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="memstab",
        description="Simulate output-feedback stabilization of a parabolic "
                    "equation with memory and record norm trajectories.",
    )
    p.add_argument("--preset", choices=PRESET_NAMES,
                   help="named scenario (may expand into a sweep)")
    p.add_argument("--config", metavar="FILE",
                   help="flat key=value file applied before flag overrides")
    p.add_argument("--mode", choices=("free", "coupled", "state_feedback",
                                      "static_output", "manufactured"))
    p.add_argument("--ell", type=int, help="device cells per side")
    p.add_argument("--rf", type=str, help="refinement level(s), comma separated")
    p.add_argument("--subdiv", type=int, help="elements per cell side at rf=0")
    p.add_argument("--support-fraction", dest="support_fraction", type=float)
    p.add_argument("--kernel", choices=("exp", "riesz"))
    p.add_argument("--gamma", type=float, help="kernel rate parameter")
    p.add_argument("--eta", type=str, help="memory coefficient(s), comma separated")
    p.add_argument("--lambda1", type=float, help="feedback gain")
    p.add_argument("--lambda2", type=str, help="injection gain(s), comma separated")
    p.add_argument("--tfinal", type=float, help="final time")
    p.add_argument("--k0", type=float, help="base time step (halved per rf)")
    p.add_argument("--y0", choices=("default", "zero"))
    p.add_argument("--yhat0", choices=("projection", "zero"))
    p.add_argument("--seed", type=int)
    p.add_argument("--solver", choices=("auto", "direct", "cg"))
    p.add_argument("--memory", choices=("auto", "direct", "recurrence"))
    p.add_argument("--label", type=str, help="filename prefix")
    p.add_argument("--out", default="runs", metavar="DIR",
                   help="output directory (default: runs)")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    return p


def _parse_list(text: str, cast):
    try:
        return [cast(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}: {exc}")


def read_config_file(path) -> dict:
    """Flat key=value file, one key per line; '#' starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        cast = _PARSERS.get(str(_FIELD_TYPES[key]), str)
        try:
            values[key] = cast(text)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}")
    return values


def resolve_configs(args) -> list[ExperimentConfig]:
    """Preset expansion, config-file values, then CLI flag overrides."""
    if args.preset:
        configs = preset(args.preset)
    else:
        configs = [ExperimentConfig()]

    overrides = {}
    if args.config:
        overrides.update(read_config_file(args.config))
    for dest, field_name in _SCALAR_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[field_name] = value
    if overrides:
        configs = [replace(c, **overrides) for c in configs]

    for dest, cast in _LIST_FLAGS.items():
        text = getattr(args, dest, None)
        if text is None:
            continue
        values = _parse_list(text, cast)
        if not values:
            raise ConfigError(f"--{dest} got an empty list")
        configs = [replace(c, **{dest: v}) for c in configs for v in values]

    deduped = []
    for c in configs:
        if c not in deduped:
            deduped.append(c)
    for c in deduped:
        c.validate()
    return deduped


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configs = resolve_configs(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        manufactured = [c for c in configs if c.mode == "manufactured"]
        rest = [c for c in configs if c.mode != "manufactured"]
        for config in rest:
            result = execute(config, args.out)
            if not args.quiet:
                rates = result.summary["rates"]
                print(
                    f"{config.slug()}: rate_y={_fmt(rates['y'])} "
                    f"rate_err={_fmt(rates['err'])} "
                    f"final_norm_y={result.summary['final']['norm_y']:.6e} "
                    f"[{result.summary['wall_time_s']:.1f}s]"
                )
        if manufactured:
            rfs = {c.rf for c in manufactured}
            if len(rfs) > 1:
                report = convergence_report(manufactured, args.out)
                _write_report(report, args.out, args.quiet)
            else:
                for config in manufactured:
                    result = execute(config, args.out)
                    if not args.quiet:
                        print(
                            f"{config.slug()}: max_error="
                            f"{result.summary['max_error']:.6e} "
                            f"[{result.summary['wall_time_s']:.1f}s]"
                        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:+.4f}"


def _write_report(report: dict, outdir, quiet: bool) -> None:
    path = os.path.join(outdir, "convergence.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        for group in report["groups"]:
            order = group["observed_order"]
            order_text = "undefined" if order is None else f"{order:.3f}"
            errs = ", ".join(f"{e:.3e}" for e in group["max_errors"])
            print(f"eta={group['eta']:g}: errors [{errs}] order {order_text}")
        print(f"wrote {path}")


if __name__ == "__main__":
    sys.exit(main())
