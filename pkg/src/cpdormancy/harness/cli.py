"""Command-line entry point: ``cpdormancy <subcommand> [--config PATH] [--seed N] [--out DIR] [--replicas N]``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from ..errors import CPDormancyError, ConfigInvalid
from .config import defaults, read_json, validate
from .experiments import run_experiment, sweep

SUBCOMMANDS = {
    "simulate": "growth",
    "survival": "survival",
    "dl-check": "dl",
    "gap-check": "gap",
    "percolate": "percolation",
    "coupling-check": "coupling",
    "recursion": "recursion",
}

_HELP = {
    "simulate": "range growth on a lattice box, rerun at doubled radius on boundary hits",
    "survival": "survival probabilities P(tau > T) with Wilson intervals",
    "dl-check": "empirical excess ratio E(t)/t against the limiting arcsine-type law",
    "gap-check": "probability of a renewal point in [t, t + t^eps]",
    "percolate": "iterated site percolation radii",
    "coupling-check": "cube coupling containment along an S-type time sequence",
    "recursion": "extinction recursion statistics on a small vertex set",
    "sweep": "run a base config over a parameter grid",
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (built-in defaults if omitted)")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--replicas", type=int, help="number of replicas (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes for replicas")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpdormancy",
                                     description="Contact process with renewal dormancy: experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*SUBCOMMANDS, "sweep"]:
        p = sub.add_parser(name, help=_HELP[name])
        _common(p)
        if name == "sweep":
            p.add_argument("--kind", choices=sorted(set(SUBCOMMANDS.values())),
                           help="experiment kind when no --config is given")
            p.add_argument("--grid", required=True,
                           help='JSON object or file mapping dotted paths to value lists, e.g. \'{"topology.n": [2, 3]}\'')
    return parser


def _raw_config(args, kind: str | None) -> dict:
    if args.config:
        raw = read_json(args.config)
        if not isinstance(raw, dict):
            raise ConfigInvalid("", f"{args.config}: config must be a JSON object")
        if kind is not None:
            if raw.setdefault("kind", kind) != kind:
                raise ConfigInvalid("kind", f"config kind {raw['kind']!r} does not match subcommand ({kind})")
    else:
        if kind is None:
            raise ConfigInvalid("kind", "sweep needs --config or --kind")
        raw = defaults(kind)
    for key in ("seed", "out", "replicas", "workers"):
        val = getattr(args, key)
        if val is not None:
            raw[key] = val
    return raw


def _grid(text: str) -> dict:
    if os.path.exists(text):
        return read_json(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("grid", f"not a file and not valid JSON ({exc})") from None


def _print_stats(stats):
    for s in stats:
        ci = f"  [{s['lo']:.6g}, {s['hi']:.6g}]" if s["lo"] is not None else ""
        print(f"{s['name']:<40} {s['value']:.6g}{ci}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            raw = _raw_config(args, args.kind)
            header, rows = sweep(raw, _grid(args.grid), workers=args.workers)
            print(",".join(header))
            for r in rows:
                print(",".join("" if v is None else str(v) for v in r))
            return 0
        cfg = validate(_raw_config(args, SUBCOMMANDS[args.command]), args.config or "defaults")
        rep = run_experiment(cfg)
        _print_stats(rep.summary["statistics"])
        for name, ok in rep.summary["checks"].items():
            print(f"{name:<40} {ok}")
        print(f"wrote {', '.join(sorted(rep.paths.values()))} ({rep.runtime:.2f} s)")
        return 0
    except CPDormancyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
