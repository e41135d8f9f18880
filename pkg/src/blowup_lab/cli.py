"""Command-line entry point: ``blowup-lab <command> --config file.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .config import DEFAULTS, RunConfig
from .errors import BlowupLabError

COMMANDS = ("bounds", "ode", "simulate", "sweep", "energy", "verify")


def _summary(cmd: str, result) -> dict:
    if cmd == "sweep":
        return {"fit": ex._jsonable(result.fit), "rows": ex._jsonable(result.rows)}
    if cmd == "energy":
        return ex._jsonable({k: v for k, v in result.items() if k != "trace"})
    return ex._jsonable(result)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="blowup-lab",
                                     description="Lifespan experiments for damped semilinear waves.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config (schema version 1); defaults if omitted")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, help="parallel workers for sweeps")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict(
            {"schema": DEFAULTS["schema"]})
        out = args.out or cfg.raw["out"]
        fn = getattr(ex, f"cmd_{args.command}")
        if args.command == "sweep":
            result = fn(cfg, out=out, workers=args.workers)
        else:
            result = fn(cfg, out=out)
    except BlowupLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    json.dump(_summary(args.command, result), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    if args.command == "verify" and not result["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
