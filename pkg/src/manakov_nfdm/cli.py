"""Command line entry point.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 a
self-test property failed.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import (ConfigError, ExperimentConfig, dump_constellations, load_config,
                          run_btb, run_distance_sweep, run_selftest, to_csv)

EXIT_OK, EXIT_CONFIG, EXIT_PROPERTY = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="manakov-nfdm",
                                description="Dual-polarization NFDM simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("btb", "back-to-back OSNR sweep"),
                        ("sweep", "distance sweep over span counts"),
                        ("selftest", "round-trip, trace, integrability and convergence checks"),
                        ("dump-constellations", "pre-decision NF coefficients of one sweep point")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config file (defaults built in)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output file (stdout if omitted)")
        sp.add_argument("--workers", type=int, help="parallel sweep points")
        sp.add_argument("--format", choices=["csv"], default="csv")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "dump-constellations":
            sp.add_argument("--point", type=int, default=0, help="sweep point index")
    return p


def _config(args, mode):
    cfg = load_config(args.config) if args.config else ExperimentConfig(mode=mode)
    if args.config is None and mode == "distance_sweep":
        cfg = cfg.replace(sweep=(0, 1, 2, 3, 4, 5))
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(["--seed: must be non-negative"])
        cfg = cfg.replace(seed=args.seed)
    if args.workers is not None and args.workers < 1:
        raise ConfigError(["--workers: must be >= 1"])
    return cfg


def _emit(text, args, cfg):
    path = args.out or cfg.output_path
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "btb":
            cfg = _config(args, "btb_osnr")
            rows = run_btb(cfg, args.workers)
        elif args.command == "sweep":
            cfg = _config(args, "distance_sweep")
            rows = run_distance_sweep(cfg, args.workers)
        elif args.command == "dump-constellations":
            cfg = _config(args, "btb_osnr")
            if not 0 <= args.point < len(cfg.sweep):
                raise ConfigError([f"--point: must be in [0, {len(cfg.sweep)})"])
            rows = dump_constellations(cfg, args.point)
        else:
            cfg = _config(args, "roundtrip_selftest")
            results = run_selftest(cfg)
            _emit("".join(r.line() + "\n" for r in results), args, cfg)
            return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(to_csv(rows), args, cfg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
