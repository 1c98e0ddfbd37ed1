"""Command line interface.

Subcommands::

    brwp run CONFIG [--key=value ...]
    brwp validate-kernels [--seed N] [--quick]
    brwp marginal CONFIG --dim K [--out FILE]

Exit codes: 0 success, 2 config error, 3 numeric abort, 4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import parse_config
from .errors import ConfigError, NumericError, UsageError
from .harness import STREAM_PROBLEM, run_experiment, seed_stream
from .io import OutputError
from .metrics import Grid1D, mixture_marginal_exact
from .problems import random_mixture
from .validation import validate_kernels

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4

log = logging.getLogger("brwp")


def _split_overrides(extra):
    overrides = {}
    for item in extra:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"overrides must look like --key=value, got {item!r}")
        key, value = item[2:].split("=", 1)
        overrides[key.replace("-", "_")] = value
    return overrides


def _cmd_run(args, extra):
    cfg = parse_config(args.config, _split_overrides(extra))
    record = run_experiment(cfg, args.output_dir)
    print(json.dumps(record.summary(), indent=2))
    if record.failed:
        log.error("run aborted: %s", record.error)
        return EXIT_NUMERIC
    if record.report is not None and not record.report["passed"]:
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_validate(args, extra):
    if extra:
        raise ConfigError(f"unexpected arguments: {' '.join(extra)}")
    report = validate_kernels(args.seed, include_orders=not args.quick)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def _cmd_marginal(args, extra):
    cfg = parse_config(args.config, _split_overrides(extra))
    if cfg.kind != "mixture":
        raise ConfigError(f"{args.config}: marginal needs a mixture config, got {cfg.kind!r}")
    if not 0 <= args.dim < cfg.dims:
        raise ConfigError(f"--dim must lie in [0, {cfg.dims})")
    pr = cfg.problem
    spec = random_mixture(cfg.dims, pr["n_centers"], pr["sigma"], cfg.lam or 0.0,
                          seed_stream(cfg.seed, STREAM_PROBLEM), pr["box"])
    grid = Grid1D(pr["grid_lo"], pr["grid_hi"], pr["grid_points"])
    curve = mixture_marginal_exact(spec, args.dim, grid)
    if curve.narrow:
        log.warning("grid captures only %.4f of the marginal mass", curve.integral())
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("x,density\n")
        for x, v in zip(grid.points, curve.density):
            out.write(f"{float(x)!r},{float(v)!r}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # no prefix matching: overrides such as --h=0.01 must not resolve to --help
    parser = argparse.ArgumentParser(prog="brwp", description=__doc__.split("\n")[0],
                                     allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config", allow_abbrev=False)
    run.add_argument("config")
    run.add_argument("--output-dir", default=None, help="overrides output_dir from the config")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate-kernels", allow_abbrev=False,
                         help="compare kernels against brute-force oracles")
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--quick", action="store_true", help="skip the convergence-order checks")
    val.set_defaults(func=_cmd_validate)

    mar = sub.add_parser("marginal", allow_abbrev=False,
                         help="dump the exact marginal of a mixture config")
    mar.add_argument("config")
    mar.add_argument("--dim", type=int, required=True)
    mar.add_argument("--out", default=None)
    mar.set_defaults(func=_cmd_marginal)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args, extra)
    except (ConfigError, UsageError) as exc:
        for line in getattr(exc, "errors", [str(exc)]):
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
