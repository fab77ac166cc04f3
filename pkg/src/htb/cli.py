"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 a guaranteed bound was violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import risk
from .config import ConfigError, load_config
from .sharing import EXACT, MonteCarlo, is_enumerable
from .simulator import convergence_study

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 2, 3


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _method(cfg):
    return EXACT if is_enumerable(cfg.sharing) else MonteCarlo(cfg.expectation_n, cfg.seed)


def _constants_csv(sets) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dependence", "target", "value", "std_error", "method"])
    for c in sets:
        for i, e in enumerate(c.per_agent):
            w.writerow([c.dependence_label, f"agent_{i + 1}", repr(e.value), repr(e.std_error), e.method])
        w.writerow([c.dependence_label, "market", repr(c.market.value), repr(c.market.std_error), c.market.method])
    return buf.getvalue()


def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    m = _method(cfg)
    sets = [
        risk.constants_independent(cfg.sharing, cfg.tail, cfg.norm, m),
        risk.constants_dependent(cfg.sharing, cfg.tail, cfg.norm, m),
        risk.constants_custom(cfg.sharing, cfg.tail, cfg.rho_star, cfg.norm, m),
    ]
    if args.format == "csv":
        _emit(_constants_csv(sets), args.out)
    else:
        _emit(_dump({c.dependence_label: c.to_dict() for c in sets}), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = load_config(args.config)
    report = risk.verify_bounds(cfg.sharing, cfg.tail, cfg.rho_star, cfg.norm, _method(cfg))
    _emit(report.to_csv() if args.format == "csv" else _dump(report.to_dict()), args.out)
    for c in report.violations:
        print(f"violation: {c.name} (slack {c.slack:.3e})", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_counterexample(args) -> int:
    rep = risk.counterexample_suite(args.alpha, args.r)
    if args.format == "csv":
        _emit(rep.to_csv(), args.out)
    else:
        _emit(_dump(rep.to_dict()), args.out)
    for c in rep.crossovers:
        state = "active" if c.active else ("reversed" if c.reversed_active else "inactive")
        print(f"{c.name}: {c.lhs} {c.relation} {c.rhs}  [{state}]", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if not cfg.gammas:
        raise ConfigError("/gammas", "simulate needs at least one gamma")
    n = args.n or cfg.n
    table = convergence_study(
        cfg.dependence, cfg.sharing, cfg.norm, cfg.gammas, n, cfg.seed,
        resamples=cfg.bootstrap, threads=args.threads,
    )
    _emit(table.to_csv() if args.format == "csv" else _dump(table.to_dict()), args.out)
    return EXIT_OK


def cmd_regime(args) -> int:
    reg = risk.classify_regime(args.alpha, args.r)
    if args.format == "json" or args.out:
        _emit(_dump(reg.to_dict()), args.out)
    else:
        print(reg.describe())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="htb", description="Heavy-tailed risk-sharing bounds")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: $HTB_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (
        ("constants", cmd_constants, "risk constants for independent, dependent and custom dependence"),
        ("bounds", cmd_bounds, "check the guaranteed orderings of the constants"),
        ("simulate", cmd_simulate, "Monte Carlo convergence study"),
    ):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--config", required=True)
        if name == "simulate":
            sp.add_argument("--n", type=int, default=None, help="override mc.n")
        sp.set_defaults(func=fn)

    for name, fn, helptext in (
        ("counterexample", cmd_counterexample, "two-dimensional counterexample report"),
        ("regime", cmd_regime, "which bounds are guaranteed for (alpha, r)"),
    ):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--alpha", type=float, required=True)
        sp.add_argument("--r", type=float, required=True)
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None and args.command != "regime":
        args.format = "csv" if args.out and args.out.endswith(".csv") else "json"
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_INVALID
        os.environ["HTB_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
