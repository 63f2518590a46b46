"""Command-line entry point: ``confpoint {localize,test,simulate}``."""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .core import IndexOutOfRange, RandomStream, validate_series, write_atomic
from .hypo import test_changepoint, test_exchangeability
from .mcp import confidence_set, estimate, sweep
from .scores import KdeSpec, identity_score, nearly_optimal_score
from .simlab import EXPERIMENTS, ExperimentSpec, SpecError, run_experiment, write_table

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_SHORT = 0, 2, 3


class InputError(ValueError):
    pass


def read_series(path: str) -> np.ndarray:
    """One numeric column, '.' decimals, optional single header line."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from e
    values = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 1:
            raise InputError(f"line {lineno}: expected one column, found {len(fields)}")
        token = fields[0]
        try:
            v = float(token)
        except ValueError:
            if not values and lineno == _first_nonblank(lines):
                continue  # header
            raise InputError(f"line {lineno}: not a number: {token!r}") from None
        if not math.isfinite(v):
            raise InputError(f"line {lineno}: non-finite value {token!r}")
        values.append(v)
    if not values:
        raise InputError(f"{path}: no data rows")
    return np.asarray(values, dtype=np.float64)


def _first_nonblank(lines) -> int:
    for i, line in enumerate(lines, start=1):
        if line.strip():
            return i
    return 0


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _curve_block(curve, alpha: float) -> dict:
    cs = confidence_set(curve, alpha)
    return {
        "tau_hat": estimate(curve),
        "confidence_set": [int(t) for t in cs],
        "empty": bool(cs.size == 0),
        "curve": curve.records(),
    }


def _load(path: str):
    x = read_series(path)
    if x.shape[0] < 2:
        raise _Short(x.shape[0])
    return validate_series(x)


class _Short(Exception):
    def __init__(self, n):
        self.n = n


def cmd_localize(args) -> int:
    x = _load(args.input)
    rng = RandomStream(args.seed)
    ident = identity_score()
    first = sweep(x, ident, ident, rng)
    report = {"schema_version": SCHEMA_VERSION, "n": len(x), "alpha": args.alpha, "score": args.score,
              "seed": args.seed}
    if args.score == "identity":
        report.update(_curve_block(first, args.alpha))
    else:
        if len(x) < 4:
            raise InputError("the kde score needs at least 4 observations")
        s = nearly_optimal_score(x, KdeSpec(), tau_hat=estimate(first))
        report.update(_curve_block(sweep(x, s, s, rng), args.alpha))
        report["identity_pass"] = _curve_block(first, args.alpha)
    _emit(report, args.out)
    return EXIT_OK


def cmd_test(args) -> int:
    x = _load(args.input)
    rng = RandomStream(args.seed)
    if args.type == "changepoint":
        if args.t0 is None:
            raise InputError("--t0 is required for --type changepoint")
        out = test_changepoint(x, args.t0, args.alpha, rng=rng)
    else:
        if args.baseline:
            out = test_exchangeability(x, alpha=args.alpha, rng=rng, baseline=True)
        else:
            if args.c is None:
                raise InputError("--c is required for --type exchangeability (or pass --baseline)")
            out = test_exchangeability(x, args.c, args.alpha, rng=rng)
    payload = {"schema_version": SCHEMA_VERSION, "type": args.type, "alpha": args.alpha, "seed": args.seed}
    payload.update(out.to_dict())
    payload["reject"] = bool(out.reject)
    _emit(payload, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise InputError(f"{args.config}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"{args.config}: line {e.lineno}: invalid JSON ({e.msg})") from e
    spec = ExperimentSpec.from_dict(cfg)
    rows = run_experiment(args.experiment, spec)
    out = args.out or f"{args.experiment}.csv"
    csv_path, man_path = write_table(rows, out, args.experiment, spec)
    print(f"wrote {csv_path} and {man_path}")
    return EXIT_OK


def _probability(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="confpoint", description="Conformal changepoint localization and testing.")
    sub = p.add_subparsers(dest="command", required=True)

    loc = sub.add_parser("localize", help="estimate a changepoint and its confidence set")
    loc.add_argument("input", help="CSV file with one numeric column")
    loc.add_argument("--alpha", type=_probability, default=0.05)
    loc.add_argument("--score", choices=("identity", "kde"), default="identity")
    loc.add_argument("--seed", type=int, default=0)
    loc.add_argument("--out", help="JSON report path (default: stdout)")
    loc.set_defaults(func=cmd_localize)

    tst = sub.add_parser("test", help="changepoint or exchangeability test")
    tst.add_argument("input", help="CSV file with one numeric column")
    tst.add_argument("--type", choices=("changepoint", "exchangeability"), required=True)
    tst.add_argument("--t0", type=int, help="candidate split (changepoint test)")
    tst.add_argument("--c", type=_probability, help="changepoint fraction (exchangeability test)")
    tst.add_argument("--baseline", action="store_true", help="exchangeability test on the whole trace")
    tst.add_argument("--alpha", type=_probability, default=0.05)
    tst.add_argument("--seed", type=int, default=0)
    tst.add_argument("--out", help="JSON report path (default: stdout)")
    tst.set_defaults(func=cmd_test)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    sim.add_argument("--config", required=True, help="JSON experiment spec")
    sim.add_argument("--out", help="CSV path (manifest is written next to it)")
    sim.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Short as e:
        print(f"error: need at least 2 observations, got {e.n}", file=sys.stderr)
        return EXIT_SHORT
    except SpecError as e:
        print("error: invalid experiment config:", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, IndexOutOfRange) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
