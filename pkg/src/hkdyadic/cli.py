"""Command-line front end: ``hkd <subcommand> [options]``.

Exit codes: 0 success, 1 property violation under ``--check``, 2 usage or
parse error.  Windows are given as ``--window=k0,m0,K`` (the ``=`` is needed
because the value starts with a minus sign).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import estimators
from .exponent import Exponent, PhiFamily, luxemburg_norm, parse_exponent
from .operators import (
    CubeFamily,
    averaging,
    check_cz,
    cz_decompose,
    dyadic_maximal,
    dyadic_maximal_grid,
    hl_maximal_1d,
)
from .stepfn import AlignmentError, StepFunction, Window

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parsing helpers


def parse_window(text: str, n: int = 1) -> Window:
    try:
        k0, m0, K = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--window expects k0,m0,K, got {text!r}") from exc
    return Window(n, k0, (m0,) * n, K)


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def load_exponent(source: str, window: Window) -> Exponent:
    if os.path.exists(source):
        return Exponent.from_json(_load_json(source))
    try:
        return parse_exponent(source, window)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def random_function(seed: int, window: Window) -> StepFunction:
    """Exact random step function: values ``k/8`` on the cells of ``[-2, 2)^n``."""
    rng = np.random.default_rng(seed)
    vals = np.empty(window.shape, dtype=object)
    vals.fill(Fraction(0))
    sl = []
    for a in range(window.n):
        lo = max(0, int((Fraction(-2) - window.lo[a]) / window.h))
        hi = min(window.cells_per_axis, int((Fraction(2) - window.lo[a]) / window.h))
        sl.append(slice(lo, hi))
    block_shape = tuple(s.stop - s.start for s in sl)
    raw = rng.integers(0, 9, size=block_shape) * (rng.random(block_shape) < 0.3)
    vals[tuple(sl)] = np.vectorize(lambda k: Fraction(int(k), 8), otypes=[object])(raw)
    return StepFunction(window, vals)


def load_function(source: str, window: Window) -> StepFunction:
    """``indicator:a,b[,c,d]``, ``random:SEED`` or a StepFunction JSON file."""
    if os.path.exists(source):
        try:
            return StepFunction.from_json(_load_json(source))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad step function file {source}: {exc}") from exc
    kind, _, arg = source.partition(":")
    try:
        if kind == "indicator":
            nums = [Fraction(v) for v in arg.split(",")]
            if len(nums) != 2 * window.n:
                raise ValueError(f"indicator needs {2 * window.n} numbers")
            box = [(nums[2 * i], nums[2 * i + 1]) for i in range(window.n)]
            return StepFunction.indicator(window, box)
        if kind == "random":
            return random_function(int(arg), window)
    except (ValueError, ZeroDivisionError, AlignmentError) as exc:
        raise UsageError(f"bad function {source!r}: {exc}") from exc
    raise UsageError(f"unknown function source {source!r}")


def parse_fraction(text: str, name: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"{name} must be a number, got {text!r}") from exc


def parse_grids(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--grids expects comma-separated shift indices, got {text!r}") from exc


def _emit(obj, out: str | None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _fraction_json(v):
    return f"{v.numerator}/{v.denominator}" if isinstance(v, Fraction) else v


def _write_profile_csv(f: StepFunction, path: str, label: str):
    from .plotting import plot_profile

    if f.window.n != 1:
        raise UsageError("CSV profiles are only written for n = 1")
    x = f.window.midpoint_coords(0)
    y = f.to_float()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "value"])
        for xi, yi in zip(x, y):
            wr.writerow([repr(float(xi)), repr(float(yi))])
    plot_profile(x, {label: y}, Path(path).with_suffix(".png"), title=label)


# ---------------------------------------------------------------------------
# subcommands


def cmd_norm(args) -> int:
    window = parse_window(args.window)
    p = load_exponent(args.p, window)
    f = load_function(args.f, p.window)
    if f.window != p.window:
        raise UsageError(f"function window {f.window} differs from exponent window {p.window}")
    phi = PhiFamily.by_name(args.family, p)
    value = luxemburg_norm(f, phi)
    print(repr(value))
    if args.out:
        _emit({"norm": value, "family": phi.tag, "exponent": p.descriptor, "window": p.window.to_json()}, args.out)
    return EXIT_OK


def cmd_maxfn(args) -> int:
    window = parse_window(args.window)
    f = load_function(args.f, window)
    if args.kind == "hl":
        M = hl_maximal_1d(f)
    elif args.kind == "grid":
        M = dyadic_maximal_grid(f, args.t)
    else:
        M = dyadic_maximal(f, grids=parse_grids(args.grids))
    if args.csv:
        _write_profile_csv(M, args.csv, f"{args.kind} maximal function")
    _emit(M.to_json(), args.out)
    return EXIT_OK


def cmd_cz(args) -> int:
    window = parse_window(args.window)
    lam = parse_fraction(args.lam, "--lambda")
    if lam <= 0:
        raise UsageError("--lambda must be positive")
    if args.trials:
        failures = 0
        for i in range(args.trials):
            f = random_function(args.seed + i, window)
            res = cz_decompose(f, lam, args.t)
            problems = check_cz(f, res)
            if problems:
                failures += 1
                print(f"seed {args.seed + i}: " + "; ".join(problems), file=sys.stderr)
        _emit({"trials": args.trials, "failures": failures, "lambda": _fraction_json(lam), "t": args.t}, args.out)
        return EXIT_VIOLATION if failures else EXIT_OK
    if args.f is None:
        raise UsageError("cz needs --f or --trials")
    f = load_function(args.f, window)
    res = cz_decompose(f, lam, args.t)
    out = res.to_json()
    if args.check:
        problems = check_cz(f, res)
        out["check"] = {"ok": not problems, "problems": problems}
        _emit(out, args.out)
        return EXIT_VIOLATION if problems else EXIT_OK
    _emit(out, args.out)
    return EXIT_OK


def _parse_cubes(text: str) -> CubeFamily:
    raw = _load_json(text) if os.path.exists(text) else None
    if raw is None:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--cubes is neither a file nor JSON: {exc}") from exc
    try:
        return CubeFamily.from_json(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad cube family: {exc}") from exc


def cmd_avg(args) -> int:
    window = parse_window(args.window)
    f = load_function(args.f, window)
    fam = _parse_cubes(args.cubes)
    s = float(parse_fraction(args.s, "--s"))
    try:
        T = averaging(f, fam, s)
    except AlignmentError:
        # shifted cubes of generation <= K+1 are unions of sixth-cells
        try:
            T = averaging(f.refine(estimators.LIFT), fam, s)
        except AlignmentError as exc:
            raise UsageError(str(exc)) from exc
    out = T.to_json()
    if args.check:
        source = f.refine(T.window.sub) if T.window.sub > 1 else f
        M = dyadic_maximal(source)
        viol = int(np.sum(T.to_float() > M.to_float() * (1 + 1e-12))) if s == 1 else 0
        out["check"] = {"ok": viol == 0, "cells_above_maximal": viol}
        _emit(out, args.out)
        return EXIT_VIOLATION if viol else EXIT_OK
    _emit(out, args.out)
    return EXIT_OK


def _config(args, resolutions=None) -> estimators.EstimatorConfig:
    window = parse_window(args.window)
    if resolutions is None:
        resolutions = (window.K,)
    return estimators.EstimatorConfig(
        resolutions=tuple(resolutions),
        seed=args.seed,
        grids=parse_grids(args.grids),
        family=args.family,
        k0=window.k0,
        m0=window.m0[0],
    )


def _parse_resolutions(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--resolutions expects integers, got {text!r}") from exc


def _check_exponent(desc: str, cfg):
    try:
        parse_exponent(desc, cfg.window(cfg.resolutions[0]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_adconst(args) -> int:
    cfg = _config(args, _parse_resolutions(args.resolutions))
    _check_exponent(args.p, cfg)
    rep = estimators.ad_constant_estimate(args.p, cfg)
    _emit(rep.to_json(), args.out)
    return EXIT_OK


def cmd_equiv_report(args) -> int:
    cfg = _config(args, _parse_resolutions(args.resolutions))
    _check_exponent(args.p, cfg)
    report = estimators.equiv_report(args.p, cfg, workers=_workers())
    _emit(report, args.out)
    if args.out:
        from .plotting import plot_trace

        csv_path = Path(args.out).with_suffix(".csv")
        with open(csv_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["K", "ad_ratio", "maxop_ratio"])
            for row in report["trace"]:
                wr.writerow([row["K"], repr(row["ad_ratio"]), repr(row["maxop_ratio"])])
        plot_trace(report["trace"], csv_path.with_suffix(".png"), title=f"{args.p}: {report['verdict']}")
    if args.check and args.p.startswith("const:"):
        best = report["averaging"]["best_ratio"]
        return EXIT_VIOLATION if best > 1 + 1e-6 else EXIT_OK
    return EXIT_OK


def _workers() -> int:
    raw = os.environ.get("HKD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--window", default="-3,-1,8", help="k0,m0,K (default -3,-1,8: the box [-8,8) at 2^-8)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (JSON); stdout if omitted")
    common.add_argument("--family", choices=("bar", "tilde"), default="bar")
    common.add_argument("--check", action="store_true", help="re-verify invariants; exit 1 on violation")
    common.add_argument("--grids", default=None, help="comma-separated shift indices to use")

    parser = argparse.ArgumentParser(prog="hkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norm", parents=[common], help="Luxemburg norm of a step function")
    p.add_argument("--p", required=True, help="const:q | jump:p1,p2 | smooth:a,b | exponent JSON file")
    p.add_argument("--f", required=True, help="indicator:a,b | random:SEED | step function JSON file")
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("maxfn", parents=[common], help="maximal functions at cell midpoints")
    p.add_argument("--f", required=True)
    p.add_argument("--kind", choices=("dyadic", "grid", "hl"), default="dyadic")
    p.add_argument("--t", type=int, default=0, help="grid shift index for --kind grid")
    p.add_argument("--csv", default=None, help="also write a two-column CSV (and PNG) profile")
    p.set_defaults(func=cmd_maxfn)

    p = sub.add_parser("cz", parents=[common], help="Calderón–Zygmund decomposition")
    p.add_argument("--f", default=None)
    p.add_argument("--lambda", dest="lam", required=True)
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--trials", type=int, default=0, help="check this many seeded random functions")
    p.set_defaults(func=cmd_cz)

    p = sub.add_parser("avg", parents=[common], help="averaging operator over a cube family")
    p.add_argument("--f", required=True)
    p.add_argument("--cubes", required=True, help='JSON list of {"t","k","m"} or a file')
    p.add_argument("--s", default="1")
    p.set_defaults(func=cmd_avg)

    for name, func, helptext in (
        ("adconst", cmd_adconst, "lower bound for the averaging-operator constant"),
        ("equiv-report", cmd_equiv_report, "averaging vs maximal operator experiment"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--p", required=True)
        p.add_argument("--resolutions", default="6,8,10")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, AlignmentError, NotImplementedError) as exc:
        print(f"hkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
