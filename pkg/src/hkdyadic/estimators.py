"""Adversarial lower-bound search for averaging and maximal operator norms.

Both estimators scan one deterministic corpus of test functions per
resolution ``K`` and report the largest ratio ``||A f|| / ||f||`` found,
together with a replayable witness.  Shifted cubes are unions of cells only
after splitting every cell into six, so operators act on the lifted window
(``sub = 6``); the test functions themselves always live at resolution
``K``.

* averaging: ``A = T_{1,Q}`` for Calderón–Zygmund families of ``f`` at the
  thresholds ``2^j``, single cubes around the exponent's jump points, and
  random disjoint families;
* maximal: ``A f = max(f, M^D_{<=K+1} f)``, the maximal function over cubes
  of generation ``<= K+1`` (each such cube is a union of lifted cells, so the
  value is a pointwise lower bound of ``M^D f`` and an upper bound of every
  ``T_{1,Q} f`` in the corpus).
"""

from __future__ import annotations

import datetime as _dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exponent import Exponent, PhiFamily, luxemburg_norm, parse_exponent
from .grid import CubeAddress, GridSystem, cube_bounds, locate
from .operators import CubeFamily, _maximal_numerators, averaging, cone_table, cz_from_table, top_generation
from .stepfn import StepFunction, Window

__all__ = [
    "EstimatorConfig",
    "EstimatorReport",
    "make_test_function",
    "build_corpus",
    "ad_constant_estimate",
    "maximal_norm_estimate",
    "equiv_report",
    "replay_witness",
    "growth_factor",
    "verdict",
]

LIFT = 6
UNBOUNDED_GROWTH = 1.15
BOUNDED_GROWTH = 1.05


@dataclass(frozen=True)
class EstimatorConfig:
    resolutions: tuple[int, ...] = (6, 8, 10)
    seed: int = 0
    lambda_ladder: tuple[int, ...] = tuple(range(-6, 7))
    grids: tuple[int, ...] | None = None
    family: str = "bar"
    k0: int = -3
    m0: int = -1
    n: int = 1
    random_functions: int = 3
    random_families: int = 2
    single_cube_depth: int = 6

    def window(self, K: int) -> Window:
        return Window(self.n, self.k0, (self.m0,) * self.n, K)

    def grid_list(self) -> tuple[int, ...]:
        all_grids = tuple(range(GridSystem(self.n).num_grids))
        return all_grids if self.grids is None else tuple(self.grids)

    def to_json(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "seed": self.seed,
            "lambda_ladder": list(self.lambda_ladder),
            "grids": None if self.grids is None else list(self.grids),
            "family": self.family,
            "window": {"k0": self.k0, "m0": [self.m0] * self.n},
            "random_functions": self.random_functions,
            "random_families": self.random_families,
        }


@dataclass
class EstimatorReport:
    exponent: str
    window: dict
    K: list
    candidates: int
    best_ratio: float
    witness: dict | None
    trace: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "exponent": self.exponent,
            "window": self.window,
            "K": self.K,
            "candidates": self.candidates,
            "best_ratio": self.best_ratio,
            "witness": self.witness,
            "trace": self.trace,
        }
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# test functions


def _frac_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def make_test_function(desc: dict, window: Window) -> StepFunction:
    """Rebuild a corpus function from its descriptor.

    * ``{"kind": "indicator", "box": [[lo, hi], ...]}`` — rational strings;
    * ``{"kind": "random", "seed": s, "index": i, "gen": g, "box": [...]}`` —
      i.i.d. uniform values on the generation-``g`` cells of ``box``, fixed
      independently of the resolution.
    """
    box = [(Fraction(a), Fraction(b)) for a, b in desc["box"]]
    if desc["kind"] == "indicator":
        return StepFunction.indicator(window, box).as_float()
    if desc["kind"] != "random":
        raise ValueError(f"unknown test function kind {desc['kind']!r}")
    g = int(desc["gen"])
    if g > window.K:
        raise ValueError("random test function is finer than the window")
    coarse_side = Fraction(2) ** (-g)
    counts = [int((b - a) / coarse_side) for a, b in box]
    rng = np.random.default_rng([int(desc["seed"]), int(desc["index"])])
    coarse = rng.uniform(0.0, 1.0, size=counts)
    reps = int(coarse_side / window.h)
    fine = coarse
    for axis in range(window.n):
        fine = np.repeat(fine, reps, axis=axis)
    vals = np.zeros(window.shape)
    sl = tuple(slice(int((a - window.lo[i]) / window.h), int((b - window.lo[i]) / window.h)) for i, (a, b) in enumerate(box))
    vals[sl] = fine
    return StepFunction(window, vals)


def _jump_points(p: Exponent, top: int = 2) -> list[Fraction]:
    """Cell boundaries (first axis) carrying the largest exponent jumps."""
    w = p.window
    vals = p.values
    if w.n > 1:
        vals = vals.mean(axis=tuple(range(1, w.n)))
    diffs = np.abs(np.diff(vals))
    if diffs.size == 0 or diffs.max() <= 0:
        return []
    order = sorted(range(diffs.size), key=lambda i: (-diffs[i], i))
    cut = diffs[order[0]] * 0.5
    chosen = [i for i in order[:top] if diffs[i] >= cut]
    return [w.lo[0] + w.h * (i + 1) for i in sorted(chosen)]


def _function_corpus(p: Exponent, cfg: EstimatorConfig, K: int) -> list[dict]:
    w = cfg.window(K)
    h = w.h
    n = cfg.n
    center = [Fraction(0)] * n
    points = _jump_points(p) + [Fraction(0)]
    descs = []
    seen = set()

    def add(d):
        key = repr(d)
        if key not in seen:
            seen.add(key)
            descs.append(d)

    for x in points:
        # the two cells on either side of the point, along the first axis
        for lo in (x - h, x):
            box = [[_frac_str(lo), _frac_str(lo + h)]] + [[_frac_str(c), _frac_str(c + h)] for c in center[1:]]
            add({"kind": "indicator", "box": box})
    unit = [["0", "1"]] * n
    add({"kind": "indicator", "box": unit})
    add({"kind": "indicator", "box": [["-1", "0"]] + [["0", "1"]] * (n - 1)})
    for i in range(cfg.random_functions):
        add({"kind": "random", "seed": cfg.seed, "index": i, "gen": 2, "box": [["-2", "2"]] * n})
    return descs


def _special_points(p: Exponent, K: int) -> list[Fraction]:
    h = Fraction(1, 2**K)
    pts = []
    for x in _jump_points(p) + [Fraction(0)]:
        for y in (x, x - h / 2, x + h / 2):
            if y not in pts:
                pts.append(y)
    return pts


def _families_for(f: StepFunction, desc: dict, p: Exponent, cfg: EstimatorConfig, K: int, rng, tables) -> list[tuple[str, CubeFamily]]:
    w = f.window
    n = w.n
    grids = cfg.grid_list()
    out = []
    # (a) Calderón–Zygmund families at thresholds 2^j
    for t in grids:
        for j in cfg.lambda_ladder:
            res = cz_from_table(tables[t], 2.0**j)
            if len(res.cubes):
                out.append((f"cz:t={t},lambda=2^{j}", res.cubes))
    # (b) single cubes around jump points and the origin
    for x in _special_points(p, K):
        pt = (x,) + (Fraction(0),) * (n - 1)
        for t in grids:
            for g in range(K + 1, K + 1 - cfg.single_cube_depth, -1):
                c = locate(pt, t, g)
                out.append((f"cube:{c.t},{c.k},{list(c.m)}", CubeFamily((c,))))
    # (c) random disjoint families inside the support hull
    sup = f.support_bounds()
    if sup is not None:
        for r in range(cfg.random_families):
            chosen = []
            for _ in range(40):
                t = int(rng.choice(grids))
                g = int(rng.integers(K - 4, K + 2))
                pt = tuple(Fraction(int(rng.integers(0, 2**20)), 2**20) * (b - a) + a for a, b in sup)
                c = locate(pt, t, g)
                try:
                    CubeFamily(tuple(chosen + [c]))
                except ValueError:
                    continue
                chosen.append(c)
                if len(chosen) >= 8:
                    break
            if chosen:
                out.append((f"random:{r}", CubeFamily(tuple(chosen))))
    # deduplicate families, keep first label
    seen, uniq = set(), []
    for label, fam in out:
        if fam.cubes not in seen:
            seen.add(fam.cubes)
            uniq.append((label, fam))
    return uniq


def build_corpus(p_desc: str, cfg: EstimatorConfig, K: int):
    """The test functions (descriptors) at resolution ``K``."""
    p = parse_exponent(p_desc, cfg.window(K))
    return _function_corpus(p, cfg, K)


# ---------------------------------------------------------------------------
# evaluation


class _Evaluator:
    """Norms on the lifted window for one exponent and resolution."""

    def __init__(self, p_desc: str, cfg: EstimatorConfig, K: int):
        self.window = cfg.window(K)
        self.p = parse_exponent(p_desc, self.window)
        self.phi = PhiFamily.by_name(cfg.family, self.p)
        self.phi_lift = self.phi.refine(LIFT)
        self.cfg = cfg
        self.K = K

    def norm(self, f: StepFunction) -> float:
        return luxemburg_norm(f, self.phi_lift if f.window.sub == LIFT else self.phi)

    def maximal(self, f: StepFunction) -> StepFunction:
        fl = f.refine(LIFT)
        top = top_generation(fl.window)
        best = None
        for t in self.cfg.grid_list():
            num, den = _maximal_numerators(fl, t, None, top)
            vals = np.asarray(num, dtype=float) / den
            best = vals if best is None else np.maximum(best, vals)
        return StepFunction(fl.window, np.maximum(best, fl.to_float()))


def _ratio_avg(ev: _Evaluator, f: StepFunction, fam: CubeFamily, fnorm: float) -> float:
    return ev.norm(averaging(f.refine(LIFT), fam)) / fnorm


def _scan(p_desc: str, cfg: EstimatorConfig, K: int):
    """Evaluate the full corpus at one resolution; returns both bests."""
    ev = _Evaluator(p_desc, cfg, K)
    rng = np.random.default_rng([cfg.seed, K])
    ad_best, ad_wit, ad_count = -1.0, None, 0
    mx_best, mx_wit, mx_count = -1.0, None, 0
    for desc in _function_corpus(ev.p, cfg, K):
        f = make_test_function(desc, ev.window)
        fnorm = ev.norm(f)
        if fnorm == 0:
            continue
        tables = {t: cone_table(f, t) for t in cfg.grid_list()}
        fl = f.refine(LIFT)
        for label, fam in _families_for(f, desc, ev.p, cfg, K, rng, tables):
            r = ev.norm(averaging(fl, fam)) / fnorm
            ad_count += 1
            if r > ad_best:
                ad_best = r
                ad_wit = {"function": desc, "family": fam.to_json(), "label": label, "K": K}
        r = ev.norm(ev.maximal(f)) / fnorm
        mx_count += 1
        if r > mx_best:
            mx_best = r
            mx_wit = {"function": desc, "K": K}
    return (ad_best, ad_wit, ad_count), (mx_best, mx_wit, mx_count)


def replay_witness(p_desc: str, cfg: EstimatorConfig, witness: dict) -> float:
    """Recompute a recorded ratio from its witness alone."""
    K = int(witness["K"])
    ev = _Evaluator(p_desc, cfg, K)
    f = make_test_function(witness["function"], ev.window)
    fnorm = ev.norm(f)
    if "family" in witness:
        return _ratio_avg(ev, f, CubeFamily.from_json(witness["family"]), fnorm)
    return ev.norm(ev.maximal(f)) / fnorm


def growth_factor(trace: Sequence[float]) -> float:
    """Average growth per refinement, ``(last / first) ** (1 / refinements)``."""
    if len(trace) < 2 or trace[0] <= 0:
        return float("nan")
    return (trace[-1] / trace[0]) ** (1.0 / (len(trace) - 1))


def step_factors(trace: Sequence[float]) -> list[float]:
    return [b / a for a, b in zip(trace, trace[1:])]


def verdict(ad_growth: float, max_growth: float) -> str:
    if ad_growth >= UNBOUNDED_GROWTH and max_growth >= UNBOUNDED_GROWTH:
        return "unbounded-consistent"
    if ad_growth <= BOUNDED_GROWTH and max_growth <= BOUNDED_GROWTH:
        return "bounded-consistent"
    return "inconclusive"


def _report(p_desc, cfg, per_K, which) -> EstimatorReport:
    idx = 0 if which == "ad" else 1
    trace = [{"K": K, "best_ratio": res[idx][0], "candidates": res[idx][2]} for K, res in per_K]
    best_K, best_res = max(per_K, key=lambda kr: kr[1][idx][0])
    return EstimatorReport(
        exponent=p_desc,
        window={"k0": cfg.k0, "m0": [cfg.m0] * cfg.n},
        K=[K for K, _ in per_K],
        candidates=sum(res[idx][2] for _, res in per_K),
        best_ratio=best_res[idx][0],
        witness=best_res[idx][1],
        trace=trace,
    )


def _run(p_desc: str, cfg: EstimatorConfig, workers: int = 1):
    """Scan every resolution; results are merged in ladder order."""
    if workers <= 1 or len(cfg.resolutions) == 1:
        return [(K, _scan(p_desc, cfg, K)) for K in cfg.resolutions]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda K: _scan(p_desc, cfg, K), cfg.resolutions))
    return list(zip(cfg.resolutions, results))


def ad_constant_estimate(p_desc: str, cfg: EstimatorConfig = EstimatorConfig()) -> EstimatorReport:
    """Best ``||T_{1,Q} f|| / ||f||`` over the corpus, per resolution."""
    return _report(p_desc, cfg, _run(p_desc, cfg), "ad")


def maximal_norm_estimate(p_desc: str, cfg: EstimatorConfig = EstimatorConfig()) -> EstimatorReport:
    """Best ``||M^D f|| / ||f||`` over the corpus, with the averaging companion."""
    per_K = _run(p_desc, cfg)
    rep = _report(p_desc, cfg, per_K, "max")
    rep.extra["companion"] = _report(p_desc, cfg, per_K, "ad").to_json()
    return rep


def equiv_report(p_desc: str, cfg: EstimatorConfig = EstimatorConfig(), timestamp: bool = True, workers: int = 1) -> dict:
    """Run both estimators over the resolution ladder and classify the trend."""
    per_K = _run(p_desc, cfg, workers)
    ad = _report(p_desc, cfg, per_K, "ad")
    mx = _report(p_desc, cfg, per_K, "max")
    ad_trace = [r["best_ratio"] for r in ad.trace]
    mx_trace = [r["best_ratio"] for r in mx.trace]
    g_ad, g_mx = growth_factor(ad_trace), growth_factor(mx_trace)
    out = {
        "exponent": p_desc,
        "window": ad.window,
        "K": ad.K,
        "config": cfg.to_json(),
        "averaging": ad.to_json(),
        "maximal": mx.to_json(),
        "trace": [
            {"K": K, "ad_ratio": a, "maxop_ratio": m} for K, a, m in zip(ad.K, ad_trace, mx_trace)
        ],
        "growth": {
            "ad": g_ad,
            "maxop": g_mx,
            "ad_steps": step_factors(ad_trace),
            "maxop_steps": step_factors(mx_trace),
        },
        "verdict": verdict(g_ad, g_mx),
    }
    if timestamp:
        out["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return out
