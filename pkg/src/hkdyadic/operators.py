"""Maximal functions, averaging operators and the Calderón–Zygmund decomposition.

The dyadic machinery works on a *cone table*: for one grid ``t`` and every
generation ``g`` between a top generation and a finest generation ``G`` it
holds the means of ``f`` over all cubes of that generation meeting the window.
Means are kept as numerators over one common denominator so that exact
comparisons across generations are plain integer comparisons.

Finest generation
    Cubes of a shifted grid are never unions of grid-0 cells, so the
    cone is cut at ``G = K + 1`` (the default).  Every cube of generation
    ``<= K + 1`` has corners on the lattice ``2^-(K+1) / 3``, which the
    integer engine handles exactly.  The generation-``K+1`` cube containing a
    cell midpoint lies inside that cell, hence for ``sub == 1`` windows the
    cut loses nothing at midpoints: finer cubes there only see ``f(x)``.

Top generation
    Walking to coarser generations, the corners falling inside the window
    eventually reduce to the permanent ones (the origin, on unshifted
    axes).  From there on every ancestor meets the window in the same set,
    so its mean is ``2^-n`` times its child's and can never win a maximum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Sequence

import numpy as np

from .grid import CubeAddress, GridSystem, cube_bounds, parent
from .stepfn import INT64_SAFE, AlignmentError, Region, StepFunction, Window

__all__ = [
    "CubeFamily",
    "CZResult",
    "ConeTable",
    "cone_table",
    "top_generation",
    "dyadic_maximal_grid",
    "dyadic_maximal",
    "hl_maximal_1d",
    "hl_maximal_point",
    "averaging",
    "cz_decompose",
    "cz_from_table",
    "check_cz",
    "family_union_mask",
]


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    return Fraction(
        math.gcd(a.numerator * b.denominator, b.numerator * a.denominator),
        a.denominator * b.denominator,
    )


def _sign(k: int) -> int:
    return 1 if k % 2 == 0 else -1


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class CubeFamily:
    """Finite family of pairwise disjoint cubes (shifts and sizes may mix)."""

    cubes: tuple[CubeAddress, ...]

    def __post_init__(self):
        cubes = tuple(sorted(set(self.cubes)))
        object.__setattr__(self, "cubes", cubes)
        if len(cubes) > 1:
            clash = _first_overlap(cubes)
            if clash is not None:
                a, b = clash
                raise ValueError(f"cube family is not pairwise disjoint: {a} meets {b}")

    def __len__(self):
        return len(self.cubes)

    def __iter__(self):
        return iter(self.cubes)

    def boxes(self):
        return [cube_bounds(c) for c in self.cubes]

    def to_json(self) -> list:
        return [c.to_json() for c in self.cubes]

    @classmethod
    def from_json(cls, obj) -> "CubeFamily":
        return cls(tuple(CubeAddress.from_json(c) for c in obj))


def _integer_boxes(boxes) -> tuple[np.ndarray, np.ndarray]:
    """Box corners scaled to a common integer lattice, shapes ``(m, n)``."""
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (c.denominator for box in boxes for ab in box for c in ab), 1)
    lo = np.array([[int(a * den) for a, _ in box] for box in boxes], dtype=object)
    hi = np.array([[int(b * den) for _, b in box] for box in boxes], dtype=object)
    return lo, hi


def _first_overlap(cubes):
    boxes = [cube_bounds(c) for c in cubes]
    lo, hi = _integer_boxes(boxes)
    n = lo.shape[1]
    if n == 1:
        order = sorted(range(len(boxes)), key=lambda i: lo[i, 0])
        for i, j in zip(order, order[1:]):
            if hi[i, 0] > lo[j, 0]:
                return cubes[i], cubes[j]
        return None
    for i in range(len(boxes)):
        meet = np.ones(len(boxes), dtype=bool)
        for ax in range(n):
            meet &= (lo[:, ax] < hi[i, ax]) & (lo[i, ax] < hi[:, ax])
        meet[i] = False
        if meet.any():
            return cubes[i], cubes[int(np.flatnonzero(meet)[0])]
    return None


def _qstr(v):
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return v


def _runs(cells) -> list[list[int]]:
    """Sorted flat cell indices as half-open runs ``[start, stop)``."""
    out = []
    for i in sorted(cells):
        if out and out[-1][1] == i:
            out[-1][1] = i + 1
        else:
            out.append([i, i + 1])
    return out


@dataclass(frozen=True)
class CZResult:
    """Selected cubes, their means and the superlevel mask (as cell runs in JSON)."""

    t: int
    lam: Fraction | float
    cubes: CubeFamily
    mask: Region
    means: tuple = field(default=(), compare=False)

    def to_json(self) -> dict:
        lam = self.lam
        return {
            "t": self.t,
            "lambda": _qstr(lam),
            "cubes": self.cubes.to_json(),
            "means": [_qstr(m) for m in self.means],
            "mask": _runs(self.mask.cells),
            "window": self.mask.window.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CZResult":
        window = Window.from_json(obj["window"])

        def num(v):
            return Fraction(v) if isinstance(v, str) else v

        return cls(
            int(obj["t"]),
            num(obj["lambda"]),
            CubeFamily.from_json(obj["cubes"]),
            Region(window=window, cells=tuple(i for a, b in obj["mask"] for i in range(int(a), int(b)))),
            tuple(num(m) for m in obj.get("means", [])),
        )


# ---------------------------------------------------------------------------
# cone tables


def _unit(window: Window, G: int) -> Fraction:
    """Largest length dividing both the cell side and ``2^-G / 3``."""
    return _frac_gcd(window.h, Fraction(1, 3) * Fraction(2) ** (-G))


def _axis_layout(window: Window, u: Fraction, t_thirds: int, g: int, axis: int):
    """Side (units), offset of m=0's corner (units) and the m-range meeting the window."""
    side = Fraction(2) ** (-g) / u
    assert side.denominator == 1
    side = int(side)
    off = (Fraction(2) ** (-g) * Fraction(_sign(g) * t_thirds, 3) - window.lo[axis]) / u
    assert off.denominator == 1
    off = int(off)
    W = window.cells_per_axis * int(window.h / u)
    m_min = (-side - off) // side + 1
    m_max = -((off - W) // side) - 1  # ceil((W - off) / side) - 1
    return side, off, m_min, m_max


def _interior_corners(window: Window, u: Fraction, t_thirds: int, g: int, axis: int) -> set[int]:
    side, off, m_min, m_max = _axis_layout(window, u, t_thirds, g, axis)
    W = window.cells_per_axis * int(window.h / u)
    return {m * side + off for m in range(m_min, m_max + 2) if 0 < m * side + off < W}


def top_generation(window: Window, G: int | None = None) -> int:
    """Coarsest generation any grid's cone needs (shared by all grids)."""
    G = window.K + 1 if G is None else G
    u = _unit(window, G)
    grids = GridSystem(window.n)
    zero = [(-window.lo[a]) / u for a in range(window.n)]
    W = window.cells_per_axis * int(window.h / u)
    best = window.k0
    for t in range(grids.num_grids):
        T = grids.shift_thirds(t)
        g = window.k0
        while True:
            stable = True
            for a in range(window.n):
                limit = {int(zero[a])} if T[a] == 0 and zero[a].denominator == 1 and 0 < zero[a] < W else set()
                if _interior_corners(window, u, T[a], g, a) != limit:
                    stable = False
                    break
            if stable:
                break
            g -= 1
        best = min(best, g)
    return best


@dataclass
class ConeTable:
    """Scaled means of ``f`` over the cubes of one grid, generations ``top..G``.

    ``levels[g - top]`` is an n-d array of numerators ``N`` with
    ``mean = N / denom``; ``m_min[g - top]`` holds the lattice vector of the
    entry at index 0 and ``layout`` the per-axis ``(side, offset)`` in units.
    """

    f: StepFunction
    t: int
    top: int
    G: int
    unit: Fraction
    denom: int | float
    levels: list
    m_min: list
    layout: list

    def mean_of(self, g: int, idx) -> Fraction | float:
        num = self.levels[g - self.top][idx]
        return Fraction(int(num), self.denom) if self.f.exact else num / self.denom

    def address(self, g: int, idx) -> CubeAddress:
        return CubeAddress(self.t, g, tuple(mm + i for mm, i in zip(self.m_min[g - self.top], idx)))

    def parent_index(self, g: int) -> list[np.ndarray]:
        """Per-axis index (into level ``g-1``) of each level-``g`` cube's parent."""
        T = GridSystem(self.f.window.n).shift_thirds(self.t)
        out = []
        shape = self.levels[g - self.top].shape
        for a in range(self.f.window.n):
            m = self.m_min[g - self.top][a] + np.arange(shape[a])
            pm = (m - _sign(g - 1) * T[a]) // 2
            out.append(pm - self.m_min[g - 1 - self.top][a])
        return out

    def point_index(self, g: int, doubled_pos: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Per-axis level index of the cube containing points at ``pos / 2`` units."""
        out = []
        for a in range(self.f.window.n):
            side, off = self.layout[g - self.top][a]
            m = (np.asarray(doubled_pos[a], dtype=np.int64) - 2 * off) // (2 * side)
            out.append(m - self.m_min[g - self.top][a])
        return out

    def cell_midpoints_doubled(self) -> list[np.ndarray]:
        w = self.f.window
        U = int(w.h / self.unit)
        mids = 2 * U * np.arange(w.cells_per_axis, dtype=np.int64) + U
        return [mids] * w.n


def cone_table(f: StepFunction, t: int, G: int | None = None, top: int | None = None) -> ConeTable:
    w = f.window
    G = w.K + 1 if G is None else G
    if G > w.K + 1 + int(math.log2(w.sub)) + 1:
        raise ValueError("finest generation too fine for this window")
    top = top_generation(w, G) if top is None else top
    u = _unit(w, G)
    T = GridSystem(w.n).shift_thirds(t)
    U = int(w.h / u)
    integ = f.integrator
    side_top = int(Fraction(2) ** (-top) / u)
    levels, mins, layout = [], [], []
    for g in range(top, G + 1):
        pos, lay, mm = [], [], []
        for a in range(w.n):
            side, off, m_min, m_max = _axis_layout(w, u, T[a], g, a)
            corners = off + side * np.arange(m_min, m_max + 2, dtype=np.int64)
            pos.append(corners)
            lay.append((side, off))
            mm.append(m_min)
        scale = 2 ** (w.n * (g - top))
        S = integ.corner_sums(pos, U, extra=scale)
        for a in range(w.n):
            S = np.diff(S, axis=a)
        if f.exact and S.dtype != object and int(np.abs(S).max(initial=0)) * scale >= INT64_SAFE:
            S = S.astype(object)
        levels.append(S * scale)
        mins.append(tuple(mm))
        layout.append(tuple(lay))
    denom = integ.den * side_top**w.n
    return ConeTable(f, t, top, G, u, denom if f.exact else float(denom), levels, mins, layout)


def _cone_max(table: ConeTable) -> np.ndarray:
    """Top-down running maximum: level arrays of max mean over each cube's ancestry."""
    run = [table.levels[0]]
    for g in range(table.top + 1, table.G + 1):
        pidx = table.parent_index(g)
        inherited = run[-1][np.ix_(*pidx)]
        run.append(np.maximum(table.levels[g - table.top], inherited))
    return run


def _as_step(f: StepFunction, num: np.ndarray, denom) -> StepFunction:
    if f.exact:
        d = int(denom)
        vals = np.array([Fraction(int(v), d) for v in num.flat], dtype=object)
        return StepFunction._trusted(f.window, vals, True)
    return StepFunction(f.window, np.asarray(num, dtype=float) / denom)


def _maximal_numerators(f: StepFunction, t: int, G: int | None, top: int | None = None):
    table = cone_table(f, t, G, top)
    run = _cone_max(table)
    idx = table.point_index(table.G, table.cell_midpoints_doubled())
    return run[-1][np.ix_(*idx)], table.denom


def dyadic_maximal_grid(f: StepFunction, t: int, G: int | None = None) -> StepFunction:
    """``M^{D^t} f`` at cell midpoints, over cubes of generation ``<= G``.

    With the default ``G = K + 1`` and ``sub == 1`` this is the exact value of
    the grid maximal function at every cell midpoint.
    """
    num, den = _maximal_numerators(f, t, G)
    return _as_step(f, num, den)


def dyadic_maximal(f: StepFunction, G: int | None = None, grids: Sequence[int] | None = None) -> StepFunction:
    """``M^D f``: cellwise maximum of the grid maximal functions."""
    n_grids = GridSystem(f.window.n).num_grids
    grids = range(n_grids) if grids is None else grids
    top = top_generation(f.window, G)
    best, den = None, None
    for t in grids:
        num, d = _maximal_numerators(f, t, G, top)
        # all grids share the top generation, hence the denominator
        best = num if best is None else np.maximum(best, num)
        den = d
    return _as_step(f, best, den)


# ---------------------------------------------------------------------------
# Hardy–Littlewood


def hl_maximal_1d(f: StepFunction) -> StepFunction:
    """Uncentered Hardy–Littlewood maximal function at cell midpoints (n = 1).

    For a step function, the mean over ``[a, b]`` containing the midpoint
    ``x`` is monotone in each endpoint between breakpoints, so the supremum
    over intervals containing ``x`` is attained with each endpoint either a
    cell boundary or ``x`` itself (the latter giving one-sided intervals).
    Endpoints are restricted to the convex hull of the support, since moving
    an endpoint into a zero region only lowers the mean.  Candidates are
    ranked in floating point and the winner is recomputed exactly.
    """
    w = f.window
    if w.n != 1:
        raise NotImplementedError("exact Hardy–Littlewood maximal function is only available for n = 1")
    N = w.cells_per_axis
    v = f.to_float()
    nz = np.flatnonzero(v)
    if nz.size == 0:
        return StepFunction(w, [Fraction(0)] * N) if f.exact else StepFunction(w, np.zeros(N))
    L, R = int(nz[0]), int(nz[-1]) + 1  # hull as boundary indices
    P = np.concatenate([[0.0], np.cumsum(v)])
    x = np.arange(N) + 0.5
    Px = P[:-1] + v / 2

    best = v.copy()
    # kind: 0 = f(x), 1 = [a,b], 2 = [x,b], 3 = [a,x]; arg holds a and b
    kind = np.zeros(N, dtype=np.int8)
    arg_a = np.zeros(N, dtype=np.int64)
    arg_b = np.zeros(N, dtype=np.int64)

    def offer(j, val, k, a, b):
        if val > best[j]:
            best[j], kind[j], arg_a[j], arg_b[j] = val, k, a, b

    bs = np.arange(L + 1, R + 1)
    a_s = np.arange(L, R)
    # running G[b] = max over a <= j of the slope (P[b]-P[a])/(b-a), b > j
    Gval = np.full(R + 1, -np.inf)
    Garg = np.zeros(R + 1, dtype=np.int64)
    for j in range(L, R):
        b = np.arange(j + 1, R + 1)
        s = (P[b] - P[j]) / (b - j)
        upd = s > Gval[b]
        Gval[b] = np.where(upd, s, Gval[b])
        Garg[b] = np.where(upd, j, Garg[b])
        i = int(np.argmax(Gval[j + 1 : R + 1]))
        offer(j, Gval[j + 1 + i], 1, Garg[j + 1 + i], j + 1 + i)

    for j in range(N):
        bb = bs[bs >= j + 1]
        if bb.size:
            s = (P[bb] - Px[j]) / (bb - x[j])
            i = int(np.argmax(s))
            offer(j, s[i], 2, 0, bb[i])
        aa = a_s[a_s <= j]
        if aa.size:
            s = (Px[j] - P[aa]) / (x[j] - aa)
            i = int(np.argmax(s))
            offer(j, s[i], 3, aa[i], 0)

    if not f.exact:
        return StepFunction(w, best)
    integ = f.integrator
    Fn = integ._F_obj.reshape(-1)
    den = integ.den
    Pe = [0]
    for val in Fn:
        Pe.append(Pe[-1] + int(val))
    out = []
    for j in range(N):
        k, a, b = int(kind[j]), int(arg_a[j]), int(arg_b[j])
        if k == 0:
            out.append(Fraction(int(Fn[j]), den))
        elif k == 1:
            out.append(Fraction(Pe[b] - Pe[a], den * (b - a)))
        elif k == 2:
            out.append(Fraction(2 * Pe[b] - 2 * Pe[j] - int(Fn[j]), den * (2 * b - 2 * j - 1)))
        else:
            out.append(Fraction(2 * Pe[j] + int(Fn[j]) - 2 * Pe[a], den * (2 * j + 1 - 2 * a)))
    return StepFunction(w, np.array(out, dtype=object))


def hl_maximal_point(f: StepFunction, x) -> Fraction | float:
    """``Mf(x)`` at an arbitrary point ``x`` (n = 1), by direct enumeration.

    Same closure-of-sup semantics as :func:`hl_maximal_1d`: endpoints range
    over the cell boundaries in the support hull together with ``x``.  This
    is quadratic in the hull size and meant for spot values, not profiles.
    """
    w = f.window
    if w.n != 1:
        raise NotImplementedError("exact Hardy–Littlewood maximal function is only available for n = 1")
    x = Fraction(x) if f.exact else float(x)
    v = list(f.values) if f.exact else [float(u) for u in f.values]
    nz = [i for i, u in enumerate(v) if u != 0]
    if not nz:
        return Fraction(0) if f.exact else 0.0
    lo, h = w.lo[0], w.h
    if not f.exact:
        lo, h = float(lo), float(h)
    L, R = nz[0], nz[-1] + 1
    edges = [lo + h * i for i in range(L, R + 1)]
    prefix = [0]
    for i in range(L, R):
        prefix.append(prefix[-1] + v[i] * h)

    def P(y):
        # integral of f over (-inf, y]
        if y <= edges[0]:
            return 0
        if y >= edges[-1]:
            return prefix[-1]
        i = int((y - edges[0]) // h)
        return prefix[i] + v[L + i] * (y - edges[i])

    left = [a for a in edges if a < x] + [x]
    right = [x] + [b for b in edges if b > x]
    best = 0
    for a in left:
        Pa = P(a)
        for b in right:
            if b > a:
                best = max(best, (P(b) - Pa) / (b - a))
    cell = w.cell_of((x,))
    if cell is not None:
        best = max(best, v[cell[0]])
    return best


# ---------------------------------------------------------------------------
# averaging


def _cell_slices(window: Window, box) -> tuple[slice, ...]:
    """Index slices of the cells covered by ``box`` ∩ window; box must be aligned."""
    out = []
    N = window.cells_per_axis
    for a, (lo, hi) in enumerate(box):
        qa = (lo - window.lo[a]) / window.h
        qb = (hi - window.lo[a]) / window.h
        ia = max(0, min(N, math.floor(qa)))
        ib = max(0, min(N, math.ceil(qb)))
        if ia < ib and ((0 < qa < N and qa.denominator != 1) or (0 < qb < N and qb.denominator != 1)):
            raise AlignmentError(f"cube edge at {lo} or {hi} is not a cell boundary; refine the window")
        out.append(slice(ia, ib))
    return tuple(out)


def averaging(f: StepFunction, Q: CubeFamily, s: float = 1) -> StepFunction:
    """``T_{s,Q} f = sum_Q chi_Q M_{s,Q} f``; exact for ``s == 1`` and exact ``f``.

    Every cube must meet the window in a union of cells.  ``|Q|`` is the
    full geometric measure even where ``Q`` leaves the window.
    """
    if not isinstance(Q, CubeFamily):
        Q = CubeFamily(tuple(Q))
    if s < 1:
        raise ValueError("s must be >= 1")
    w = f.window
    exact = f.exact and s == 1
    if exact:
        out = np.empty(w.shape, dtype=object)
        out.fill(Fraction(0))
        src = f.values
    else:
        out = np.zeros(w.shape)
        src = f.to_float() ** s
    cell = w.cell_measure if exact else float(w.cell_measure)
    for cube in Q:
        sl = _cell_slices(w, cube_bounds(cube))
        if any(x.start >= x.stop for x in sl):
            continue
        block = src[sl]
        total = (sum(block.flat, Fraction(0)) if exact else float(block.sum())) * cell
        size = cube.measure if exact else float(cube.measure)
        m = total / size if exact else (total / size) ** (1.0 / s)
        out[sl] = m
    return StepFunction(w, out)


# ---------------------------------------------------------------------------
# Calderón–Zygmund


def _exceeds(num: np.ndarray, lam, denom, exact: bool) -> np.ndarray:
    if exact:
        lam = Fraction(lam)
        lhs = num * lam.denominator
        rhs = lam.numerator * denom
        return np.asarray(lhs > rhs, dtype=bool)
    return num > float(lam) * denom


def cz_decompose(f: StepFunction, lam, t: int, G: int | None = None) -> CZResult:
    """Maximal cubes of grid ``t`` (generation ``<= G``) with mean above ``lam``.

    The scan runs top-down from the top generation, selecting a cube and
    not descending below it as soon as its mean exceeds ``lam``.  A selected
    top-generation cube is replaced by its coarsest ancestor still above
    ``lam``; ancestors there meet the window in the same set, so their mean
    is the top mean divided by ``2^n`` per generation.
    """
    return cz_from_table(cone_table(f, t, G), lam)


def cz_from_table(table: ConeTable, lam) -> CZResult:
    """Calderón–Zygmund selection reusing a precomputed cone table."""
    if lam <= 0:
        raise ValueError("threshold lambda must be positive")
    f = table.f
    t = table.t
    if f.exact and not isinstance(lam, float):
        lam = Fraction(lam)
    n = f.window.n
    cubes, means = [], []
    active = np.ones(table.levels[0].shape, dtype=bool)
    for g in range(table.top, table.G + 1):
        lev = table.levels[g - table.top]
        if g > table.top:
            pidx = table.parent_index(g)
            active = (active & ~chosen)[np.ix_(*pidx)]
        chosen = active & _exceeds(lev, lam, table.denom, f.exact)
        for idx in zip(*np.nonzero(chosen)):
            addr = table.address(g, idx)
            mu = table.mean_of(g, idx)
            if g == table.top:
                while mu / 2**n > lam:
                    mu = mu / 2**n
                    addr = parent(addr)
            cubes.append(addr)
            means.append(mu)
    fam = CubeFamily(tuple(cubes))
    order = {c: i for i, c in enumerate(cubes)}
    means = tuple(means[order[c]] for c in fam.cubes)
    mask = family_union_mask(f.window, fam)
    return CZResult(t, lam, fam, Region.from_mask(f.window, mask), means)


def family_union_mask(window: Window, fam: CubeFamily) -> np.ndarray:
    """Cells whose midpoint lies in the union of the family."""
    mask = np.zeros(window.shape, dtype=bool)
    h = window.h
    for box in fam.boxes():
        sl = []
        for a, (lo, hi) in enumerate(box):
            # midpoints lo_w + h (i + 1/2) in [lo, hi)
            qa = (lo - window.lo[a]) / h - Fraction(1, 2)
            qb = (hi - window.lo[a]) / h - Fraction(1, 2)
            ia = max(0, math.ceil(qa))
            ib = min(window.cells_per_axis, math.ceil(qb))
            sl.append(slice(ia, max(ia, ib)))
        mask[tuple(sl)] = True
    return mask


def check_cz(f: StepFunction, res: CZResult, G: int | None = None) -> list[str]:
    """Independent re-verification of a decomposition; returns violations.

    * (i) pairwise disjointness (exact box arithmetic),
    * (ii) ``lam < M_Q f <= 2^n lam`` with means recomputed from scratch,
    * (iii) every strict ancestor down to the top generation has mean
      ``<= lam`` and is not covered by the selected cubes,
    * the midpoint mask equals ``{M^{D^t} f > lam}``.
    """
    problems = []
    w = f.window
    n = w.n
    lam = res.lam
    cubes = list(res.cubes.cubes)
    if len(cubes) > 1 and _first_overlap(cubes) is not None:
        problems.append("(i) selected cubes overlap")
    if any(c.t != res.t for c in cubes):
        problems.append("selected cube from a foreign grid")
    integ = f.integrator
    vals = integ.box_integrals([cube_bounds(c) for c in cubes])
    for c, v in zip(cubes, vals):
        mu = v / (c.measure if f.exact else float(c.measure))
        if not (lam < mu <= 2**n * lam):
            problems.append(f"(ii) mean {mu} of {c} outside ({lam}, {2**n * lam}]")
    top = top_generation(w, G)
    anc = sorted({a for c in cubes for a in _ancestors(c, top)})
    if anc:
        avals = integ.box_integrals([cube_bounds(a) for a in anc])
        sel_boxes = [cube_bounds(c) for c in cubes]
        lo, hi = _integer_boxes(sel_boxes + [cube_bounds(a) for a in anc])
        k = len(cubes)
        # measures as integers in units of the finest selected cube
        kmax = max(c.k for c in cubes)
        weight = np.array([2 ** (n * (kmax - c.k)) for c in cubes], dtype=object)
        for j, (a, v) in enumerate(zip(anc, avals)):
            mu = v / (a.measure if f.exact else float(a.measure))
            if mu > lam:
                problems.append(f"(iii) ancestor {a} has mean {mu} > {lam}")
            inside = np.ones(k, dtype=bool)
            for ax in range(n):
                inside &= (lo[:k, ax] >= lo[k + j, ax]) & (hi[:k, ax] <= hi[k + j, ax])
            covered = weight[inside].sum() if inside.any() else 0
            if covered >= 2 ** (n * (kmax - a.k)):
                problems.append(f"(iii) ancestor {a} is covered by selected cubes")
    M = dyadic_maximal_grid(f, res.t, G)
    level = _exceeds(M.values if f.exact else M.to_float(), lam, 1, f.exact) if f.exact else M.to_float() > lam
    if not np.array_equal(level, res.mask.mask()):
        problems.append("superlevel set differs from the union of selected cubes")
    return problems


def _ancestors(c: CubeAddress, top: int):
    cur = c
    while cur.k > top:
        cur = parent(cur)
        yield cur
