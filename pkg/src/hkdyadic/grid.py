"""Adjacent one-third-shifted dyadic grids on R^n.

A cube of grid ``t`` at generation ``k`` with lattice vector ``m`` is the
half-open box ``2^-k ([0,1)^n + m + (-1)^k t)`` where every coordinate of the
shift ``t`` lies in {0, 1/3, 2/3}.  All geometry here is exact: corners are
:class:`fractions.Fraction` values with denominators dividing ``3 * 2^k``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

__all__ = [
    "GridSystem",
    "CubeAddress",
    "Ball",
    "cube_bounds",
    "children",
    "parent",
    "locate",
    "covering_cube",
    "box_contains",
    "boxes_disjoint",
]

THIRDS = (Fraction(0), Fraction(1, 3), Fraction(2, 3))


def _pow2(k: int) -> Fraction:
    return Fraction(2) ** k


def _floor(q: Fraction) -> int:
    return q.numerator // q.denominator


@functools.lru_cache(maxsize=None)
def _thirds(n: int, t: int) -> tuple[int, ...]:
    return GridSystem(n).shift_thirds(t)


@dataclass(frozen=True)
class GridSystem:
    """The 3^n adjacent grids in dimension ``n`` (1 or 2)."""

    n: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.n}")

    @property
    def shifts(self) -> tuple[tuple[Fraction, ...], ...]:
        # index t enumerates {0,1/3,2/3}^n lexicographically, so t=0 is the
        # standard grid and for n=1 the shift of index i is i/3
        return tuple(itertools.product(THIRDS, repeat=self.n))

    @property
    def num_grids(self) -> int:
        return 3 ** self.n

    @property
    def children_ratio(self) -> Fraction:
        return Fraction(1, 2 ** self.n)

    @property
    def inner_radius_factor(self) -> Fraction:
        return Fraction(1, 2)

    @property
    def outer_radius_factor(self) -> float:
        # sqrt(n)/2, only ever needed in floating point
        return math.sqrt(self.n) / 2

    def shift(self, t: int) -> tuple[Fraction, ...]:
        return self.shifts[t]

    def shift_thirds(self, t: int) -> tuple[int, ...]:
        """Shift of grid ``t`` as integers in {0,1,2} (i.e. ``3 t``)."""
        return tuple(int(3 * s) for s in self.shifts[t])


@dataclass(frozen=True, order=True)
class CubeAddress:
    """A dyadic cube ``(t, k, m)``; ``n`` is ``len(m)``."""

    t: int
    k: int
    m: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if not 0 <= self.t < 3 ** len(self.m):
            raise ValueError(f"shift index {self.t} out of range for n={len(self.m)}")

    @property
    def n(self) -> int:
        return len(self.m)

    @property
    def side(self) -> Fraction:
        return _pow2(-self.k)

    @property
    def measure(self) -> Fraction:
        return self.side ** self.n

    def to_json(self) -> dict:
        return {"t": self.t, "k": self.k, "m": list(self.m)}

    @classmethod
    def from_json(cls, obj: dict) -> "CubeAddress":
        return cls(int(obj["t"]), int(obj["k"]), tuple(int(v) for v in obj["m"]))


@dataclass(frozen=True)
class Ball:
    center: tuple[Fraction, ...]
    radius: Fraction

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(Fraction(c) for c in self.center))
        object.__setattr__(self, "radius", Fraction(self.radius))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    @property
    def n(self) -> int:
        return len(self.center)

    def volume(self) -> float:
        n = self.n
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * float(self.radius) ** n


def cube_bounds(addr: CubeAddress) -> tuple[tuple[Fraction, Fraction], ...]:
    """Per-axis half-open intervals ``[lo, hi)`` of the realized cube."""
    # corners are (3 m + (-1)^k T) / (3 2^k), built from integers in one step
    k = addr.k
    sign = 1 if k % 2 == 0 else -1
    num_scale, den = (1, 3 << k) if k >= 0 else (1 << -k, 3)
    out = []
    for mi, ti in zip(addr.m, _thirds(addr.n, addr.t)):
        a = (3 * mi + sign * ti) * num_scale
        out.append((Fraction(a, den), Fraction(a + 3 * num_scale, den)))
    return tuple(out)


def children(addr: CubeAddress) -> list[CubeAddress]:
    """The 2^n children at generation ``k+1``, lexicographic in ``s``."""
    sign = 1 if addr.k % 2 == 0 else -1
    T = GridSystem(addr.n).shift_thirds(addr.t)
    base = [2 * mi + sign * ti for mi, ti in zip(addr.m, T)]
    return [
        CubeAddress(addr.t, addr.k + 1, tuple(b + si for b, si in zip(base, s)))
        for s in itertools.product((0, 1), repeat=addr.n)
    ]


def parent(addr: CubeAddress) -> CubeAddress:
    # inverse of m' = 2m + (-1)^(k-1) T + s with s in {0,1}
    sign = 1 if (addr.k - 1) % 2 == 0 else -1
    T = GridSystem(addr.n).shift_thirds(addr.t)
    m = tuple((mi - sign * ti) // 2 for mi, ti in zip(addr.m, T))
    return CubeAddress(addr.t, addr.k - 1, m)


def locate(x: Sequence, t: int, k: int) -> CubeAddress:
    """The unique cube of grid ``t``, generation ``k``, containing point ``x``."""
    x = tuple(Fraction(v) for v in x)
    sign = 1 if k % 2 == 0 else -1
    # m = floor((3 2^k x - (-1)^k T) / 3) evaluated on numerator and denominator
    up, down = (1 << k, 1) if k >= 0 else (1, 1 << -k)
    m = tuple(
        (3 * xi.numerator * up - sign * ti * xi.denominator * down) // (3 * xi.denominator * down)
        for xi, ti in zip(x, _thirds(len(x), t))
    )
    return CubeAddress(t, k, m)


def box_contains(outer, inner) -> bool:
    """Half-open box inclusion, boxes given as per-axis ``(lo, hi)``."""
    return all(olo <= ilo and ihi <= ohi for (olo, ohi), (ilo, ihi) in zip(outer, inner))


def boxes_disjoint(a, b) -> bool:
    return any(ahi <= blo or bhi <= alo for (alo, ahi), (blo, bhi) in zip(a, b))


def point_in_box(x, box) -> bool:
    return all(lo <= xi < hi for xi, (lo, hi) in zip(x, box))


def ancestors(addr: CubeAddress, down_to: int) -> Iterator[CubeAddress]:
    """Strict ancestors of ``addr`` from generation ``k-1`` down to ``down_to``."""
    cur = addr
    while cur.k > down_to:
        cur = parent(cur)
        yield cur


def covering_cube(b: Ball) -> CubeAddress:
    """Smallest cube of the shifted system containing the open ball ``b``.

    Scans generations with sidelength in ``[2r, 12r]`` from finest to
    coarsest; at each generation and shift the candidate is unique (the cube
    holding the ball's lower corner), so ties only occur across shifts and are
    broken by the lowest shift index.
    """
    n = b.n
    r = b.radius
    lo = tuple(c - r for c in b.center)
    hi = tuple(c + r for c in b.center)
    # finest k with 2^-k >= 2r
    k = _floor(-_log2_ceil_arg(2 * r))
    while _pow2(-k) < 2 * r:
        k -= 1
    while _pow2(-(k + 1)) >= 2 * r:
        k += 1
    grids = GridSystem(n)
    while _pow2(-k) <= 12 * r:
        for t in range(grids.num_grids):
            cand = locate(lo, t, k)
            bounds = cube_bounds(cand)
            # the open ball fits iff each projection (c-r, c+r) fits in [lo, hi)
            if all(blo <= l and h <= bhi for (blo, bhi), l, h in zip(bounds, lo, hi)):
                return cand
        k -= 1
    raise AssertionError("no covering cube found; one-third trick violated")


def _log2_ceil_arg(q: Fraction) -> Fraction:
    # rough integer estimate of log2(q); corrected by the callers' loops
    return Fraction(q.numerator.bit_length() - q.denominator.bit_length())
