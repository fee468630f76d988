"""Nonnegative step functions on a finite dyadic window.

A :class:`Window` is the box ``2^-k0 ([0,2)^n + m0)`` cut into cells of side
``2^-K / sub``.  With the default ``sub=1`` the cells are the generation-``K``
cubes of the standard grid; ``sub=6`` makes every shifted cube of generation
``<= K+1`` a union of cells, which is what the exact operator code relies on.

Integrals of a step function over any box with rational corners are computed
exactly.  Positions are measured in integer "units" (a common refinement of
the cells and the box corners) and the integral is read off an n-dimensional
cumulative-sum table, so no cell is ever visited in a Python loop.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import CubeAddress, cube_bounds

__all__ = [
    "AlignmentError",
    "Window",
    "StepFunction",
    "Region",
    "integrate",
    "mean",
    "pointwise_map",
    "BoxIntegrator",
]

INT64_SAFE = 2**62


class AlignmentError(ValueError):
    """A region or cube does not fit the window's cell structure."""


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


@dataclass(frozen=True)
class Window:
    n: int
    k0: int
    m0: tuple[int, ...]
    K: int
    sub: int = 1

    def __post_init__(self):
        object.__setattr__(self, "m0", tuple(int(v) for v in self.m0))
        if len(self.m0) != self.n:
            raise ValueError("m0 must have n entries")
        if self.K < self.k0:
            raise ValueError("finest generation K must be >= k0")
        if self.sub < 1:
            raise ValueError("sub must be a positive integer")

    @classmethod
    def default(cls, K: int = 8, n: int = 1) -> "Window":
        """The box [-8, 8)^n at resolution 2^-K."""
        return cls(n, -3, (-1,) * n, K)

    @property
    def cells_per_axis(self) -> int:
        return 2 ** (self.K - self.k0 + 1) * self.sub

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_axis,) * self.n

    @property
    def size(self) -> int:
        return self.cells_per_axis ** self.n

    @property
    def h(self) -> Fraction:
        return Fraction(1, 2**self.K * self.sub) if self.K >= 0 else Fraction(2 ** (-self.K), self.sub)

    @property
    def cell_measure(self) -> Fraction:
        return self.h ** self.n

    @property
    def lo(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(2) ** (-self.k0) * m for m in self.m0)

    @property
    def side(self) -> Fraction:
        return Fraction(2) ** (1 - self.k0)

    @property
    def bounds(self) -> tuple[tuple[Fraction, Fraction], ...]:
        return tuple((lo, lo + self.side) for lo in self.lo)

    def refine(self, sub: int) -> "Window":
        """Same box with each cell split ``sub`` times more per axis."""
        return Window(self.n, self.k0, self.m0, self.K, self.sub * sub)

    def axis_midpoints(self) -> list[Fraction]:
        # identical along every axis up to the offset lo[i]
        h = self.h
        return [h * i + h / 2 for i in range(self.cells_per_axis)]

    def cell_box(self, index: Sequence[int]):
        h = self.h
        return tuple((lo + h * i, lo + h * (i + 1)) for lo, i in zip(self.lo, index))

    def cell_of(self, x: Sequence) -> tuple[int, ...] | None:
        idx = []
        for xi, lo in zip(x, self.lo):
            q = (Fraction(xi) - lo) / self.h
            i = q.numerator // q.denominator
            if not 0 <= i < self.cells_per_axis:
                return None
            idx.append(i)
        return tuple(idx)

    def midpoint_coords(self, axis: int) -> np.ndarray:
        """Float midpoints of the cells along ``axis``."""
        lo = float(self.lo[axis])
        h = float(self.h)
        return lo + h * (np.arange(self.cells_per_axis) + 0.5)

    def to_json(self) -> dict:
        out = {"k0": self.k0, "m0": list(self.m0), "K": self.K}
        if self.sub != 1:
            out["sub"] = self.sub
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Window":
        m0 = [int(v) for v in obj["m0"]]
        return cls(len(m0), int(obj["k0"]), tuple(m0), int(obj["K"]), int(obj.get("sub", 1)))


def _as_value_array(values, shape) -> tuple[np.ndarray, bool]:
    arr = np.asarray(values, dtype=object if _looks_exact(values) else float)
    arr = arr.reshape(shape)
    if arr.dtype == object:
        if arr.size and not all(type(v) is Fraction for v in arr.flat):
            arr = np.vectorize(Fraction, otypes=[object])(arr)
        return arr, True
    return arr.astype(float), False


def _looks_exact(values) -> bool:
    if isinstance(values, np.ndarray):
        return values.dtype == object
    flat = list(np.asarray(values, dtype=object).ravel())
    return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in flat)


class StepFunction:
    """Nonnegative function constant on the cells of a window.

    ``values`` is an n-dimensional array in row-major cell order.  An object
    array of :class:`Fraction` marks the function as exact; a float array
    marks it as floating (``exact`` is False).
    """

    __slots__ = ("window", "values", "exact", "__dict__")

    def __init__(self, window: Window, values):
        arr, exact = _as_value_array(values, window.shape)
        if exact:
            if any(v < 0 for v in arr.flat):
                raise ValueError("step function values must be nonnegative")
        elif np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("step function values must be finite and nonnegative")
        arr.setflags(write=False)
        self.window = window
        self.values = arr
        self.exact = exact

    @classmethod
    def _trusted(cls, window: Window, arr: np.ndarray, exact: bool) -> "StepFunction":
        """Wrap values already known to be valid (Fraction or float, nonnegative)."""
        obj = cls.__new__(cls)
        arr = arr.reshape(window.shape)
        arr.setflags(write=False)
        obj.window, obj.values, obj.exact = window, arr, exact
        return obj

    def __repr__(self):
        kind = "exact" if self.exact else "float"
        return f"StepFunction({self.window}, {kind})"

    @classmethod
    def zeros(cls, window: Window) -> "StepFunction":
        arr = np.empty(window.shape, dtype=object)
        arr.fill(Fraction(0))
        return cls(window, arr)

    @classmethod
    def indicator(cls, window: Window, box) -> "StepFunction":
        """Indicator of a cell-aligned box given as per-axis ``(lo, hi)``."""
        box = tuple((Fraction(a), Fraction(b)) for a, b in box)
        masks = []
        for axis, (a, b) in enumerate(box):
            qa = (a - window.lo[axis]) / window.h
            qb = (b - window.lo[axis]) / window.h
            if qa.denominator != 1 or qb.denominator != 1:
                raise AlignmentError(f"box edge {a} or {b} is not a cell boundary")
            idx = np.arange(window.cells_per_axis)
            masks.append((idx >= int(qa)) & (idx < int(qb)))
        mask = reduce(np.multiply.outer, masks) if window.n > 1 else masks[0]
        arr = np.where(mask, Fraction(1), Fraction(0)).astype(object)
        return cls(window, arr)

    @classmethod
    def from_cube(cls, window: Window, addr: CubeAddress) -> "StepFunction":
        return cls.indicator(window, cube_bounds(addr))

    def to_float(self) -> np.ndarray:
        if self.exact:
            return self.values.astype(float)
        return self.values

    def as_float(self) -> "StepFunction":
        return StepFunction(self.window, self.to_float())

    def is_zero(self) -> bool:
        return not any(self.values.flat)

    def refine(self, sub: int) -> "StepFunction":
        """The same function on ``window.refine(sub)``."""
        arr = self.values
        for axis in range(self.window.n):
            arr = np.repeat(arr, sub, axis=axis)
        return StepFunction(self.window.refine(sub), arr)

    def scale(self, c) -> "StepFunction":
        c = Fraction(c) if self.exact and isinstance(c, (int, Fraction)) else c
        return StepFunction(self.window, self.values * c)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self.window == other.window and bool(np.all(self.values == other.values))

    def __hash__(self):
        return hash((self.window, self.values.tobytes() if not self.exact else tuple(self.values.flat)))

    @cached_property
    def integrator(self) -> "BoxIntegrator":
        return BoxIntegrator(self)

    def total(self):
        """Integral over the whole space."""
        s = sum(self.values.flat, Fraction(0)) if self.exact else float(self.values.sum())
        return s * (self.window.cell_measure if self.exact else float(self.window.cell_measure))

    def support_bounds(self):
        """Bounding box of the support as per-axis ``(lo, hi)``, or None."""
        nz = np.nonzero(self.values != 0) if self.exact else np.nonzero(self.values)
        if len(nz[0]) == 0:
            return None
        h = self.window.h
        return tuple(
            (lo + h * int(ix.min()), lo + h * (int(ix.max()) + 1))
            for lo, ix in zip(self.window.lo, nz)
        )

    def to_json(self) -> dict:
        vals = [
            f"{v.numerator}/{v.denominator}" if self.exact else float(v)
            for v in self.values.ravel()
        ]
        return {"window": self.window.to_json(), "values": vals}

    @classmethod
    def from_json(cls, obj: dict) -> "StepFunction":
        window = Window.from_json(obj["window"])
        raw = obj["values"]
        if all(isinstance(v, str) or isinstance(v, int) for v in raw):
            vals = np.array([Fraction(v) for v in raw], dtype=object)
        else:
            vals = np.array([float(Fraction(v)) if isinstance(v, str) else float(v) for v in raw])
        return cls(window, vals.reshape(window.shape))


def pointwise_map(f: StepFunction, g: Callable) -> StepFunction:
    """Apply ``g`` cell by cell; ``g`` must map the value range into [0, inf)."""
    out = np.vectorize(g, otypes=[object if f.exact else float])(f.values)
    if f.exact and not all(isinstance(v, (int, Fraction)) for v in out.flat):
        out = out.astype(float)
    return StepFunction(f.window, out)


def corner_sums(F: np.ndarray, positions: Sequence[np.ndarray], U: int) -> np.ndarray:
    """Separable cumulative integral of cell data ``F`` at integer positions.

    Along each axis a position ``p`` (in units of ``1/U`` cell) splits into a
    whole-cell part ``p // U`` and a remainder; the partial integral is
    ``U * prefix[i] + r * F[i]``, applied axis by axis.
    """
    A = F
    for axis in range(F.ndim):
        N = F.shape[axis]
        p = np.asarray(positions[axis], dtype=np.int64)
        inside = (p >= 0) & (p < N * U)
        i = np.clip(p // U, 0, N)
        r = np.where(inside, p % U, 0)
        pad = [(0, 0)] * A.ndim
        pad[axis] = (1, 0)
        P = np.pad(np.cumsum(A, axis=axis), pad)
        pad[axis] = (0, 1)
        Ap = np.pad(A, pad)
        shape = [1] * A.ndim
        shape[axis] = -1
        rr = r.reshape(shape)
        if A.dtype == object:
            rr = rr.astype(object)
        A = U * np.take(P, i, axis=axis) + rr * np.take(Ap, i, axis=axis)
    return A


class BoxIntegrator:
    """Exact integrals of one step function over rational boxes.

    Values are brought to integer numerators over a common denominator and
    positions to integer units of ``h / U``; the integral over the box from
    the window corner to a point is a separable cumulative sum, and box
    integrals are inclusion-exclusion differences of it.
    """

    def __init__(self, f: StepFunction):
        self.f = f
        self.window = f.window
        if f.exact:
            den = reduce(_lcm, (v.denominator for v in f.values.flat), 1)
            nums = [v.numerator * (den // v.denominator) for v in f.values.flat]
            self.max_num = max(nums, default=0)
            self._F_obj = np.array(nums, dtype=object).reshape(self.window.shape)
            self.den = den
        else:
            self.max_num = float(f.values.max()) if f.values.size else 0.0
            self._F_obj = f.values
            self.den = 1
        self._F64 = None

    def numerators(self, bound_factor: int = 1) -> np.ndarray:
        """Integer cell numerators, as int64 when ``max * bound_factor`` fits."""
        if not self.f.exact:
            return self._F_obj
        if self.max_num * bound_factor < INT64_SAFE:
            if self._F64 is None:
                self._F64 = self._F_obj.astype(np.int64)
            return self._F64
        return self._F_obj

    def corner_sums(self, positions: Sequence[np.ndarray], U: int, extra: int = 1) -> np.ndarray:
        """``S[p1,...,pn] = sum F * overlap_units`` over ``[0,p1) x ... x [0,pn)``.

        ``positions[j]`` are integer positions along axis ``j`` in units of
        ``h / U`` measured from the window's lower corner; they may lie
        outside the window.  ``extra`` is a further factor the caller will
        multiply the sums by, taken into account when choosing int64.
        """
        N = self.window.cells_per_axis
        F = self.numerators((N * U) ** self.window.n * extra)
        hi = N * U
        pos = [np.clip(np.asarray(p, dtype=object), -1, hi + 1).astype(np.int64) for p in positions]
        return corner_sums(F, pos, U)

    def box_integrals(self, boxes: Sequence) -> list:
        """Exact integrals over many boxes ``((lo, hi), ...)`` at once."""
        if not boxes:
            return []
        if not self.f.exact:
            # local weighted sums: prefix-sum differences would cancel badly
            # when the box is small against the window's largest values
            return [self._float_box_integral(box) for box in boxes]
        n = self.window.n
        h = self.window.h
        wlo = self.window.lo
        rel = [[((Fraction(a) - wlo[j]) / h, (Fraction(b) - wlo[j]) / h) for j, (a, b) in enumerate(box)] for box in boxes]
        U = reduce(_lcm, (q.denominator for box in rel for ab in box for q in ab), 1)
        axes = []
        for j in range(n):
            coords = sorted({int(q * U) for box in rel for q in box[j]})
            axes.append({c: i for i, c in enumerate(coords)})
        S = self.corner_sums([np.array(list(ax), dtype=object) for ax in axes], U)
        scale = (h / U) ** n
        out = []
        for box in rel:
            idx = [(axes[j][int(box[j][0] * U)], axes[j][int(box[j][1] * U)]) for j in range(n)]
            total = 0
            for corner in itertools.product((0, 1), repeat=n):
                sign = (-1) ** (n - sum(corner))
                total += sign * S[tuple(idx[j][c] for j, c in enumerate(corner))]
            if self.f.exact:
                out.append(Fraction(int(total), self.den) * scale)
            else:
                out.append(float(total) * float(scale))
        return out

    def _float_box_integral(self, box) -> float:
        h, wlo, N = self.window.h, self.window.lo, self.window.cells_per_axis
        slices, weights = [], []
        for j, (a, b) in enumerate(box):
            lo = max((Fraction(a) - wlo[j]) / h, Fraction(0))
            hi = min((Fraction(b) - wlo[j]) / h, Fraction(N))
            if hi <= lo:
                return 0.0
            i0, i1 = math.floor(lo), math.ceil(hi)
            w = [float(min(hi, i + 1) - max(lo, i)) for i in range(i0, i1)]
            slices.append(slice(i0, i1))
            weights.append(np.array(w))
        block = self.f.values[tuple(slices)]
        for j, w in enumerate(weights):
            block = np.tensordot(w, block, axes=([0], [0])) if j == 0 else np.tensordot(block, w, axes=([0], [0]))
        return float(block) * float(self.window.cell_measure)

    def box_integral(self, box) -> Fraction | float:
        """Exact integral over a box ``((lo, hi), ...)`` (clipped to the window)."""
        return self.box_integrals([box])[0]


@dataclass(frozen=True)
class Region:
    """A finite disjoint union of cubes, or an explicit set of window cells.

    Exactly one of ``cubes`` / ``cells`` is used.  ``cells`` is a boolean mask
    over the window's cells (stored as a tuple of flat indices for hashing).
    """

    cubes: tuple[CubeAddress, ...] = ()
    window: Window | None = None
    cells: tuple[int, ...] = field(default=())

    @classmethod
    def of(cls, *cubes: CubeAddress) -> "Region":
        return cls(cubes=tuple(cubes))

    @classmethod
    def from_mask(cls, window: Window, mask: np.ndarray) -> "Region":
        flat = np.flatnonzero(np.asarray(mask).reshape(-1))
        return cls(window=window, cells=tuple(int(i) for i in flat))

    @property
    def is_cells(self) -> bool:
        return self.window is not None

    def mask(self) -> np.ndarray:
        if not self.is_cells:
            raise TypeError("cube regions have no cell mask")
        m = np.zeros(self.window.size, dtype=bool)
        m[list(self.cells)] = True
        return m.reshape(self.window.shape)

    def measure(self) -> Fraction:
        if self.is_cells:
            return self.window.cell_measure * len(self.cells)
        return sum((c.measure for c in self.cubes), Fraction(0))


def integrate(f: StepFunction, r: Region):
    """Integral of ``f`` over ``r``; exact when ``f`` is exact."""
    if r.is_cells:
        if r.window != f.window:
            raise AlignmentError("cell region belongs to a different window")
        vals = f.values.reshape(-1)[list(r.cells)]
        if f.exact:
            return sum(vals, Fraction(0)) * f.window.cell_measure
        return float(np.sum(vals)) * float(f.window.cell_measure)
    total = Fraction(0) if f.exact else 0.0
    for c in r.cubes:
        total += f.integrator.box_integral(cube_bounds(c))
    return total


def mean(f: StepFunction, E: Region, s: float = 1):
    """The s-mean ``((1/|E|) int_E f^s)^(1/s)``.

    ``|E|`` is the full geometric measure even where ``E`` leaves the window
    (``f`` vanishes there).  ``s == 1`` stays exact for exact ``f``; other
    ``s`` are evaluated in floating point.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    size = E.measure()
    if size <= 0:
        raise ValueError("mean over a region of zero measure")
    if s == 1:
        val = integrate(f, E)
        return val / size if f.exact else val / float(size)
    fs = StepFunction(f.window, f.to_float() ** s)
    return (integrate(fs, E) / float(size)) ** (1.0 / s)
