"""Variable exponents, power-type Phi-functions and the Luxemburg norm.

Every Phi-function handled here has the form ``phi(x, t) = c(x) * t**q(x)``
with ``c > 0`` and ``q > 1`` constant on each cell.  That covers

* ``Bar``:            ``t**p``
* ``Tilde``:          ``t**p / p``
* ``BarConjugate``:   ``(p-1) * p**(-p') * t**p'``
* ``TildeConjugate``: ``t**p' / p'``

and the conjugate of ``c t**q`` is again of this form (see
:func:`conjugate_coeffs`), so the whole engine only ever deals with
``(c, q)`` arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .stepfn import StepFunction, Window

__all__ = [
    "Exponent",
    "PhiFamily",
    "FAMILY_TAGS",
    "dual_exponent",
    "phi_eval",
    "conjugate_coeffs",
    "semimodular",
    "luxemburg_norm",
    "holder_gap",
    "parse_exponent",
]

FAMILY_TAGS = ("Bar", "Tilde", "BarConjugate", "TildeConjugate")

# bracket for the norm root, as in the design notes: start in [2^-40, 2^40]
# and keep doubling outwards if the root is not yet enclosed
_BRACKET = 40.0
_NORM_RTOL = 1e-14


class Exponent:
    """A variable exponent ``p(.)`` with ``1 < p_- <= p_+ < inf``."""

    def __init__(self, p: StepFunction, descriptor: str | None = None):
        vals = p.to_float()
        if vals.size == 0 or not np.all(vals > 1) or not np.all(np.isfinite(vals)):
            raise ValueError("exponent values must lie in (1, inf)")
        self.p = p
        self.descriptor = descriptor

    @property
    def window(self) -> Window:
        return self.p.window

    @cached_property
    def values(self) -> np.ndarray:
        return self.p.to_float()

    @property
    def p_minus(self):
        return min(self.p.values.flat)

    @property
    def p_plus(self):
        return max(self.p.values.flat)

    def refine(self, sub: int) -> "Exponent":
        return Exponent(self.p.refine(sub), self.descriptor)

    def __repr__(self):
        return f"Exponent({self.descriptor or 'custom'}, p-={float(self.p_minus):g}, p+={float(self.p_plus):g})"

    def to_json(self) -> dict:
        out = self.p.to_json()
        out["role"] = "exponent"
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Exponent":
        if obj.get("role", "exponent") != "exponent":
            raise ValueError("JSON payload is not an exponent")
        return cls(StepFunction.from_json(obj))

    # builtin regimes -------------------------------------------------------

    @classmethod
    def constant(cls, window: Window, q) -> "Exponent":
        q = Fraction(q)
        arr = np.empty(window.shape, dtype=object)
        arr.fill(q)
        return cls(StepFunction(window, arr), f"const:{_fmt(q)}")

    @classmethod
    def jump(cls, window: Window, p1, p2, at=0) -> "Exponent":
        """``p1`` on ``x_0 < at``, ``p2`` on ``x_0 >= at`` (``at`` a cell boundary)."""
        p1, p2, at = Fraction(p1), Fraction(p2), Fraction(at)
        x = _first_axis_lower_edges(window)
        arr = np.where(x < at, p1, p2).astype(object)
        desc = f"jump:{_fmt(p1)},{_fmt(p2)}" + (f"@{_fmt(at)}" if at != 0 else "")
        return cls(StepFunction(window, arr), desc)

    @classmethod
    def smooth(cls, window: Window, a, b) -> "Exponent":
        """``p(x) = a + b / (1 + |x|)`` sampled at cell midpoints."""
        a, b = Fraction(a), Fraction(b)
        if window.n == 1:
            mids = [lo + m for lo in window.lo for m in window.axis_midpoints()]
            vals = np.array([a + b / (1 + abs(x)) for x in mids], dtype=object)
        else:
            grids = np.meshgrid(*[window.midpoint_coords(i) for i in range(window.n)], indexing="ij")
            r = np.sqrt(sum(g * g for g in grids))
            vals = float(a) + float(b) / (1 + r)
        return cls(StepFunction(window, vals.reshape(window.shape)), f"smooth:{_fmt(a)},{_fmt(b)}")


def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _first_axis_lower_edges(window: Window) -> np.ndarray:
    lo = window.lo[0]
    h = window.h
    edges = np.array([lo + h * i for i in range(window.cells_per_axis)], dtype=object)
    shape = [1] * window.n
    shape[0] = -1
    return np.broadcast_to(edges.reshape(shape), window.shape)


_DESCRIPTOR = re.compile(r"^(const|jump|smooth):([^,@]+)(?:,([^,@]+))?(?:@([^,@]+))?$")


def parse_exponent(descriptor: str, window: Window) -> Exponent:
    """Build an exponent from ``const:q``, ``jump:p1,p2[@x]`` or ``smooth:a,b``.

    ``jump`` places the discontinuity at 0 unless ``@x`` moves it.
    """
    m = _DESCRIPTOR.match(descriptor.strip())
    if not m:
        raise ValueError(f"unknown exponent descriptor {descriptor!r}")
    kind, a, b, at = m.groups()
    try:
        a = Fraction(a)
        b = Fraction(b) if b is not None else None
        at = Fraction(at) if at is not None else None
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"bad number in exponent descriptor {descriptor!r}") from exc
    if at is not None and kind != "jump":
        raise ValueError("only jump exponents take a location")
    if kind == "const":
        if b is not None:
            raise ValueError("const takes one value")
        return Exponent.constant(window, a)
    if b is None:
        raise ValueError(f"{kind} takes two values")
    if kind == "jump":
        return Exponent.jump(window, a, b, at if at is not None else 0)
    return Exponent.smooth(window, a, b)


def dual_exponent(p: Exponent) -> Exponent:
    """``p' = p / (p - 1)`` cellwise (exact for rational exponents)."""
    vals = p.p.values
    if p.p.exact:
        dual = np.vectorize(lambda v: v / (v - 1), otypes=[object])(vals)
    else:
        dual = vals / (vals - 1)
    desc = f"dual({p.descriptor})" if p.descriptor else None
    return Exponent(StepFunction(p.window, dual), desc)


def conjugate_coeffs(c: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the conjugate of ``c t**q``.

    ``sup_t (t u - c t**q)`` is attained at ``u = c q t**(q-1)``, giving
    ``((q-1)/q) (c q)**(-1/(q-1)) u**(q/(q-1))``.
    """
    c = np.asarray(c, dtype=float)
    q = np.asarray(q, dtype=float)
    cstar = (q - 1) / q * (c * q) ** (-1.0 / (q - 1))
    return cstar, q / (q - 1)


@dataclass(frozen=True)
class PhiFamily:
    tag: str
    exponent: Exponent

    def __post_init__(self):
        if self.tag not in FAMILY_TAGS:
            raise ValueError(f"unknown Phi-family tag {self.tag!r}")

    @property
    def window(self) -> Window:
        return self.exponent.window

    @classmethod
    def bar(cls, p: Exponent) -> "PhiFamily":
        return cls("Bar", p)

    @classmethod
    def tilde(cls, p: Exponent) -> "PhiFamily":
        return cls("Tilde", p)

    @classmethod
    def by_name(cls, name: str, p: Exponent) -> "PhiFamily":
        return cls({"bar": "Bar", "tilde": "Tilde"}[name.lower()], p)

    def conjugate(self) -> "PhiFamily":
        swap = {
            "Bar": "BarConjugate",
            "BarConjugate": "Bar",
            "Tilde": "TildeConjugate",
            "TildeConjugate": "Tilde",
        }
        return PhiFamily(swap[self.tag], self.exponent)

    def coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        """Cellwise ``(c, q)`` with ``phi(x, t) = c t**q``."""
        p = self.exponent.values
        if self.tag == "Bar":
            return np.ones_like(p), p
        if self.tag == "Tilde":
            return 1.0 / p, p
        if self.tag == "BarConjugate":
            return conjugate_coeffs(np.ones_like(p), p)
        pd = p / (p - 1)
        return 1.0 / pd, pd

    def refine(self, sub: int) -> "PhiFamily":
        return PhiFamily(self.tag, self.exponent.refine(sub))

    def delta2_constant(self) -> float:
        _, q = self.coeffs()
        return 2.0 ** float(q.max())


def phi_eval(phi: PhiFamily, x, t) -> float:
    """``phi(x, t)`` at cell index ``x`` (an int for n=1 or an index tuple)."""
    if t < 0:
        raise ValueError("phi is only defined for t >= 0")
    c, q = phi.coeffs()
    idx = (x,) if isinstance(x, (int, np.integer)) else tuple(x)
    t = float(t)
    return float(c[idx] * t ** q[idx]) if t > 0 else 0.0


def _check_windows(f: StepFunction, phi: PhiFamily):
    if f.window != phi.window:
        raise ValueError(f"window mismatch: function on {f.window}, exponent on {phi.window}")


def semimodular(f: StepFunction, phi: PhiFamily) -> float:
    """``rho_phi(f) = sum |cell| phi(x_cell, f(cell))``."""
    _check_windows(f, phi)
    c, q = phi.coeffs()
    v = f.to_float()
    mask = v > 0
    return float(np.sum(c[mask] * v[mask] ** q[mask])) * float(f.window.cell_measure)


def _log_rho(logv: np.ndarray, logc: np.ndarray, q: np.ndarray, logcell: float, loglam: float) -> float:
    # log of rho(f / lam), via log-sum-exp so extreme lam never overflows
    e = logc + q * (logv - loglam)
    top = e.max()
    return float(top + np.log(np.exp(e - top).sum()) + logcell)


def luxemburg_norm(f: StepFunction, phi: PhiFamily) -> float:
    """``inf {lam > 0 : rho_phi(f / lam) <= 1}``.

    ``log rho(f / lam)`` is continuous and strictly decreasing in
    ``log lam`` for ``f != 0``, so the norm is its unique root.  The root is
    bracketed by doubling outwards from ``[2^-40, 2^40]`` and then polished
    with Brent's method in ``log lam``.
    """
    _check_windows(f, phi)
    v = f.to_float()
    mask = v > 0
    if not mask.any():
        return 0.0
    c, q = phi.coeffs()
    logv, logc, qm = np.log(v[mask]), np.log(c[mask]), q[mask]
    logcell = math.log(float(f.window.cell_measure))

    def g(loglam):
        return _log_rho(logv, logc, qm, logcell, loglam)

    lo, hi = -_BRACKET * math.log(2), _BRACKET * math.log(2)
    while g(lo) < 0:
        lo *= 2
    while g(hi) > 0:
        hi *= 2
    root = brentq(g, lo, hi, xtol=1e-15, rtol=_NORM_RTOL, maxiter=500)
    return math.exp(root)


def holder_gap(f: StepFunction, g: StepFunction, phi: PhiFamily) -> float:
    """``2 ||f||_phi ||g||_phi* - <f, g>``; nonnegative by Hölder's inequality."""
    _check_windows(f, phi)
    _check_windows(g, phi)
    pairing = float(np.sum(f.to_float() * g.to_float())) * float(f.window.cell_measure)
    return 2 * luxemburg_norm(f, phi) * luxemburg_norm(g, phi.conjugate()) - pairing
