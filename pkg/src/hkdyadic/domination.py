"""Means of Phi-functions over cubes, mirror means and domination probes.

For a cube ``Q`` and a power-type family ``phi(x, t) = c(x) t**q(x)`` the
s-mean is

    (M_{s,Q} phi)(t) = ( sum_i w_i (c_i t**q_i)**s )**(1/s),

where ``w_i = |Q ∩ cell_i| / |Q|`` are exact cell weights.  The mirror mean
is the conjugate of the mean of the conjugate, ``(M_{s,Q} phi*)*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .exponent import Exponent, PhiFamily, conjugate_coeffs, luxemburg_norm
from .grid import CubeAddress, box_contains, cube_bounds
from .operators import CubeFamily
from .stepfn import AlignmentError, StepFunction

__all__ = [
    "CubeMeanFn",
    "cube_weights",
    "phi_mean",
    "mirror_mean",
    "mirror_mean_infconv_oracle",
    "ratio_alpha",
    "norm_unit_identity",
    "standard_means",
    "mirror_means",
    "domination_constant_estimate",
    "strong_domination_probe",
]

CubeData = Callable[[CubeAddress, float], float]


def cube_weights(Q: CubeAddress, window) -> tuple[tuple[slice, ...], np.ndarray]:
    """Exact weights ``|Q ∩ cell| / |Q|`` of the cells a cube meets.

    Returns the index slices of the touched block of cells and an object
    array of :class:`Fraction` weights over that block.  The cube must lie
    inside the window (the exponent is unknown outside).
    """
    box = cube_bounds(Q)
    if not box_contains(window.bounds, box):
        raise AlignmentError(f"cube {Q} is not contained in the window")
    h = window.h
    slices, per_axis = [], []
    for a, (lo, hi) in enumerate(box):
        qa = (lo - window.lo[a]) / h
        qb = (hi - window.lo[a]) / h
        ia, ib = math.floor(qa), math.ceil(qb)
        lengths = []
        for i in range(ia, ib):
            left = max(Fraction(i), qa)
            right = min(Fraction(i + 1), qb)
            lengths.append((right - left) / (qb - qa))
        slices.append(slice(ia, ib))
        per_axis.append(np.array(lengths, dtype=object))
    w = per_axis[0]
    for extra in per_axis[1:]:
        w = np.multiply.outer(w, extra)
    return tuple(slices), w


@dataclass(frozen=True)
class CubeMeanFn:
    """``t -> (M_{s,Q} phi)(t)`` for one cube, family and ``s``."""

    cube: CubeAddress
    family: PhiFamily
    s: float = 1

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be >= 1")

    @cached_property
    def _data(self):
        sl, w = cube_weights(self.cube, self.family.window)
        c, q = self.family.coeffs()
        keep = np.array([x != 0 for x in w.flat])
        wf = np.array([float(x) for x in w.flat])[keep]
        cells = c[sl].reshape(-1)[keep], q[sl].reshape(-1)[keep]
        exact_w = [x for x in w.flat if x != 0]
        return wf, cells[0], cells[1], exact_w, self.family.exponent.p.values[sl].reshape(-1)[keep]

    @property
    def weights(self) -> np.ndarray:
        return self._data[0]

    @property
    def coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        return self._data[1], self._data[2]

    def _exact(self, t):
        # exact only where every term t**q is rational: Bar, s = 1, and
        # either t in {0, 1} or integral exponents
        if self.family.tag != "Bar" or self.s != 1 or not isinstance(t, (int, Fraction)):
            return None
        t = Fraction(t)
        pvals = self._data[4]
        if t not in (0, 1) and not all(isinstance(v, (int, Fraction)) and Fraction(v).denominator == 1 for v in pvals):
            return None
        if t in (0, 1):
            return sum((w * t for w in self._data[3]), Fraction(0))
        return sum((w * t ** int(v) for w, v in zip(self._data[3], pvals)), Fraction(0))

    def __call__(self, t):
        if t < 0:
            raise ValueError("t must be >= 0")
        exact = self._exact(t)
        if exact is not None:
            return exact
        if t == 0:
            return 0.0
        w, c, q = self._data[:3]
        s = self.s
        # log-sum-exp keeps huge or tiny t finite
        e = np.log(w) + s * (np.log(c) + q * math.log(t))
        top = e.max()
        return math.exp((top + math.log(np.exp(e - top).sum())) / s)

    def inverse(self, y: float) -> float:
        """The ``t`` with ``M(t) = y`` (strictly increasing, continuous)."""
        if y <= 0:
            return 0.0
        g = lambda lt: math.log(float(self(math.exp(lt)))) - math.log(y)
        lo, hi = -8.0, 8.0
        while g(lo) > 0:
            lo *= 2
        while g(hi) < 0:
            hi *= 2
        return math.exp(brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500))


def phi_mean(Q: CubeAddress, phi: PhiFamily, s: float, t):
    """``(M_{s,Q} phi)(t)``; exact for Bar at ``s = 1`` and rational ``t`` in {0,1}."""
    return CubeMeanFn(Q, phi, s)(t)


class _ConjugateMean:
    """``Psi(u) = (sum_i w_i (c*_i u**q*_i)**s)**(1/s)`` and its derivative."""

    def __init__(self, mean: CubeMeanFn):
        w = mean.weights
        c, q = mean.coeffs
        cs, qs = conjugate_coeffs(c, q)
        self.logw = np.log(w)
        self.logc = np.log(cs)
        self.q = qs
        self.s = mean.s

    def log_terms(self, logu: float) -> np.ndarray:
        return self.logw + self.s * (self.logc + self.q * logu)

    def value(self, logu: float) -> float:
        e = self.log_terms(logu)
        top = e.max()
        return math.exp((top + math.log(np.exp(e - top).sum())) / self.s)

    def log_derivative(self, logu: float) -> float:
        # Psi' = Psi^(1-s) * sum_i w_i c_i^s q_i u^(s q_i - 1)
        e = self.log_terms(logu)
        top = e.max()
        log_sum = top + math.log(np.exp(e - top).sum())
        log_psi = log_sum / self.s
        d = e + np.log(self.q) - logu
        dtop = d.max()
        log_dsum = dtop + math.log(np.exp(d - dtop).sum())
        return (1 - self.s) * log_psi + log_dsum


def mirror_mean(Q: CubeAddress, phi: PhiFamily, s: float, t: float, rtol: float = 1e-13) -> float:
    """``(M_{s,Q} phi*)*(t) = sup_u (t u - Psi(u))`` with ``Psi = M_{s,Q} phi*``.

    ``Psi`` is smooth and strictly convex with ``Psi'(0+) = 0`` and
    ``Psi'(u) -> inf``, so the supremum sits at the unique root of
    ``Psi'(u) = t``, found by bisection in ``log u``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    psi = _ConjugateMean(CubeMeanFn(Q, phi, s))
    target = math.log(t)
    lo, hi = -1.0, 1.0
    while psi.log_derivative(lo) > target:
        lo *= 2
    while psi.log_derivative(hi) < target:
        hi *= 2
    while hi - lo > rtol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if psi.log_derivative(mid) < target:
            lo = mid
        else:
            hi = mid
    logu = 0.5 * (lo + hi)
    return t * math.exp(logu) - psi.value(logu)


def mirror_mean_infconv_oracle(Q: CubeAddress, phi: PhiFamily, t: float) -> float:
    """``inf { sum w_i phi_i(f_i) : f >= 0, sum w_i f_i = t }`` for cubes of <= 3 cells.

    Solved by nested bounded scalar minimisation over the constraint
    simplex; the partial minimum of a convex function is convex, so each
    level is a unimodal 1-D problem.
    """
    mean = CubeMeanFn(Q, phi, 1)
    w = mean.weights
    c, q = mean.coeffs
    if len(w) > 3:
        raise ValueError("oracle only handles cubes meeting at most 3 cells")
    if t == 0:
        return 0.0

    def phi_i(i, v):
        return c[i] * max(v, 0.0) ** q[i]

    def best(i, budget):
        # minimise over cells i.. with sum_{j >= i} w_j f_j = budget
        if i == len(w) - 1:
            return w[i] * phi_i(i, budget / w[i])
        res = minimize_scalar(
            lambda fi: w[i] * phi_i(i, fi) + best(i + 1, max(budget - w[i] * fi, 0.0)),
            bounds=(0.0, budget / w[i]),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, budget / w[i]), "maxiter": 500},
        )
        return float(res.fun)

    return best(0, float(t))


def ratio_alpha(Q: CubeAddress, p: Exponent, s: float, t: float) -> float:
    """``alpha_{s,Q}(t)``: standard over mirror mean for the Bar family."""
    if t <= 0:
        raise ValueError("t must be > 0")
    phi = PhiFamily.bar(p)
    return float(phi_mean(Q, phi, s, t)) / mirror_mean(Q, phi, s, t)


def norm_unit_identity(Q: CubeAddress, p: Exponent) -> float:
    """``|Q| (M_{1,Q} phi)(1 / ||chi_Q||_phi)`` for the Bar family (should be 1).

    The norm is taken through the step-function norm engine on a window
    refined until ``Q`` is a union of cells, so it is computed independently
    of the cube weights used by the mean.
    """
    window = p.window
    box = cube_bounds(Q)
    if not box_contains(window.bounds, box):
        raise AlignmentError(f"cube {Q} is not contained in the window")
    sub = 1
    for a, (lo, hi) in enumerate(box):
        for x in (lo, hi):
            sub = math.lcm(sub, ((x - window.lo[a]) / window.h).denominator)
    pw = p.refine(sub) if sub > 1 else p
    chi = StepFunction.from_cube(pw.window, Q)
    norm = luxemburg_norm(chi, PhiFamily.bar(pw))
    return float(Q.measure) * float(phi_mean(Q, PhiFamily.bar(p), 1, 1.0 / norm))


# ---------------------------------------------------------------------------
# domination


def standard_means(phi: PhiFamily, s: float = 1) -> CubeData:
    cache: dict = {}

    def data(Q: CubeAddress, t: float) -> float:
        if Q not in cache:
            cache[Q] = CubeMeanFn(Q, phi, s)
        return float(cache[Q](t))

    return data


def mirror_means(phi: PhiFamily, s: float = 1) -> CubeData:
    def data(Q: CubeAddress, t: float) -> float:
        return mirror_mean(Q, phi, s, t)

    return data


def _invert(phi: CubeData, Q: CubeAddress, y: float) -> float:
    if y <= 0:
        return 0.0
    g = lambda lt: math.log(phi(Q, math.exp(lt))) - math.log(y)
    lo, hi = -8.0, 8.0
    while g(lo) > 0:
        lo *= 2
    while g(hi) < 0:
        hi *= 2
    return math.exp(brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500))


def domination_constant_estimate(
    psi: CubeData,
    phi: CubeData,
    families: Sequence[CubeFamily],
    seed: int = 0,
    budget: int = 200,
) -> float:
    """Lower bound on ``sup sum |Q| psi(Q, t_Q)`` subject to ``sum |Q| phi(Q, t_Q) <= 1``.

    The constraint is parametrised by budget shares ``b_Q >= 0`` summing to
    one, with ``t_Q`` the solution of ``|Q| phi(Q, t_Q) = b_Q``, so every
    evaluated point is feasible up to root-finding accuracy.  Starting from
    random shares, pairwise share transfers are accepted when they increase
    the objective (a simple coordinate ascent).  Deterministic given
    ``seed``.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    for fam in families:
        cubes = list(fam)
        if not cubes:
            continue
        sizes = [float(Q.measure) for Q in cubes]

        def objective(shares):
            total = 0.0
            for Q, size, b in zip(cubes, sizes, shares):
                if b > 0:
                    total += size * psi(Q, _invert(phi, Q, b / size))
            return total

        shares = rng.dirichlet(np.ones(len(cubes)))
        val = objective(shares)
        step = 0.5
        iters = max(1, budget // max(1, len(families)))
        for _ in range(iters):
            if len(cubes) == 1:
                break
            i, j = rng.choice(len(cubes), size=2, replace=False)
            move = step * shares[i]
            trial = shares.copy()
            trial[i] -= move
            trial[j] += move
            tv = objective(trial)
            if tv > val:
                shares, val = trial, tv
            else:
                step *= 0.9
        best = max(best, val)
    return best


def strong_domination_probe(
    psi: CubeData, phi: CubeData, family_seq: Mapping[int, CubeFamily]
) -> tuple[float, float]:
    """Both sides ``(sum_k sum_Q |Q| phi(Q, 2^k), sum_k sum_Q |Q| psi(Q, 2^k))``."""
    left = right = 0.0
    for k, fam in sorted(family_seq.items()):
        t = 2.0**k
        for Q in fam:
            size = float(Q.measure)
            left += size * phi(Q, t)
            right += size * psi(Q, t)
    return left, right
