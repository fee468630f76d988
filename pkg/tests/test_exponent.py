import json
import math
import random
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkdyadic.exponent import (
    Exponent,
    conjugate_coeffs,
    PhiFamily,
    dual_exponent,
    holder_gap,
    luxemburg_norm,
    parse_exponent,
    phi_eval,
    semimodular,
)
from hkdyadic.stepfn import StepFunction, Window

W = Window.default(4)
GOLDEN_MIXED = ((math.sqrt(5) - 1) / 2) ** -0.5  # lambda^-2 + lambda^-4 = 1


def chi(a, b, w=W):
    return StepFunction.indicator(w, ((F(a), F(b)),))


def random_f(rng, w=W, density=0.4):
    v = np.where(np.array([rng.random() for _ in range(w.size)]) < density, [rng.uniform(0, 5) for _ in range(w.size)], 0.0)
    return StepFunction(w, v)


def random_exponent(rng, w=W):
    return Exponent(StepFunction(w, np.array([rng.uniform(1.1, 6) for _ in range(w.size)])))


def bisect_norm(f, phi):
    """Independent oracle: plain bisection on the modular, in the value domain."""
    if f.is_zero():
        return 0.0
    lo, hi = 1e-12, 1e12
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if semimodular(f.scale(1 / mid) if not f.exact else f.as_float().scale(1 / mid), phi) > 1:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


class TestExponent:
    def test_validation(self):
        with pytest.raises(ValueError):
            Exponent.constant(W, 1)
        with pytest.raises(ValueError):
            Exponent(StepFunction(W, np.full(W.size, np.inf)))

    def test_bounds(self):
        p = Exponent.jump(W, 3, 2)
        assert (p.p_minus, p.p_plus) == (2, 3)
        assert p.values[W.cell_of((F(-1, 100),))[0]] == 3
        assert p.values[W.cell_of((F(0),))[0]] == 2

    def test_jump_location(self):
        p = parse_exponent("jump:2,4@1", W)
        assert p.values[W.cell_of((F(1, 2),))[0]] == 2
        assert p.values[W.cell_of((F(1),))[0]] == 4
        assert p.descriptor == "jump:2,4@1"

    def test_smooth(self):
        p = parse_exponent("smooth:2,1", W)
        mid = W.cell_of((F(0),))[0]
        assert p.p.values[mid] == 2 + 1 / (1 + F(1, 32))
        assert float(p.p_plus) < 3 and float(p.p_minus) > 2

    @pytest.mark.parametrize("bad", ["const:1", "cubic:2", "jump:2", "smooth:2,1@3", "const:2,3", "const:x"])
    def test_parse_errors(self, bad):
        with pytest.raises(ValueError):
            parse_exponent(bad, W)

    def test_json(self):
        p = parse_exponent("jump:3,2", W)
        obj = json.loads(json.dumps(p.to_json()))
        assert obj["role"] == "exponent"
        assert Exponent.from_json(obj).p == p.p
        with pytest.raises(ValueError):
            Exponent.from_json({**obj, "role": "function"})


class TestDual:
    def test_self_dual(self):
        assert set(dual_exponent(Exponent.constant(W, 2)).p.values.flat) == {2}

    def test_three(self):
        assert set(dual_exponent(Exponent.constant(W, 3)).p.values.flat) == {F(3, 2)}

    def test_mixed_bounds(self):
        p = Exponent.jump(W, 2, 4)
        d = dual_exponent(p)
        assert d.p_plus == p.p_minus / (p.p_minus - 1) == 2
        assert d.p_minus == p.p_plus / (p.p_plus - 1) == F(4, 3)


class TestPhi:
    def test_examples(self):
        i = 0
        assert phi_eval(PhiFamily.bar(Exponent.constant(W, 2)), i, 3) == 9
        assert phi_eval(PhiFamily.tilde(Exponent.constant(W, 4)), i, 2) == 4
        assert phi_eval(PhiFamily("BarConjugate", Exponent.constant(W, 2)), i, 1) == pytest.approx(0.25, abs=1e-15)
        assert phi_eval(PhiFamily.bar(Exponent.constant(W, 2)), i, 0) == 0

    def test_negative(self):
        with pytest.raises(ValueError):
            phi_eval(PhiFamily.bar(Exponent.constant(W, 2)), 0, -1)

    def test_tilde_conjugate_is_tilde_of_dual(self):
        p = random_exponent(random.Random(1))
        a = PhiFamily("TildeConjugate", p)
        b = PhiFamily.tilde(dual_exponent(p))
        for x in range(0, W.size, 17):
            for t in (0.1, 1, 3.7):
                assert phi_eval(a, x, t) == pytest.approx(phi_eval(b, x, t), rel=1e-12)

    def test_bar_conjugate_formula(self):
        p = random_exponent(random.Random(2))
        phi = PhiFamily("BarConjugate", p)
        for x in range(0, W.size, 13):
            q = p.values[x]
            qd = q / (q - 1)
            for t in (0.3, 1.0, 2.5):
                assert phi_eval(phi, x, t) == pytest.approx((q - 1) * q ** (-qd) * t**qd, rel=1e-12)

    def test_conjugate_is_legendre_transform(self):
        # numerical sup_t (t u - phi(t)) on a fine grid is an oracle for phi*
        p = random_exponent(random.Random(3))
        ts = np.linspace(0, 40, 400001)
        for tag in ("Bar", "Tilde"):
            phi = PhiFamily(tag, p)
            c, q = phi.coeffs()
            cs, qs = phi.conjugate().coeffs()
            for x in (0, 50, 200):
                for u in (0.5, 1.0, 3.0):
                    sup = float(np.max(ts * u - c[x] * ts ** q[x]))
                    assert cs[x] * u ** qs[x] == pytest.approx(sup, rel=1e-6, abs=1e-9)

    def test_involution(self):
        p = random_exponent(random.Random(4))
        for tag in ("Bar", "Tilde"):
            phi = PhiFamily(tag, p)
            assert phi.conjugate().conjugate() == phi
            # conjugating the conjugate coefficients numerically returns phi
            c, q = phi.coeffs()
            cs, qs = phi.conjugate().coeffs()
            c2, q2 = conjugate_coeffs(cs, qs)
            assert np.allclose(c2, c, rtol=1e-10) and np.allclose(q2, q, rtol=1e-10)

    def test_convex_nondecreasing(self):
        phi = PhiFamily.tilde(random_exponent(random.Random(5)))
        ts = np.linspace(0, 5, 51)
        for x in (0, 100):
            vals = np.array([phi_eval(phi, x, t) for t in ts])
            assert np.all(np.diff(vals) >= 0)
            assert np.all(np.diff(vals, 2) >= -1e-12)

    def test_delta2(self):
        assert PhiFamily.bar(Exponent.jump(W, 3, 2)).delta2_constant() == 8


class TestSemimodular:
    def test_examples(self):
        bar2 = PhiFamily.bar(Exponent.constant(W, 2))
        assert semimodular(chi(0, 1), bar2) == 1
        assert semimodular(chi(0, 1).scale(2), PhiFamily.tilde(Exponent.constant(W, 2))) == 2

    def test_window_mismatch(self):
        with pytest.raises(ValueError):
            semimodular(chi(0, 1, Window.default(3)), PhiFamily.bar(Exponent.constant(W, 2)))

    def test_convexity_in_scaling(self):
        rng = random.Random(6)
        for _ in range(20):
            f, phi = random_f(rng), PhiFamily.bar(random_exponent(rng))
            assert semimodular(f.scale(0.5), phi) <= 0.5 * semimodular(f, phi) + 1e-12


class TestNorm:
    def test_examples(self):
        assert luxemburg_norm(chi(0, 1), PhiFamily.bar(Exponent.constant(W, 2))) == pytest.approx(1, rel=1e-14)
        assert luxemburg_norm(chi(0, 1), PhiFamily.tilde(Exponent.constant(W, 2))) == pytest.approx(2**-0.5, rel=1e-13)
        p = Exponent.jump(W, 2, 4, at=1)
        assert luxemburg_norm(chi(0, 2), PhiFamily.bar(p)) == pytest.approx(GOLDEN_MIXED, rel=1e-13)
        assert GOLDEN_MIXED == pytest.approx(1.27201965, abs=1e-8)

    def test_zero(self):
        assert luxemburg_norm(StepFunction.zeros(W), PhiFamily.bar(Exponent.constant(W, 2))) == 0

    @pytest.mark.parametrize("q", [1.5, 2, 3, 7])
    def test_constant_exponent_is_classical(self, q):
        rng = random.Random(int(q * 10))
        phi = PhiFamily.bar(Exponent(StepFunction(W, np.full(W.size, float(q)))))
        for _ in range(10):
            f = random_f(rng)
            classical = (np.sum(f.values**q) * float(W.cell_measure)) ** (1 / q)
            assert luxemburg_norm(f, phi) == pytest.approx(classical, rel=1e-10)

    def test_matches_bisection_oracle(self):
        rng = random.Random(7)
        for _ in range(10):
            f, p = random_f(rng), random_exponent(rng)
            for tag in ("Bar", "Tilde", "BarConjugate"):
                phi = PhiFamily(tag, p)
                assert luxemburg_norm(f, phi) == pytest.approx(bisect_norm(f, phi), rel=1e-9)

    def test_extreme_scales(self):
        p = Exponent.constant(W, 2)
        f = chi(0, 1)
        for c in (1e-30, 1e30):
            assert luxemburg_norm(f.as_float().scale(c), PhiFamily.bar(p)) == pytest.approx(c, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_unit_sphere_and_ball(self, seed):
        rng = random.Random(seed)
        f, phi = random_f(rng), PhiFamily(rng.choice(["Bar", "Tilde"]), random_exponent(rng))
        if f.is_zero():
            return
        nrm = luxemburg_norm(f, phi)
        assert semimodular(f.scale(1 / nrm), phi) == pytest.approx(1, abs=1e-8)
        assert (semimodular(f, phi) <= 1) == (nrm <= 1 + 1e-8) or abs(nrm - 1) < 1e-8

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_sandwich_and_lattice(self, seed):
        rng = random.Random(seed)
        f, p = random_f(rng), random_exponent(rng)
        b = luxemburg_norm(f, PhiFamily.bar(p))
        t = luxemburg_norm(f, PhiFamily.tilde(p))
        assert t <= b * (1 + 1e-8) and b <= 2 * t * (1 + 1e-8)
        g = StepFunction(W, f.values * np.array([rng.random() for _ in range(W.size)]))
        assert luxemburg_norm(g, PhiFamily.bar(p)) <= b + 1e-10


class TestHolder:
    def test_examples(self):
        phi = PhiFamily.bar(Exponent.constant(W, 2))
        assert holder_gap(chi(0, 1), chi(0, 1), phi) >= 0
        assert holder_gap(StepFunction.zeros(W), chi(0, 1), phi) == 0

    def test_random_pairs(self):
        rng = random.Random(8)
        for _ in range(50):
            p = random_exponent(rng)
            phi = PhiFamily(rng.choice(["Bar", "Tilde"]), p)
            assert holder_gap(random_f(rng), random_f(rng), phi) >= -1e-8
