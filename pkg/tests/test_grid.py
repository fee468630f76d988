import itertools
import math
import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkdyadic.grid import (
    Ball,
    CubeAddress,
    GridSystem,
    ancestors,
    box_contains,
    boxes_disjoint,
    children,
    covering_cube,
    cube_bounds,
    locate,
    parent,
    point_in_box,
)


def scan_cover(b: Ball):
    """Exhaustive oracle: every shift, every generation with side in [r, 64r]."""
    best = None
    n = b.n
    for k in range(-40, 40):
        side = F(2) ** (-k)
        if not (b.radius <= side <= 64 * b.radius):
            continue
        sign = 1 if k % 2 == 0 else -1
        for t, shift in enumerate(GridSystem(n).shifts):
            ranges = []
            for c, s in zip(b.center, shift):
                base = math.floor((c - b.radius) / side - sign * s)
                ranges.append(range(base - 2, base + 3))
            for m in itertools.product(*ranges):
                box = [(side * (mi + sign * s), side * (mi + sign * s) + side) for mi, s in zip(m, shift)]
                if all(lo <= c - b.radius and c + b.radius <= hi for (lo, hi), c in zip(box, b.center)):
                    key = (side, t, m)
                    if best is None or key < best:
                        best = key
    side, t, m = best
    return CubeAddress(t, -int(math.log2(side)), m)


class TestGridSystem:
    def test_shift_count_and_ratio(self):
        for n in (1, 2):
            g = GridSystem(n)
            assert len(set(g.shifts)) == 3**n == g.num_grids
            assert g.children_ratio == F(1, 2**n)
        assert GridSystem(1).shifts == ((F(0),), (F(1, 3),), (F(2, 3),))

    def test_ball_factors(self):
        assert GridSystem(2).inner_radius_factor == F(1, 2)
        assert GridSystem(2).outer_radius_factor == pytest.approx(math.sqrt(2) / 2)

    def test_rejects_other_dimensions(self):
        with pytest.raises(ValueError):
            GridSystem(3)


class TestCubeBounds:
    def test_unit_cube(self):
        assert cube_bounds(CubeAddress(0, 0, (0,))) == ((F(0), F(1)),)

    def test_shifted_generation_one(self):
        assert cube_bounds(CubeAddress(1, 1, (0,))) == ((F(-1, 6), F(1, 3)),)

    def test_shifted_generation_zero(self):
        assert cube_bounds(CubeAddress(1, 0, (0,))) == ((F(1, 3), F(4, 3)),)

    def test_side_and_denominators(self):
        rng = random.Random(3)
        for _ in range(200):
            n = rng.choice((1, 2))
            a = CubeAddress(rng.randrange(3**n), rng.randint(-5, 12), tuple(rng.randint(-50, 50) for _ in range(n)))
            for lo, hi in cube_bounds(a):
                assert hi - lo == F(2) ** (-a.k)
                assert (lo * 3 * F(2) ** a.k).denominator == 1

    def test_json_roundtrip(self):
        a = CubeAddress(4, -2, (3, -7))
        assert CubeAddress.from_json(a.to_json()) == a
        assert a.to_json() == {"t": 4, "k": -2, "m": [3, -7]}

    def test_invalid_shift(self):
        with pytest.raises(ValueError):
            CubeAddress(3, 0, (0,))


class TestChildrenParent:
    def test_unshifted_halving(self):
        kids = children(CubeAddress(0, 0, (0,)))
        assert kids == [CubeAddress(0, 1, (0,)), CubeAddress(0, 1, (1,))]
        assert [cube_bounds(c) for c in kids] == [((F(0), F(1, 2)),), ((F(1, 2), F(1)),)]

    def test_shifted_children(self):
        kids = children(CubeAddress(1, 0, (0,)))
        assert [c.m for c in kids] == [(1,), (2,)]
        assert [cube_bounds(c) for c in kids] == [((F(1, 3), F(5, 6)),), ((F(5, 6), F(4, 3)),)]

    def test_two_dimensional_children(self):
        a = CubeAddress(5, 3, (2, -1))
        kids = children(a)
        assert len(kids) == 4
        assert all(c.measure == a.measure / 4 for c in kids)

    def test_parent_examples(self):
        assert parent(CubeAddress(0, 1, (1,))) == CubeAddress(0, 0, (0,))
        assert parent(CubeAddress(1, 1, (1,))) == CubeAddress(1, 0, (0,))

    @given(
        n=st.sampled_from([1, 2]),
        t=st.integers(0, 8),
        k=st.integers(-8, 12),
        m=st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=2),
    )
    def test_roundtrip_and_union(self, n, t, k, m):
        a = CubeAddress(t % 3**n, k, tuple(m[:n]))
        kids = children(a)
        assert all(parent(c) == a for c in kids)
        box = cube_bounds(a)
        kid_boxes = [cube_bounds(c) for c in kids]
        assert all(box_contains(box, kb) for kb in kid_boxes)
        assert all(boxes_disjoint(x, y) for x, y in itertools.combinations(kid_boxes, 2))
        assert sum(c.measure for c in kids) == a.measure


class TestLocate:
    def test_examples(self):
        assert locate((F(0),), 0, 0).m == (0,)
        a = locate((F(0),), 1, 0)
        assert a.m == (-1,)
        assert cube_bounds(a) == ((F(-2, 3), F(1, 3)),)

    @given(
        num=st.integers(-10**6, 10**6),
        den=st.integers(1, 10**4),
        t=st.integers(0, 2),
        k=st.integers(-6, 12),
    )
    def test_nested_and_contains(self, num, den, t, k):
        x = (F(num, den),)
        a = locate(x, t, k)
        assert point_in_box(x, cube_bounds(a))
        assert parent(locate(x, t, k + 1)) == a


class TestCovering:
    def test_unit_ball(self):
        q = covering_cube(Ball((F(1, 2),), F(1, 2)))
        assert q == CubeAddress(0, 0, (0,))
        assert q.measure / (2 * F(1, 2)) == 1

    def test_offset_ball(self):
        b = Ball((F(1),), F(1, 2))
        q = covering_cube(b)
        # frozen from the exhaustive scan oracle
        assert q == CubeAddress(0, -1, (0,)) == scan_cover(b)
        assert q.side <= 6

    def test_matches_exhaustive_scan(self):
        rng = random.Random(11)
        for _ in range(60):
            n = rng.choice((1, 2))
            c = tuple(F(rng.randint(-500, 500), rng.randint(1, 60)) for _ in range(n))
            r = F(rng.randint(1, 400), rng.randint(1, 200))
            b = Ball(c, r)
            assert covering_cube(b) == scan_cover(b)

    def test_measure_bound_one_dimension(self):
        rng = random.Random(5)
        for _ in range(500):
            b = Ball((F(rng.randint(-10**5, 10**5), rng.randint(1, 999)),), F(rng.randint(1, 10**4), rng.randint(1, 999)))
            q = covering_cube(b)
            (lo, hi), = cube_bounds(q)
            assert lo <= b.center[0] - b.radius and b.center[0] + b.radius <= hi
            assert q.measure <= 6 * 2 * b.radius
            assert q.side <= 12 * b.radius

    def test_ball_radius_positive(self):
        with pytest.raises(ValueError):
            Ball((F(0),), F(0))


class TestStructure:
    def test_partition_of_window(self):
        # the cubes hit by a fine sample of [-8, 8) tile a contiguous interval
        for t in range(3):
            for k in range(-3, 6):
                h = F(2) ** (-k)
                pts = [F(-8) + i * F(1, 64) for i in range(16 * 64)]
                cubes = {locate((x,), t, k) for x in pts}
                boxes = sorted(cube_bounds(c)[0] for c in cubes)
                assert boxes[0][0] <= pts[0] and boxes[-1][1] > pts[-1]
                for (a0, a1), (b0, b1) in zip(boxes, boxes[1:]):
                    assert a1 == b0
                assert all(b - a == h for a, b in boxes)

    def test_nestedness_and_gap(self):
        rng = random.Random(2)
        for _ in range(300):
            n = rng.choice((1, 2))
            t = rng.randrange(3**n)
            x = tuple(F(rng.randint(-800, 800), 97) for _ in range(n))
            y = tuple(F(rng.randint(-800, 800), 97) for _ in range(n))
            k, l = sorted(rng.sample(range(-4, 10), 2), reverse=True)
            a, b = locate(x, t, k), locate(y, t, l)
            ba, bb = cube_bounds(a), cube_bounds(b)
            assert boxes_disjoint(ba, bb) or box_contains(bb, ba)
            if box_contains(bb, ba):
                assert b in set(ancestors(a, l))
                assert a.measure / b.measure <= 1 - F(1, 2**n)

    def test_inner_and_outer_balls(self):
        rng = random.Random(9)
        for _ in range(200):
            n = rng.choice((1, 2))
            a = CubeAddress(rng.randrange(3**n), rng.randint(-3, 8), tuple(rng.randint(-20, 20) for _ in range(n)))
            box = cube_bounds(a)
            center = [(lo + hi) / 2 for lo, hi in box]
            r_in = a.side / 2
            # points of the inner (open) ball lie in the cube
            for _ in range(10):
                d = [F(rng.randint(-999, 999), 1000) * r_in / n for _ in range(n)]
                assert point_in_box([c + di for c, di in zip(center, d)], box)
            # every corner is within sqrt(n)/2 * side of the centre
            for corner in itertools.product(*box):
                dist2 = sum((c - z) ** 2 for c, z in zip(corner, center))
                assert float(dist2) <= (math.sqrt(n) / 2 * float(a.side)) ** 2 * (1 + 1e-12)
