import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psmdp.errors import InputError
from psmdp.pareto import (CostPoint, DistFront, ScheduleFront, dominates, escape_distance,
                          evaluate_at, filter_fronts, nondominated_mask, optimistic_feasible,
                          optimistic_front, realizable_front, schedule_dominates)
from psmdp.schedule import Schedule, parse_schedule

from oracles import naive_nondominated

P = CostPoint
coords = st.floats(-100, 100, allow_nan=False).map(lambda x: round(x, 1))


def _front(text, real, corner_e=None, corner_c=None, supports=()):
    """A single-distribution ScheduleFront from raw realizable points."""
    pts = tuple((f"p{i}", P(*r)) for i, r in enumerate(real))
    ce = P(*(corner_e or min(real)))
    cc = P(*(corner_c or min(real, key=lambda r: (r[1], r[0]))))
    opt = tuple(optimistic_front(ce, cc, supports))
    fr = DistFront(pts, tuple(sorted(pts, key=lambda lp: lp[1].as_tuple())), opt, ce, cc, tuple(supports))
    sched = text if isinstance(text, Schedule) else parse_schedule(text)
    return ScheduleFront(sched, (fr,))


def test_evaluate_at():
    assert evaluate_at([5.0, 7.0], [0.0, 1.0]) == 7.0
    assert evaluate_at([2.0, 4.0], [0.5, 0.5]) == 3.0
    with pytest.raises(InputError):
        evaluate_at([1.0, 2.0], [1.0])


def test_realizable_examples():
    got = realizable_front([P(1, 5), P(2, 2), P(3, 3)])
    assert got == [P(1, 5), P(2, 2)]
    assert realizable_front([P(4, 4)]) == [P(4, 4)]
    mask = nondominated_mask(np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 3.0]]))
    assert mask.tolist() == [True, False, True]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=60))
def test_nondominated_matches_naive(points):
    mask = nondominated_mask(np.array(points, dtype=float), tol=0.0)
    assert np.flatnonzero(mask).tolist() == naive_nondominated(points)


def test_nondominated_large_paths_agree():
    rng = np.random.default_rng(0)
    pts = rng.integers(0, 40, size=(1500, 2)).astype(float)
    big = nondominated_mask(pts)
    mid = np.concatenate([nondominated_mask(pts[:1000]), np.zeros(500, bool)])
    assert np.flatnonzero(big).tolist() == naive_nondominated(pts.tolist())
    assert np.flatnonzero(mid).tolist() == naive_nondominated(pts[:1000].tolist())


@given(st.tuples(coords, coords), st.tuples(coords, coords), st.tuples(coords, coords))
def test_dominance_is_a_strict_partial_order(a, b, c):
    a, b, c = P(*a), P(*b), P(*c)
    assert not dominates(a, a)
    if dominates(a, b):
        assert not dominates(b, a)
        if dominates(b, c):
            assert dominates(a, c)


def test_optimistic_box_without_supports():
    assert optimistic_front(P(10, 5), P(20, 2)) == [P(10, 2)]


def test_redundant_support_keeps_corner():
    # alpha line through the box corner (10, 2) itself
    assert optimistic_front(P(10, 5), P(20, 2), [(0.5, P(10, 2))]) == [P(10, 2)]


def test_optimistic_clipping_example():
    ce, cc, sup = P(10, 5), P(20, 2), [(0.5, P(14, 3))]
    verts = optimistic_front(ce, cc, sup)
    # the support line E + C = 17 cuts the box: f(10) = 7, it meets C = 2 at E = 15,
    # and the support point itself lies on the boundary
    assert verts == [P(10, 7), P(14, 3), P(15, 2)]
    E = np.array([v.exec for v in verts])
    C = np.array([v.checkin for v in verts])
    assert optimistic_feasible(E, C, ce, cc, sup).all()
    rng = np.random.default_rng(0)
    xs = rng.uniform(5, 25, 200_000)
    ys = rng.uniform(0, 10, 200_000)
    ok = optimistic_feasible(xs, ys, ce, cc, sup)
    # any feasible sample lies on or above the polyline
    poly = np.interp(xs, E, C, left=np.inf, right=C[-1])
    assert np.all(ys[ok] >= poly[ok] - 1e-9)
    # points strictly below-left of a vertex are infeasible
    for v in verts:
        assert not optimistic_feasible(np.array([v.exec - 1e-6]), np.array([v.checkin - 1e-6]), ce, cc, sup)[0]


@settings(max_examples=40, deadline=None)
@given(e0=coords, c0=coords, de=st.floats(0.5, 50), dc=st.floats(0.5, 50),
       raw=st.lists(st.tuples(st.floats(0.05, 0.95), st.floats(0, 1)), max_size=4))
def test_optimistic_front_bounds_region(e0, c0, de, dc, raw):
    ce, cc = P(e0, c0 + dc), P(e0 + de, c0)
    # supports sampled on the segment between the two corners, like real alpha points
    sup = [(a, P(e0 + t * de, c0 + dc - t * dc)) for a, t in raw]
    verts = optimistic_front(ce, cc, sup)
    E = np.array([v.exec for v in verts])
    C = np.array([v.checkin for v in verts])
    assert optimistic_feasible(E + 1e-9, C + 1e-9, ce, cc, sup).all()
    assert np.all(np.diff(E) > 0) and np.all(np.diff(C) <= 1e-12)
    rng = np.random.default_rng(1)
    xs = rng.uniform(e0 - 1, e0 + de + 1, 5000)
    ys = rng.uniform(c0 - 1, c0 + dc + 1, 5000)
    ok = optimistic_feasible(xs, ys, ce, cc, sup)
    # no feasible sample is strictly dominated by a vertex
    for e, c in zip(E, C):
        assert not np.any(ok & (xs < e - 1e-7) & (ys < c - 1e-7))


def test_inconsistent_corners_rejected():
    with pytest.raises(InputError):
        optimistic_front(P(30, 5), P(20, 2))


def test_schedule_dominance_examples():
    a = _front("(1)", [(5, 5)])
    assert schedule_dominates(a, _front("(2)", [(6, 6)]))
    assert not schedule_dominates(a, _front("(2)", [(4, 9)]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=6),
       st.lists(st.tuples(coords, coords), min_size=1, max_size=6))
def test_schedule_dominance_matches_naive(ra, rb):
    fa = [p.as_tuple() for p in realizable_front([P(*r) for r in ra])]
    a = _front("(1)", fa)
    fb = realizable_front([P(*r) for r in rb])
    b = _front("(2)", [p.as_tuple() for p in fb])
    want = all(any(r[0] < v.exec - 1e-9 and r[1] < v.checkin - 1e-9 for r in ra)
               for v in b.at(0).optimistic)
    assert schedule_dominates(a, b) == want


def test_escape_distance_examples():
    front = np.array([[1.0, 1.0]])
    ranges = np.array([4.0, 2.0])
    assert escape_distance(np.array([0.5, 3.0]), front, ranges) == 0.0
    r = 0.3
    assert escape_distance(np.array([1 + r * 4.0, 5.0]), front, ranges) == pytest.approx(r)
    assert escape_distance(np.array([1 + r * 4.0, 1 + 2 * r * 2.0]), front, ranges) == pytest.approx(r)


def _brute_escape(v, front, ranges):
    """Minimum over every axis assignment of dominators, by exhaustive search."""
    doms = [q for q in front if np.all(q < v - 1e-9)]
    if not doms:
        return 0.0
    best = math.inf
    for assign in itertools.product(range(len(v)), repeat=len(doms)):
        t = np.zeros(len(v))
        for q, i in zip(doms, assign):
            t[i] = max(t[i], (v[i] - q[i]) / ranges[i])
        best = min(best, float(np.sqrt(np.sum(t**2))))
    return best


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.sampled_from([2, 4]), n=st.integers(1, 6))
def test_escape_distance_matches_brute_force(seed, dim, n):
    rng = np.random.default_rng(seed)
    front = rng.uniform(0, 10, size=(n, dim))
    v = rng.uniform(5, 12, size=dim)
    ranges = rng.uniform(1, 5, size=dim)
    assert escape_distance(v, front, ranges) == pytest.approx(_brute_escape(v, front, ranges), abs=1e-12)
    swapped = escape_distance(v[::-1], front[:, ::-1], ranges[::-1])
    assert swapped == pytest.approx(escape_distance(v, front, ranges), abs=1e-12)


def test_filter_drops_dominated_box():
    good = _front("(1)", [(0, 5), (5, 0)])
    bad = _front("(2)", [(10, 20), (20, 10)])
    res = filter_fronts([good, bad], margin=0.0)
    assert res.kept == ("(1)",)
    assert res.dropped == ("(2)",)
    res = filter_fronts([good, bad], margin=10.0)
    assert res.dropped == ()


def test_filter_margin_monotone():
    rng = np.random.default_rng(3)
    fronts = []
    for i in range(12):
        e = rng.uniform(0, 10, 3)
        c = rng.uniform(0, 10, 3)
        pts = sorted((float(a), float(b)) for a, b in zip(e, c))
        fr = realizable_front([P(*p) for p in pts])
        fronts.append(_front(Schedule((i + 1,), 20), [p.as_tuple() for p in fr],
                             corner_e=(min(e), max(c)), corner_c=(max(e), min(c))))
    prev = None
    for m in (0.0, 0.01, 0.05, 0.1, 0.3, 1.0, 5.0):
        kept = set(filter_fronts(fronts, m).kept)
        if prev is not None:
            assert prev <= kept
        prev = kept
    assert len(prev) == len(fronts)
