"""Cost points, realizable/optimistic fronts, schedule dominance and filtering.

All dominance is strict (smaller in every coordinate) with an absolute
tolerance of ``DOM_TOL``.  Multi-distribution filtering works in a product
space: a policy's cost at ``|D|`` distributions becomes one point with
``2|D|`` coordinates ``(E_d0, C_d0, E_d1, C_d1, ...)``.
"""

from __future__ import annotations

import itertools
from functools import cached_property
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .schedule import Schedule
from .solver import SolvedSchedule

DOM_TOL = 1e-9
CORNER_RTOL = 1e-6


@dataclass(frozen=True)
class CostPoint:
    exec: float
    checkin: float

    def __post_init__(self):
        if not (math.isfinite(self.exec) and math.isfinite(self.checkin)):
            raise InputError(f"cost point must be finite, got ({self.exec}, {self.checkin})")

    def as_tuple(self) -> tuple[float, float]:
        return (self.exec, self.checkin)


def dominates(a: CostPoint, b: CostPoint, tol: float = DOM_TOL) -> bool:
    return a.exec < b.exec - tol and a.checkin < b.checkin - tol


def evaluate_at(values: np.ndarray, distribution: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    distribution = np.asarray(distribution, dtype=float)
    if values.shape != distribution.shape:
        raise InputError(f"value vector {values.shape} and distribution {distribution.shape} differ")
    return float(np.dot(distribution, values))


def check_distribution(d, n_states: int) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.shape != (n_states,):
        raise InputError(f"distribution has shape {d.shape}, expected ({n_states},)")
    if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
        raise InputError("distribution must be non-negative and sum to 1")
    return d


def nondominated_mask(points: np.ndarray, tol: float = DOM_TOL) -> np.ndarray:
    """Mask of rows not strictly dominated by any other row; exact duplicates keep the first."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    if n <= 32:
        rows = [tuple(r) for r in pts.tolist()]
        for i, p in enumerate(rows):
            keep[i] = p not in rows[:i] and not any(
                all(qc < pc - tol for qc, pc in zip(q, p)) for q in rows)
        return keep
    if n <= 1024:
        dom = np.all(pts[None, :, :] < pts[:, None, :] - tol, axis=2)
        same = np.all(pts[None, :, :] == pts[:, None, :], axis=2)
        earlier_same = np.tril(same, k=-1)
        return ~dom.any(axis=1) & ~earlier_same.any(axis=1)
    # a dominator is lexicographically smaller, so sweeping in lexicographic
    # order means only already-kept rows can dominate the current one; the
    # sort is stable, so among exact duplicates the first insertion wins
    order = np.lexsort(pts.T[::-1])
    front = np.empty_like(pts)
    m = 0
    for i in order:
        p = pts[i]
        if m:
            f = front[:m]
            if np.any(np.all(f < p - tol, axis=1)) or np.any(np.all(f == p, axis=1)):
                continue
        keep[i] = True
        front[m] = p
        m += 1
    return keep


def realizable_front(points: Sequence[CostPoint]) -> list[CostPoint]:
    """Non-dominated subset, sorted by exec then checkin."""
    if not points:
        raise InputError("realizable_front needs at least one point")
    arr = np.array([p.as_tuple() for p in points])
    keep = np.flatnonzero(nondominated_mask(arr))
    return sorted((points[i] for i in keep), key=CostPoint.as_tuple)


def _support_line(alpha: float, p: CostPoint) -> tuple[float, float]:
    """Boundary line of the alpha half-plane as C = a + s*E."""
    return ((alpha * p.exec + (1 - alpha) * p.checkin) / (1 - alpha), -alpha / (1 - alpha))


def optimistic_front(corner_exec: CostPoint, corner_ck: CostPoint,
                     alpha_supports: Sequence[tuple[float, CostPoint]] = ()) -> list[CostPoint]:
    """Vertices of the lower-left boundary of the optimistic-feasible region.

    The region is ``E >= corner_exec.exec``, ``C >= corner_ck.checkin`` and
    ``a*E + (1-a)*C >= a*p.exec + (1-a)*p.checkin`` for each support.  Its
    boundary is the convex piecewise-linear ``f(E) = max(C0, lines)``; the
    vertices are its breakpoints plus every support point lying on it.
    """
    e0, c0 = corner_exec.exec, corner_ck.checkin
    scale = max(1.0, abs(corner_exec.exec), abs(corner_ck.exec))
    if corner_exec.exec > corner_ck.exec + CORNER_RTOL * scale:
        raise InputError("exec corner has larger execution cost than the check-in corner")
    cscale = max(1.0, abs(corner_exec.checkin), abs(corner_ck.checkin))
    if corner_ck.checkin > corner_exec.checkin + CORNER_RTOL * cscale:
        raise InputError("check-in corner has larger check-in cost than the exec corner")
    lines = [(c0, 0.0)]
    for alpha, p in alpha_supports:
        if not 0.0 < alpha < 1.0:
            raise InputError(f"alpha must lie in (0, 1), got {alpha}")
        lines.append(_support_line(alpha, p))

    def f(e: float) -> float:
        return max(a + s * e for a, s in lines)

    vertices = [(e0, f(e0))]
    e = e0
    # active line at e: highest value, flattest slope on ties (it stays on top)
    active = max(lines, key=lambda l: (l[0] + l[1] * e, l[1]))
    while active[1] < 0.0:
        best = None
        for a, s in lines:
            if s <= active[1]:
                continue
            x = (active[0] - a) / (s - active[1])
            if x > e + DOM_TOL and (best is None or x < best[0] or (x == best[0] and s > best[1][1])):
                best = (x, (a, s))
        if best is None:  # pragma: no cover - the floor line always intersects
            break
        e, active = best
        vertices.append((e, f(e)))
    for alpha, p in alpha_supports:
        if p.exec >= e0 - DOM_TOL and abs(f(p.exec) - p.checkin) <= DOM_TOL * max(1.0, abs(p.checkin)):
            vertices.append((p.exec, f(p.exec)))
    vertices.sort()
    out: list[tuple[float, float]] = []
    for v in vertices:
        if out and abs(v[0] - out[-1][0]) <= DOM_TOL and abs(v[1] - out[-1][1]) <= DOM_TOL:
            continue
        out.append(v)
    return [CostPoint(*v) for v in out]


def optimistic_feasible(E: np.ndarray, C: np.ndarray, corner_exec: CostPoint, corner_ck: CostPoint,
                        alpha_supports: Sequence[tuple[float, CostPoint]] = ()) -> np.ndarray:
    """Vectorized membership test for the optimistic-feasible region."""
    E = np.asarray(E, dtype=float)
    C = np.asarray(C, dtype=float)
    ok = (E >= corner_exec.exec) & (C >= corner_ck.checkin)
    for alpha, p in alpha_supports:
        ok &= alpha * E + (1 - alpha) * C >= alpha * p.exec + (1 - alpha) * p.checkin
    return ok


@dataclass(frozen=True, eq=False)
class DistFront:
    """One schedule's fronts at one evaluation distribution."""

    points: tuple[tuple[str, CostPoint], ...]
    realizable: tuple[tuple[str, CostPoint], ...]
    optimistic: tuple[CostPoint, ...]
    corner_exec: CostPoint
    corner_ck: CostPoint
    supports: tuple[tuple[float, CostPoint], ...]


@dataclass(frozen=True, eq=False)
class ScheduleFront:
    schedule: Schedule
    fronts: tuple[DistFront, ...]

    @property
    def key(self) -> str:
        return str(self.schedule)

    def at(self, i: int = 0) -> DistFront:
        return self.fronts[i]

    @cached_property
    def product_points(self) -> np.ndarray:
        """Every known policy as one point in the 2|D| product space."""
        labels = [lab for lab, _ in self.fronts[0].points]
        rows = []
        for j, _ in enumerate(labels):
            rows.append([c for fr in self.fronts for c in fr.points[j][1].as_tuple()])
        return np.array(rows, dtype=float)

    @cached_property
    def product_vertices(self) -> np.ndarray:
        combos = itertools.product(*(fr.optimistic for fr in self.fronts))
        return np.array([[c for v in combo for c in v.as_tuple()] for combo in combos], dtype=float)


def build_front(solved: SolvedSchedule, distributions: Sequence[np.ndarray],
                alphas: Iterable[float] | None = None) -> ScheduleFront:
    """Evaluate every known policy of ``solved`` at each distribution and build both fronts.

    ``alphas`` restricts which alpha policies act as supports and points
    (``None`` uses all of them).
    """
    if not distributions:
        raise InputError("need at least one evaluation distribution")
    keep_alpha = None if alphas is None else {float(a) for a in alphas}
    recs = [r for r in solved.policies.values()
            if r.kind != "alpha" or keep_alpha is None or r.alpha in keep_alpha]
    D = np.array([np.asarray(d, dtype=float) for d in distributions])
    E = np.array([r.values.v_exec for r in recs]) @ D.T
    C = np.array([r.values.v_checkin for r in recs]) @ D.T
    labels = [r.label for r in recs]
    fronts = []
    for j in range(len(D)):
        pts = tuple((lab, CostPoint(float(e), float(c))) for lab, e, c in zip(labels, E[:, j], C[:, j]))
        by_label = dict(pts)
        ce, cc = by_label["exec-opt"], by_label["checkin-opt"]
        supports = tuple((r.alpha, by_label[r.label]) for r in recs if r.kind == "alpha")
        mask = nondominated_mask(np.column_stack([E[:, j], C[:, j]]))
        real = tuple(sorted((pts[i] for i in np.flatnonzero(mask)), key=lambda lp: lp[1].as_tuple()))
        fronts.append(DistFront(pts, real, tuple(optimistic_front(ce, cc, supports)), ce, cc, supports))
    return ScheduleFront(solved.schedule, tuple(fronts))


def schedule_dominates(a: ScheduleFront, b: ScheduleFront, dist_index: int = 0) -> bool:
    """True iff every optimistic vertex of ``b`` is strictly dominated by a realizable point of ``a``."""
    real = [p for _, p in a.at(dist_index).realizable]
    return all(any(dominates(r, v) for r in real) for v in b.at(dist_index).optimistic)


def _strictly_dominated(vertices: np.ndarray, front: np.ndarray, tol: float = DOM_TOL) -> np.ndarray:
    if len(front) == 0:
        return np.zeros(len(vertices), dtype=bool)
    return np.any(np.all(front[None, :, :] < vertices[:, None, :] - tol, axis=2), axis=1)


def escape_distance(v: np.ndarray, front: np.ndarray, ranges: np.ndarray,
                    bound: float | None = None, tol: float = DOM_TOL) -> float:
    """Normalized Euclidean distance from ``v`` to the boundary of the region
    strictly dominated by ``front``: the smallest ``||delta||`` with
    ``delta >= 0`` such that ``v - delta`` is no longer strictly dominated.

    Each dominator ``q`` must be "escaped" on some axis ``i`` by lowering
    ``v_i`` to ``q_i``; the cost of that axis is the largest normalized gap
    assigned to it.  Solved exactly by branch and bound over assignments.
    If ``bound`` is given the search stops as soon as a solution within
    ``bound`` is found (only "<= bound" is then meaningful).
    """
    v = np.asarray(v, dtype=float)
    front = np.asarray(front, dtype=float).reshape(-1, len(v))
    ranges = np.asarray(ranges, dtype=float)
    doms = front[np.all(front < v - tol, axis=1)]
    if len(doms) == 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        gaps = np.where(ranges > 0, (v - doms) / np.where(ranges > 0, ranges, 1.0), 0.0)
    if np.any(np.all(gaps == 0.0, axis=1)):
        return 0.0
    # a dominator whose gaps are all <= another's is escaped whenever the other is
    order = np.argsort(-gaps.max(axis=1), kind="stable")
    gaps = gaps[order]
    essential = []
    for g in gaps:
        if not any(np.all(g <= h) for h in essential):
            essential.append(g)
    G = np.array(essential)
    n, dim = G.shape
    best_t = np.zeros(dim)
    best_t[int(np.argmin(G.max(axis=0)))] = G.max(axis=0).min()
    best = float(np.sum(best_t ** 2))
    stop = None if bound is None else bound * bound

    def covered(t):
        return np.any(G <= t + 0.0, axis=1)

    def search(t: np.ndarray, cost: float) -> bool:
        nonlocal best, best_t
        unc = np.flatnonzero(~covered(t))
        if len(unc) == 0:
            if cost < best:
                best, best_t = cost, t.copy()
            return stop is not None and best <= stop
        # branch on the uncovered dominator with the most expensive cheapest escape
        inc = np.maximum(G[unc] ** 2 - t ** 2, 0.0)
        j = unc[int(np.argmax(inc.min(axis=1)))]
        options = sorted(range(dim), key=lambda i: max(G[j, i] ** 2 - t[i] ** 2, 0.0))
        for i in options:
            new_cost = cost - t[i] ** 2 + G[j, i] ** 2
            if new_cost >= best:
                continue
            old = t[i]
            t[i] = G[j, i]
            done = search(t, new_cost)
            t[i] = old
            if done:
                return True
        return False

    if stop is None or best > stop:
        search(np.zeros(dim), 0.0)
    return math.sqrt(best)


def front_distance(vertices: np.ndarray, front: np.ndarray, ranges: np.ndarray,
                   bound: float | None = None) -> float:
    """Minimum escape distance over a set of optimistic vertices."""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    best = math.inf
    for v in vertices:
        d = escape_distance(v, front, ranges, bound=bound)
        best = min(best, d)
        if best == 0.0 or (bound is not None and best <= bound):
            break
    return best


@dataclass(frozen=True)
class FilterConfig:
    distributions: tuple[np.ndarray, ...]
    margin: float = 0.0
    alphas: tuple[float, ...] = ()
    enabled: bool = True

    def __post_init__(self):
        if self.margin < 0 or not math.isfinite(self.margin):
            raise InputError("margin must be a finite value >= 0")
        if not self.distributions:
            raise InputError("filtering needs at least one distribution")
        for d in self.distributions:
            if np.any(np.asarray(d) < 0) or abs(float(np.sum(d)) - 1.0) > 1e-9:
                raise InputError("filter distributions must be non-negative and sum to 1")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise InputError(f"alpha must lie in (0, 1), got {a}")


@dataclass(frozen=True)
class FilterResult:
    kept: tuple[str, ...]
    dropped: tuple[str, ...]
    kept_by_margin: tuple[str, ...]
    n_front_points: int

    @property
    def fraction_dropped(self) -> float:
        total = len(self.kept) + len(self.dropped)
        return len(self.dropped) / total if total else 0.0


def pooled_front(fronts: Sequence[ScheduleFront]) -> np.ndarray:
    pts = np.vstack([f.product_points for f in fronts])
    return pts[nondominated_mask(pts)]


def filter_fronts(fronts: Sequence[ScheduleFront], margin: float = 0.0) -> FilterResult:
    """Keep schedules whose optimistic front is not dominated by the pooled
    realizable front, or lies within ``margin`` (normalized) of it."""
    if not fronts:
        raise InputError("filter needs at least one candidate")
    if margin < 0:
        raise InputError("margin must be >= 0")
    fronts = sorted(fronts, key=lambda f: f.key)
    pr = pooled_front(fronts)
    verts = [f.product_vertices for f in fronts]
    cloud = np.vstack([pr] + verts)
    ranges = cloud.max(axis=0) - cloud.min(axis=0)
    kept, dropped, by_margin = [], [], []
    for f, vs in zip(fronts, verts):
        dominated = _strictly_dominated(vs, pr)
        if not dominated.all():
            kept.append(f.key)
        elif margin > 0 and front_distance(vs, pr, ranges, bound=margin) <= margin:
            kept.append(f.key)
            by_margin.append(f.key)
        else:
            dropped.append(f.key)
    return FilterResult(tuple(kept), tuple(dropped), tuple(by_margin), len(pr))


def filter_schedules(candidates: Sequence[SolvedSchedule], cfg: FilterConfig) -> FilterResult:
    if not candidates:
        raise InputError("filter needs at least one candidate")
    fronts = [build_front(c, cfg.distributions, cfg.alphas) for c in candidates]
    return filter_fronts(fronts, cfg.margin)
