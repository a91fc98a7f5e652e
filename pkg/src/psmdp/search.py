"""Staged schedule search: solve base tails, prepend strides, filter, report the front."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, PsmdpError
from .model import CompositeMdp, Mdp, build_composite
from .pareto import (FilterConfig, ScheduleFront, build_front, filter_fronts, nondominated_mask,
                     _strictly_dominated)
from .schedule import Schedule, prepend
from .solver import SolvedSchedule, prepend_schedule, solve_base

log = logging.getLogger(__name__)

WORKERS_ENV = "PSMDP_WORKERS"
MATCH_TOL = 1e-6


def resolve_distribution(spec, n_states: int, initial: np.ndarray | None = None) -> np.ndarray:
    """``"initial"``, ``"uniform"`` or an explicit probability vector."""
    if isinstance(spec, str):
        if spec == "uniform":
            return np.full(n_states, 1.0 / n_states)
        if spec == "initial":
            if initial is None:
                raise InputError("no initial distribution available for 'initial'")
            return np.asarray(initial, dtype=float)
        raise InputError(f"unknown distribution spec {spec!r}")
    d = np.asarray(spec, dtype=float)
    if d.shape != (n_states,):
        raise InputError(f"distribution has {d.size} entries, expected {n_states}")
    if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
        raise InputError("distribution must be non-negative and sum to 1")
    return d


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"{WORKERS_ENV} must be >= 1")
    return n


@dataclass(frozen=True)
class SearchConfig:
    strides: tuple[int, ...]
    max_length: int
    initial: np.ndarray
    alphas: tuple[float, ...] = ()
    filter: FilterConfig | None = None
    eps: float | None = None
    workers: int = 1

    def __post_init__(self):
        strides = tuple(sorted({int(k) for k in self.strides}))
        if not strides:
            raise InputError("need at least one stride")
        if strides[0] < 1:
            raise InputError("strides must be >= 1")
        object.__setattr__(self, "strides", strides)
        if self.max_length < 1:
            raise InputError("max_length must be >= 1")
        alphas = tuple(float(a) for a in self.alphas)
        for a in alphas:
            if not 0.0 < a < 1.0:
                raise InputError(f"alpha must lie in (0, 1), got {a}")
        if len(set(alphas)) != len(alphas):
            raise InputError("duplicate alpha values")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=float))
        if self.workers < 1:
            raise InputError("workers must be >= 1")

    @property
    def filtering(self) -> bool:
        return self.filter is not None and self.filter.enabled

    @property
    def unfiltered_total(self) -> int:
        """Number of distinct canonical schedules with length <= max_length."""
        return len(self.strides) ** self.max_length

    def echo(self) -> dict:
        return {
            "strides": list(self.strides),
            "max_length": self.max_length,
            "alphas": list(self.alphas),
            "filter_enabled": self.filtering,
            "margin": self.filter.margin if self.filter else None,
            "n_filter_distributions": len(self.filter.distributions) if self.filter else 0,
            "margin_metric": "normalized-euclidean-escape",
            "eps": self.eps,
            "workers": self.workers,
        }


@dataclass
class StageStats:
    stage: int
    sequences: int
    extended: int
    duplicates: int
    solved: int
    candidates: int
    kept: int
    dropped: int
    kept_by_margin: int
    wall_s: float


@dataclass(eq=False)
class SearchReport:
    config: SearchConfig
    solved: dict[str, SolvedSchedule]
    survivors: tuple[str, ...]
    fronts: dict[str, ScheduleFront]
    final: tuple[str, ...]
    stages: list[StageStats] = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def visited(self) -> int:
        return len(self.solved)

    @property
    def filtered_fraction(self) -> float:
        """Share of the unfiltered schedule count that was never solved."""
        return 1.0 - self.visited / self.config.unfiltered_total

    @property
    def drop_ratio(self) -> float:
        total = sum(s.dropped + s.kept for s in self.stages)
        return sum(s.dropped for s in self.stages) / total if total else 0.0

    def final_fronts(self) -> list[ScheduleFront]:
        return [self.fronts[k] for k in self.final]


def _composites(mdp: Mdp, strides: Sequence[int]) -> dict[int, CompositeMdp]:
    return {k: build_composite(mdp, k) for k in strides}


def _final_front(fronts: dict[str, ScheduleFront]) -> tuple[str, ...]:
    keys = sorted(fronts)
    pts = np.vstack([fronts[k].product_points for k in keys])
    pr = pts[nondominated_mask(pts)]
    out = [k for k in keys if not _strictly_dominated(fronts[k].product_vertices, pr).all()]
    return tuple(out)


def pareto_front_schedules(mdp: Mdp, cfg: SearchConfig) -> SearchReport:
    t_start = time.perf_counter()
    alphas = cfg.alphas
    comps = _composites(mdp, cfg.strides)
    filter_dists = list(cfg.filter.distributions) if cfg.filtering else []
    solved: dict[str, SolvedSchedule] = {}
    filt_fronts: dict[str, ScheduleFront] = {}
    survivors: set[str] = set()
    stages: list[StageStats] = []

    def run_filter():
        fr = filter_fronts([filt_fronts[k] for k in sorted(survivors)], cfg.filter.margin)
        survivors.intersection_update(fr.kept)
        if not survivors:  # pragma: no cover - pooled-front owners always survive
            raise PsmdpError("filter removed every candidate")
        return fr

    def register(sol: SolvedSchedule):
        solved[sol.key] = sol
        survivors.add(sol.key)
        if cfg.filtering:
            filt_fronts[sol.key] = build_front(sol, filter_dists)

    # stage 1: recurrent tails
    t0 = time.perf_counter()
    stage: dict[str, int] = {}
    for k in cfg.strides:
        sol = solve_base(comps[k], alphas, cfg.eps)
        register(sol)
        stage[sol.key] = 1
    # the base tails are never filtered on their own; filtering runs after
    # every extension stage
    stages.append(StageStats(1, len(stage), 0, 0, len(stage), len(survivors), len(survivors), 0, 0,
                             time.perf_counter() - t0))

    for i in range(2, cfg.max_length + 1):
        t0 = time.perf_counter()
        jobs = []
        nxt: dict[str, int] = {}
        duplicates = 0
        for key in sorted(stage):
            suffix = solved[key]
            for k in cfg.strides:
                sched = prepend(suffix.schedule, k)
                new_key = str(sched)
                nxt[new_key] = nxt.get(new_key, 0) + stage[key]
                if new_key in solved:
                    duplicates += 1
                    continue
                jobs.append((key, k, new_key))

        def work(job):
            key, k, _ = job
            return prepend_schedule(solved[key], k, comps[k], alphas)

        if cfg.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(work, jobs))
        else:
            results = [work(j) for j in jobs]
        for sol in sorted(results, key=lambda s: s.key):
            register(sol)
        stats = StageStats(i, sum(nxt.values()), len(stage) * len(cfg.strides), duplicates,
                           len(results), len(survivors), len(survivors), 0, 0, 0.0)
        if cfg.filtering:
            fr = run_filter()
            stats.kept, stats.dropped, stats.kept_by_margin = len(fr.kept), len(fr.dropped), len(fr.kept_by_margin)
        stats.wall_s = time.perf_counter() - t0
        stages.append(stats)
        log.info("stage %d: %d solved, %d survivors", i, len(results), len(survivors))
        # collapsed duplicates stay as aliases so raw sequence counts add up
        stage = {k: m for k, m in nxt.items() if k in survivors}
        if not stage:
            break

    init = [cfg.initial]
    fronts = {k: build_front(solved[k], init) for k in sorted(survivors)}
    final = _final_front(fronts)
    return SearchReport(cfg, solved, tuple(sorted(survivors)), fronts, final, stages,
                        time.perf_counter() - t_start)


def _realizable_signature(front: ScheduleFront) -> dict[str, tuple[float, float]]:
    return {lab: p.as_tuple() for lab, p in front.at(0).realizable}


def quality_metric(filtered: SearchReport, truth: SearchReport, tol: float = MATCH_TOL) -> float:
    """Fraction of the truth run's final schedules reproduced by the filtered run."""
    a, b = filtered.config, truth.config
    if (a.strides != b.strides or a.max_length != b.max_length or a.alphas != b.alphas
            or a.initial.shape != b.initial.shape or not np.allclose(a.initial, b.initial, atol=1e-12)):
        raise InputError("quality_metric needs runs that differ only in filtering")
    if not truth.final:
        raise InputError("truth run has an empty final front")
    hits = 0
    for key in truth.final:
        if key not in filtered.final:
            continue
        want = _realizable_signature(truth.fronts[key])
        got = _realizable_signature(filtered.fronts[key])
        if want.keys() == got.keys() and all(
                abs(want[l][0] - got[l][0]) <= tol and abs(want[l][1] - got[l][1]) <= tol for l in want):
            hits += 1
    return hits / len(truth.final)
