"""Monte Carlo rollouts of a layered policy under its schedule.

Samples are simulated in fixed-size chunks; chunk ``c`` draws from
``PCG64(SeedSequence([seed, c]))``, so results depend only on ``seed`` and
``n`` and never on how chunks are scheduled.  Per-sample totals are reduced
with ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError
from .model import Mdp, build_composite
from .schedule import Schedule
from .solver import PolicyRecord

CHUNK = 8192
DEFAULT_HORIZON = 512
RNG_ALGORITHM = f"numpy PCG64, SeedSequence([seed, chunk]), chunk={CHUNK}"


@dataclass(frozen=True)
class RolloutStats:
    n: int
    mean_exec: float
    mean_checkin: float
    stderr_exec: float
    stderr_checkin: float
    truncated_fraction: float
    seed: int
    horizon_checkins: int
    envelope_exec: float
    envelope_checkin: float
    rng: str = RNG_ALGORITHM

    def to_json(self) -> dict:
        return asdict(self)


class _Sampler:
    """Padded per-row support and cumulative probabilities of the base kernel."""

    def __init__(self, mdp: Mdp):
        T = mdp.transitions
        nnz = np.diff(T.indptr)
        width = int(nnz.max())
        rows = T.shape[0]
        self.idx = np.zeros((rows, width), dtype=np.int64)
        self.cum = np.full((rows, width), 2.0)
        for r in range(rows):
            lo, hi = T.indptr[r], T.indptr[r + 1]
            self.idx[r, : hi - lo] = T.indices[lo:hi]
            c = np.cumsum(T.data[lo:hi])
            c[-1] = 1.0
            self.cum[r, : hi - lo] = c
        self.n_states = mdp.n_states

    def step(self, states: np.ndarray, actions: np.ndarray, u: np.ndarray) -> np.ndarray:
        rows = actions * self.n_states + states
        pick = np.sum(self.cum[rows] <= u[:, None], axis=1)
        return self.idx[rows, pick]


def truncation_envelope(mdp: Mdp, sched: Schedule, horizon: int) -> tuple[float, float]:
    """Upper bounds on the cost mass beyond ``horizon`` check-ins, per objective."""
    k_min = min(sched.strides)
    c_max = max(float(np.max(np.abs(build_composite(mdp, k).exec_cost))) for k in set(sched.strides))
    g_exec = mdp.gamma_exec ** k_min
    g_ck = mdp.gamma_checkin
    return c_max * g_exec ** horizon / (1 - g_exec), g_ck ** horizon / (1 - g_ck)


def _check(mdp: Mdp, sched: Schedule, policy: PolicyRecord, distribution, n: int,
           horizon: int, seed: int) -> np.ndarray:
    if n < 1:
        raise InputError("rollout needs n >= 1 samples")
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InputError("seed must be a non-negative integer")
    if horizon < sched.length:
        raise InputError(f"horizon must cover the schedule length ({sched.length}) at least")
    if len(policy.layers) != sched.length or tuple(policy.strides) != sched.strides:
        raise InputError(f"policy layers {policy.strides} do not match schedule {sched}")
    d = np.asarray(distribution, dtype=float)
    if d.shape != (mdp.n_states,) or np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
        raise InputError("distribution must be a probability vector over states")
    return d


def _simulate_chunk(mdp: Mdp, sampler: _Sampler, policy: PolicyRecord, cum0: np.ndarray,
                    size: int, horizon: int, rng: np.random.Generator):
    goal = mdp.goal_mask
    A = mdp.n_actions
    states = np.minimum(np.searchsorted(cum0, rng.random(size), side="right"), mdp.n_states - 1)
    exec_tot = np.zeros(size)
    ck_tot = np.zeros(size)
    t = 0
    for j in range(horizon):
        active = ~goal[states]
        if not active.any():
            break
        layer, stride = policy.layer_for(j)
        macro = layer[states]
        ck_tot += np.where(active, mdp.gamma_checkin ** j, 0.0)
        for i in range(stride):
            actions = (macro // A ** i) % A
            exec_tot += mdp.gamma_exec ** t * mdp.cost[states, actions]
            states = sampler.step(states, actions, rng.random(size))
            t += 1
    return exec_tot, ck_tot, ~goal[states]


def _mean_stderr(x: list[float]) -> tuple[float, float]:
    n = len(x)
    mean = math.fsum(x) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1)
    return mean, math.sqrt(var / n)


def rollout(mdp: Mdp, sched: Schedule, policy: PolicyRecord, distribution, n: int,
            horizon_checkins: int = DEFAULT_HORIZON, seed: int = 0) -> RolloutStats:
    d = _check(mdp, sched, policy, distribution, n, horizon_checkins, seed)
    cum0 = np.cumsum(d)
    cum0[-1] = 1.0
    sampler = _Sampler(mdp)
    exec_all, ck_all, trunc = [], [], 0
    for c, start in enumerate(range(0, n, CHUNK)):
        size = min(CHUNK, n - start)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), c])))
        e, k, tr = _simulate_chunk(mdp, sampler, policy, cum0, size, horizon_checkins, rng)
        exec_all.extend(e.tolist())
        ck_all.extend(k.tolist())
        trunc += int(tr.sum())
    me, se = _mean_stderr(exec_all)
    mc, sc = _mean_stderr(ck_all)
    env_e, env_c = truncation_envelope(mdp, sched, horizon_checkins)
    return RolloutStats(n, me, mc, se, sc, trunc / n, int(seed), horizon_checkins, env_e, env_c)


def trace(mdp: Mdp, sched: Schedule, policy: PolicyRecord, start_state: int,
          horizon_checkins: int = DEFAULT_HORIZON, seed: int = 0) -> list[dict]:
    """One trajectory as a list of per-check-in records, for debugging."""
    d = np.zeros(mdp.n_states)
    d[start_state] = 1.0
    _check(mdp, sched, policy, d, 1, horizon_checkins, seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0])))
    sampler = _Sampler(mdp)
    s, t, out = int(start_state), 0, []
    for j in range(horizon_checkins):
        if s in mdp.goal:
            break
        layer, stride = policy.layer_for(j)
        m = int(layer[s])
        steps = [(m // mdp.n_actions ** i) % mdp.n_actions for i in range(stride)]
        cost = 0.0
        s0 = s
        for a in steps:
            cost += mdp.gamma_exec ** t * mdp.cost[s, a]
            s = int(sampler.step(np.array([s]), np.array([a]), rng.random(1))[0])
            t += 1
        out.append({"checkin": j, "state": s0, "macro": steps, "exec_cost": cost,
                    "checkin_cost": mdp.gamma_checkin ** j, "next_state": s})
    return out
