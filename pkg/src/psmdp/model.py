"""Base MDP container and the stride-k composite (macro-action) construction.

Transition kernels are stored as a single CSR matrix with one row per
``(action, state)`` pair, row index ``action * n_states + state``.  The composite
for stride ``k`` uses the same layout with macro-action indices in place of
actions, so stride 1 is bit-identical to the base MDP.

Macro-action indices are base-``|A|`` little-endian over the steps: the first
step is the least significant digit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, InputError

Objective = Literal["exec", "checkin"]

ROW_TOL = 1e-9
DEFAULT_ENUMERATION_CAP = 200_000


def macro_index(steps: Sequence[int], n_actions: int) -> int:
    idx = 0
    for j, a in enumerate(steps):
        idx += int(a) * n_actions**j
    return idx


def macro_steps(index: int, stride: int, n_actions: int) -> tuple[int, ...]:
    steps = []
    for _ in range(stride):
        index, a = divmod(index, n_actions)
        steps.append(a)
    return tuple(steps)


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with a goal set and separate execution / check-in discounts.

    ``transitions`` is a CSR matrix of shape ``(n_actions * n_states, n_states)``;
    ``cost`` is a dense ``(n_states, n_actions)`` array.
    """

    n_states: int
    n_actions: int
    transitions: sp.csr_matrix
    cost: np.ndarray
    goal: frozenset[int]
    gamma_exec: float
    gamma_checkin: float
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    _composites: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        S, A = self.n_states, self.n_actions
        if S < 1 or A < 1:
            raise InputError("an MDP needs at least one state and one action")
        if not (0.0 < self.gamma_exec < 1.0):
            raise InputError(f"gamma_exec must lie in (0, 1), got {self.gamma_exec}")
        if not (0.0 < self.gamma_checkin < 1.0):
            raise InputError(f"gamma_checkin must lie in (0, 1), got {self.gamma_checkin}")
        T = sp.csr_matrix(self.transitions, dtype=float)
        T.eliminate_zeros()
        T.sort_indices()
        if T.shape != (A * S, S):
            raise InputError(f"transition matrix has shape {T.shape}, expected {(A * S, S)}")
        if T.nnz and T.data.min() < 0.0:
            raise InputError("negative transition probability")
        sums = np.asarray(T.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            a, s = divmod(int(bad[0]), S)
            raise InputError(f"transition row (state={s}, action={a}) sums to {sums[bad[0]]!r}")
        cost = np.array(self.cost, dtype=float)
        if cost.shape != (S, A):
            raise InputError(f"cost array has shape {cost.shape}, expected {(S, A)}")
        if not np.all(np.isfinite(cost)):
            raise InputError("costs must be finite")
        goal = frozenset(int(g) for g in self.goal)
        for g in goal:
            if not 0 <= g < S:
                raise InputError(f"goal state {g} out of range")
            if np.any(cost[g] != 0.0):
                raise InputError(f"goal state {g} must have zero cost for every action")
            for a in range(A):
                row = T.getrow(a * S + g)
                if row.nnz != 1 or row.indices[0] != g:
                    raise InputError(f"goal state {g} must be absorbing under action {a}")
        cost.setflags(write=False)
        object.__setattr__(self, "transitions", T)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "goal", goal)

    @classmethod
    def from_dense(cls, transitions, cost, goal: Iterable[int], gamma_exec: float,
                   gamma_checkin: float, **kwargs) -> "Mdp":
        """Build from a dense ``(n_actions, n_states, n_states)`` kernel."""
        T = np.asarray(transitions, dtype=float)
        if T.ndim != 3 or T.shape[1] != T.shape[2]:
            raise InputError(f"dense kernel must be (A, S, S), got {T.shape}")
        A, S, _ = T.shape
        return cls(S, A, sp.csr_matrix(T.reshape(A * S, S)), np.asarray(cost, dtype=float),
                   frozenset(goal), gamma_exec, gamma_checkin, **kwargs)

    @property
    def goal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.goal)] = True
        return mask

    def action_matrix(self, a: int) -> sp.csr_matrix:
        S = self.n_states
        return self.transitions[a * S:(a + 1) * S]

    def dense_transitions(self) -> np.ndarray:
        return self.transitions.toarray().reshape(self.n_actions, self.n_states, self.n_states)

    def to_json(self) -> dict:
        T = self.transitions.tocoo()
        S = self.n_states
        rows = sorted(zip(T.row.tolist(), T.col.tolist(), T.data.tolist()))
        costs = [[s, a, float(self.cost[s, a])]
                 for s in range(S) for a in range(self.n_actions) if self.cost[s, a] != 0.0]
        return {
            "n_states": S,
            "n_actions": self.n_actions,
            "goal": sorted(self.goal),
            "gamma_exec": self.gamma_exec,
            "gamma_checkin": self.gamma_checkin,
            "transitions": [[r % S, r // S, c, p] for r, c, p in rows],
            "costs": costs,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Mdp":
        try:
            S = int(data["n_states"])
            A = int(data["n_actions"])
            entries = data["transitions"]
            rows = [int(s) + S * int(a) for s, a, _, _ in entries]
            cols = [int(s2) for _, _, s2, _ in entries]
            vals = [float(p) for *_, p in entries]
            for s, a, _, _ in entries:
                if not (0 <= int(s) < S and 0 <= int(a) < A):
                    raise InputError(f"transition entry ({s}, {a}) out of range")
            T = sp.csr_matrix((vals, (rows, cols)), shape=(A * S, S))
            cost = np.zeros((S, A))
            for s, a, c in data.get("costs", []):
                cost[int(s), int(a)] = float(c)
            return cls(S, A, T, cost, frozenset(int(g) for g in data.get("goal", [])),
                       float(data["gamma_exec"]), float(data["gamma_checkin"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed MDP JSON: {exc}") from exc

    @classmethod
    def load(cls, path: str | PathLike) -> "Mdp":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _check_steps(mdp: Mdp, steps: Sequence[int]) -> tuple[int, ...]:
    steps = tuple(int(a) for a in steps)
    if not steps:
        raise InputError("macro action must contain at least one step")
    for a in steps:
        if not 0 <= a < mdp.n_actions:
            raise InputError(f"action index {a} out of range [0, {mdp.n_actions})")
    return steps


def compose_transition(mdp: Mdp, steps: Sequence[int]) -> np.ndarray:
    """Dense ``(S, S)`` matrix: row ``s`` is the state distribution after the steps."""
    steps = _check_steps(mdp, steps)
    P = mdp.action_matrix(steps[0]).toarray()
    for a in steps[1:]:
        P = (mdp.action_matrix(a).T @ P.T).T
    return P


def macro_exec_cost(mdp: Mdp, s: int, steps: Sequence[int]) -> float:
    """Expected within-stride discounted cost of ``steps`` started in ``s``."""
    steps = _check_steps(mdp, steps)
    if not 0 <= s < mdp.n_states:
        raise InputError(f"state {s} out of range")
    dist = np.zeros(mdp.n_states)
    dist[s] = 1.0
    total = 0.0
    for j, a in enumerate(steps):
        total += mdp.gamma_exec**j * float(dist @ mdp.cost[:, a])
        dist = mdp.action_matrix(a).T @ dist
    return total


def macro_checkin_cost(mdp: Mdp, s: int) -> int:
    return 0 if s in mdp.goal else 1


@dataclass(frozen=True, eq=False)
class CompositeMdp:
    """All ``|A|**stride`` macro actions of one stride.

    ``transitions`` has shape ``(n_macros * n_states, n_states)`` with row
    ``m * n_states + s``; ``exec_cost`` has shape ``(n_macros, n_states)``.
    """

    stride: int
    n_states: int
    n_actions: int
    transitions: sp.csr_matrix
    exec_cost: np.ndarray
    checkin_cost: np.ndarray
    goal_mask: np.ndarray
    gamma_exec: float
    gamma_checkin: float

    @property
    def n_macros(self) -> int:
        return self.n_actions**self.stride

    def steps(self, m: int) -> tuple[int, ...]:
        return macro_steps(int(m), self.stride, self.n_actions)

    def discount(self, objective: Objective) -> float:
        if objective == "exec":
            return self.gamma_exec**self.stride
        if objective == "checkin":
            return self.gamma_checkin
        raise InputError(f"unknown objective {objective!r}")

    def stage_cost(self, objective: Objective) -> np.ndarray:
        """Per-(macro, state) immediate cost, broadcastable to ``(n_macros, n_states)``."""
        if objective == "exec":
            return self.exec_cost
        if objective == "checkin":
            return self.checkin_cost[None, :]
        raise InputError(f"unknown objective {objective!r}")

    def expected(self, v: np.ndarray) -> np.ndarray:
        """``E[v(s') | s, m]`` as an ``(n_macros, n_states)`` array."""
        return (self.transitions @ v).reshape(self.n_macros, self.n_states)

    def policy_matrix(self, policy: np.ndarray) -> sp.csr_matrix:
        rows = np.asarray(policy, dtype=np.int64) * self.n_states + np.arange(self.n_states)
        return self.transitions[rows]

    def row(self, s: int, m: int) -> np.ndarray:
        return self.transitions.getrow(int(m) * self.n_states + int(s)).toarray().ravel()


def build_composite(mdp: Mdp, k: int, stride_bound: int | None = None,
                    cap: int | None = None) -> CompositeMdp:
    """Composite MDP for stride ``k``; cached on the MDP and built from stride ``k - 1``."""
    if k < 1:
        raise InputError(f"stride must be >= 1, got {k}")
    if stride_bound is not None and k > stride_bound:
        raise InputError(f"stride {k} exceeds the stride bound {stride_bound}")
    cap = mdp.enumeration_cap if cap is None else cap
    count = mdp.n_actions**k
    if count > cap:
        raise CapacityError(count, cap)
    cache = mdp._composites
    if k in cache:
        return cache[k]
    S, A = mdp.n_states, mdp.n_actions
    if k == 1:
        T = mdp.transitions
        C = np.ascontiguousarray(mdp.cost.T)
    else:
        prev = build_composite(mdp, k - 1, cap=cap)
        disc = mdp.gamma_exec ** (k - 1)
        blocks, costs = [], []
        for a in range(A):
            blocks.append(prev.transitions @ mdp.action_matrix(a))
            costs.append(prev.exec_cost + disc * prev.expected(mdp.cost[:, a]))
        T = sp.vstack(blocks, format="csr")
        T.eliminate_zeros()
        T.sort_indices()
        C = np.concatenate(costs, axis=0)
    goal_mask = mdp.goal_mask
    C = np.array(C, dtype=float)
    C[:, goal_mask] = 0.0
    C.setflags(write=False)
    ck = (~goal_mask).astype(float)
    ck.setflags(write=False)
    comp = CompositeMdp(k, S, A, T, C, ck, goal_mask, mdp.gamma_exec, mdp.gamma_checkin)
    cache[k] = comp
    return comp


def row_sum_error(comp: CompositeMdp) -> float:
    sums = np.asarray(comp.transitions.sum(axis=1)).ravel()
    return float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0


def max_abs_cost(mdp: Mdp) -> float:
    m = float(np.max(np.abs(mdp.cost))) if mdp.cost.size else 0.0
    return m if m > 0 and math.isfinite(m) else 1.0
