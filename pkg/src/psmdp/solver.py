"""Tail value iteration, single-pass schedule extension and alpha policies.

Discounting: the execution objective discounts within a stride inside the
macro cost and by ``gamma_exec ** k`` across a stride of length ``k``; the
check-in objective discounts by ``gamma_checkin`` once per check-in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, InputError
from .model import CompositeMdp, Mdp, Objective, build_composite
from .schedule import Schedule, prepend, tail_schedule

MAX_ITERS = 100_000
REL_EPS = 1e-9

EXEC_OPT = "exec-opt"
CHECKIN_OPT = "checkin-opt"


def alpha_label(alpha: float) -> str:
    return f"alpha={alpha:g}"


@dataclass(frozen=True, eq=False)
class ValuePair:
    v_exec: np.ndarray
    v_checkin: np.ndarray

    def get(self, objective: Objective) -> np.ndarray:
        return self.v_exec if objective == "exec" else self.v_checkin


@dataclass(frozen=True, eq=False)
class PolicyRecord:
    """A layered policy; ``layers[i]`` maps state -> macro index of stride ``strides[i]``.

    The last layer is the stationary tail policy.
    """

    kind: str
    layers: tuple[np.ndarray, ...]
    strides: tuple[int, ...]
    values: ValuePair
    alpha: float | None = None

    @property
    def label(self) -> str:
        return alpha_label(self.alpha) if self.kind == "alpha" else self.kind

    def layer_for(self, checkin: int) -> tuple[np.ndarray, int]:
        i = min(checkin, len(self.layers) - 1)
        return self.layers[i], self.strides[i]


@dataclass(eq=False)
class SolvedSchedule:
    schedule: Schedule
    policies: dict[str, PolicyRecord] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return str(self.schedule)

    def add(self, record: PolicyRecord) -> None:
        if record.label in self.policies:
            raise InputError(f"duplicate policy kind {record.label}")
        self.policies[record.label] = record

    @property
    def exec_opt(self) -> PolicyRecord:
        return self.policies[EXEC_OPT]

    @property
    def checkin_opt(self) -> PolicyRecord:
        return self.policies[CHECKIN_OPT]

    def alpha_policies(self) -> list[PolicyRecord]:
        return [p for p in self.policies.values() if p.kind == "alpha"]


def default_eps(comp: CompositeMdp, objective: Objective) -> float:
    if objective == "checkin":
        return REL_EPS
    scale = float(np.max(np.abs(comp.exec_cost))) if comp.exec_cost.size else 0.0
    return REL_EPS * (scale if scale > 0 else 1.0)


def _pin(v: np.ndarray, comp: CompositeMdp) -> np.ndarray:
    v = np.array(v, dtype=float)
    v[comp.goal_mask] = 0.0
    return v


def _check_vector(v: np.ndarray, comp: CompositeMdp) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (comp.n_states,):
        raise InputError(f"value vector has shape {v.shape}, expected ({comp.n_states},)")
    return v


def _check_layer(layer: np.ndarray, comp: CompositeMdp) -> np.ndarray:
    layer = np.asarray(layer, dtype=np.int64)
    if layer.shape != (comp.n_states,):
        raise InputError(f"policy layer has shape {layer.shape}, expected ({comp.n_states},)")
    if layer.size and (layer.min() < 0 or layer.max() >= comp.n_macros):
        raise InputError("macro-action index out of range")
    return layer


def _q_values(comp: CompositeMdp, objective: Objective, v: np.ndarray) -> np.ndarray:
    return comp.stage_cost(objective) + comp.discount(objective) * comp.expected(v)


def _greedy(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # np.argmin returns the first minimiser: lowest macro index wins ties
    pol = np.argmin(Q, axis=0)
    return pol, Q[pol, np.arange(Q.shape[1])]


def _evaluate_exact(comp: CompositeMdp, policy: np.ndarray, objective: Objective) -> np.ndarray:
    S = comp.n_states
    P = comp.policy_matrix(policy).toarray()
    c = np.broadcast_to(comp.stage_cost(objective), (comp.n_macros, S))[policy, np.arange(S)]
    A = np.eye(S) - comp.discount(objective) * P
    return _pin(np.linalg.solve(A, c), comp)


def solve_tail(comp: CompositeMdp, objective: Objective, eps: float | None = None,
               max_iters: int = MAX_ITERS) -> tuple[np.ndarray, np.ndarray]:
    """Optimal stationary policy and values for the recurrent tail of ``comp.stride``.

    Plain value iteration with a sup-norm stopping rule.  Whenever the greedy
    policy repeats, the iterate is replaced by that policy's exact value, which
    only ever moves the iterate closer to the fixed point.
    """
    eps = default_eps(comp, objective) if eps is None else eps
    if eps <= 0:
        raise InputError("eps must be positive")
    v = np.zeros(comp.n_states)
    prev = None
    residual = np.inf
    for _ in range(max_iters):
        pol, new = _greedy(_q_values(comp, objective, v))
        new = _pin(new, comp)
        residual = float(np.max(np.abs(new - v))) if new.size else 0.0
        v = new
        if residual < eps:
            return pol, v
        if prev is not None and np.array_equal(pol, prev):
            v = _evaluate_exact(comp, pol, objective)
        prev = pol
    raise ConvergenceError(f"value iteration for stride {comp.stride} ({objective}) did not converge",
                           residual)


def policy_eval_tail(comp: CompositeMdp, policy: np.ndarray, objective: Objective,
                     eps: float | None = None, max_iters: int = MAX_ITERS) -> np.ndarray:
    """Value of a stationary tail policy (direct linear solve, residual-checked)."""
    del max_iters  # direct solve; kept for signature parity with solve_tail
    policy = _check_layer(policy, comp)
    eps = default_eps(comp, objective) if eps is None else eps
    v = _evaluate_exact(comp, policy, objective)
    check = extend_policy_eval(v, comp, policy, objective)
    residual = float(np.max(np.abs(check - v))) if v.size else 0.0
    if residual >= eps:
        raise ConvergenceError("policy evaluation is ill-conditioned", residual)
    return v


def extend_value(v_suffix: np.ndarray, comp: CompositeMdp,
                 objective: Objective) -> tuple[np.ndarray, np.ndarray]:
    """One Bellman backup against the suffix head values; returns (layer, values)."""
    v_suffix = _check_vector(v_suffix, comp)
    pol, v = _greedy(_q_values(comp, objective, v_suffix))
    return pol, _pin(v, comp)


def extend_policy_eval(v_suffix: np.ndarray, comp: CompositeMdp, layer: np.ndarray,
                       objective: Objective) -> np.ndarray:
    v_suffix = _check_vector(v_suffix, comp)
    layer = _check_layer(layer, comp)
    S = comp.n_states
    states = np.arange(S)
    cost = np.broadcast_to(comp.stage_cost(objective), (comp.n_macros, S))[layer, states]
    nxt = comp.policy_matrix(layer) @ v_suffix
    return _pin(cost + comp.discount(objective) * nxt, comp)


def _alpha_q(comp: CompositeMdp, pair: ValuePair) -> tuple[np.ndarray, np.ndarray]:
    M, S = comp.n_macros, comp.n_states
    nxt = comp.transitions @ np.column_stack([pair.v_exec, pair.v_checkin])
    qe = comp.exec_cost + comp.discount("exec") * nxt[:, 0].reshape(M, S)
    qc = comp.checkin_cost[None, :] + comp.discount("checkin") * nxt[:, 1].reshape(M, S)
    return qe, qc


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


def extend_alpha(suffix_pair: ValuePair, comp: CompositeMdp,
                 alpha: float) -> tuple[np.ndarray, ValuePair]:
    """Greedy layer for the alpha-blend of both objectives, continuing with ``suffix_pair``."""
    alpha = _check_alpha(alpha)
    _check_vector(suffix_pair.v_exec, comp)
    _check_vector(suffix_pair.v_checkin, comp)
    qe, qc = _alpha_q(comp, suffix_pair)
    pol, _ = _greedy(alpha * qe + (1.0 - alpha) * qc)
    states = np.arange(comp.n_states)
    return pol, ValuePair(_pin(qe[pol, states], comp), _pin(qc[pol, states], comp))


def solve_tail_alpha(comp: CompositeMdp, alpha: float, eps: float | None = None,
                     max_iters: int = MAX_ITERS) -> tuple[np.ndarray, ValuePair]:
    """Fixed point of the alpha backup on the (exec, checkin) value pair.

    Exact when ``gamma_checkin == gamma_exec ** stride``; otherwise a heuristic.
    """
    alpha = _check_alpha(alpha)
    eps_e = default_eps(comp, "exec") if eps is None else eps
    eps_c = default_eps(comp, "checkin") if eps is None else eps
    zeros = np.zeros(comp.n_states)
    pair = ValuePair(zeros, zeros)
    prev = prev_prev = None
    res = np.inf
    for _ in range(max_iters):
        pol, new = extend_alpha(pair, comp, alpha)
        res_e = float(np.max(np.abs(new.v_exec - pair.v_exec)))
        res_c = float(np.max(np.abs(new.v_checkin - pair.v_checkin)))
        res = max(res_e, res_c)
        pair = new
        if res_e < eps_e and res_c < eps_c:
            return pol, pair
        if prev is not None and np.array_equal(pol, prev):
            pair = ValuePair(_evaluate_exact(comp, pol, "exec"),
                             _evaluate_exact(comp, pol, "checkin"))
        prev_prev, prev = prev, pol
    raise ConvergenceError(f"alpha={alpha:g} tail iteration did not settle", res,
                           last_policies=(prev_prev, prev))


def solve_base(comp: CompositeMdp, alphas: Sequence[float] = (), eps: float | None = None,
               max_iters: int = MAX_ITERS) -> SolvedSchedule:
    """Solve the recurrent-tail schedule ``(k)``: exec-opt, checkin-opt and alpha policies."""
    k = comp.stride
    solved = SolvedSchedule(tail_schedule(k))
    pe, ve = solve_tail(comp, "exec", eps, max_iters)
    vc_e = policy_eval_tail(comp, pe, "checkin")
    solved.add(PolicyRecord(EXEC_OPT, (pe,), (k,), ValuePair(ve, vc_e)))
    pc, vc = solve_tail(comp, "checkin", eps, max_iters)
    ve_c = policy_eval_tail(comp, pc, "exec")
    solved.add(PolicyRecord(CHECKIN_OPT, (pc,), (k,), ValuePair(ve_c, vc)))
    for alpha in alphas:
        pa, pair = solve_tail_alpha(comp, alpha, eps, max_iters)
        solved.add(PolicyRecord("alpha", (pa,), (k,), pair, alpha=float(alpha)))
    return solved


def prepend_schedule(suffix: SolvedSchedule, k: int, comp: CompositeMdp,
                     alphas: Sequence[float] = (), stride_bound: int | None = None) -> SolvedSchedule:
    """Extend every known policy of ``suffix`` by one layer of stride ``k``.

    Equivalent to calling :func:`extend_value`, :func:`extend_policy_eval` and
    :func:`extend_alpha` per policy, but all suffix value vectors go through a
    single sparse product.
    """
    if comp.stride != k:
        raise InputError(f"composite has stride {comp.stride}, expected {k}")
    sched = prepend(suffix.schedule, k, stride_bound)
    collapsed = sched == suffix.schedule
    recs = [suffix.exec_opt, suffix.checkin_opt]
    for alpha in alphas:
        rec = suffix.policies.get(alpha_label(alpha))
        if rec is None:
            raise InputError(f"suffix {suffix.key} has no {alpha_label(alpha)} policy")
        recs.append(rec)
    M, S = comp.n_macros, comp.n_states
    V = np.column_stack([v for r in recs for v in (r.values.v_exec, r.values.v_checkin)])
    nxt = (comp.transitions @ V).reshape(M, S, V.shape[1])
    ge, gc = comp.discount("exec"), comp.discount("checkin")
    states = np.arange(S)
    out = SolvedSchedule(sched)
    for j, rec in enumerate(recs):
        qe = comp.exec_cost + ge * nxt[:, :, 2 * j]
        qc = comp.checkin_cost[None, :] + gc * nxt[:, :, 2 * j + 1]
        if rec.kind == EXEC_OPT:
            layer, _ = _greedy(qe)
        elif rec.kind == CHECKIN_OPT:
            layer, _ = _greedy(qc)
        else:
            layer, _ = _greedy(rec.alpha * qe + (1.0 - rec.alpha) * qc)
        pair = ValuePair(_pin(qe[layer, states], comp), _pin(qc[layer, states], comp))
        if collapsed:
            layers, strides = (layer,), (k,)
        else:
            layers, strides = (layer,) + rec.layers, (k,) + rec.strides
        out.add(PolicyRecord(rec.kind, layers, strides, pair, rec.alpha))
    return out


def solve_schedule(mdp: Mdp, sched: Schedule, alphas: Iterable[float] = (),
                   eps: float | None = None) -> SolvedSchedule:
    """Solve one schedule directly: tail first, then prefix strides back to front."""
    alphas = tuple(alphas)
    solved = solve_base(build_composite(mdp, sched.tail), alphas, eps)
    for k in reversed(sched.prefix):
        solved = prepend_schedule(solved, k, build_composite(mdp, k), alphas)
    return solved
