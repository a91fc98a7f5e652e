import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psmdp.errors import InputError
from psmdp.model import Mdp, build_composite
from psmdp.schedule import Schedule, parse_schedule
from psmdp.solver import (CHECKIN_OPT, EXEC_OPT, ValuePair, default_eps, extend_alpha,
                          extend_policy_eval, extend_value, policy_eval_tail, prepend_schedule,
                          solve_base, solve_schedule, solve_tail, solve_tail_alpha)

from oracles import chain_mdp, layer_backup, layered_pairs, random_mdp, tail_pairs


def test_deterministic_chain_values():
    mdp = chain_mdp(p_stay=0.0, cost=1.0, gamma_exec=0.5, gamma_checkin=0.9)
    comp = build_composite(mdp, 1)
    _, ve = solve_tail(comp, "exec")
    _, vc = solve_tail(comp, "checkin")
    np.testing.assert_allclose(ve, [1.0, 0.0])
    np.testing.assert_allclose(vc, [1.0, 0.0])


def test_self_loop_geometric_series():
    # action 0 loops forever at cost 2, action 1 reaches the goal
    T = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]])
    mdp = Mdp.from_dense(T, [[2.0, 5.0], [0.0, 0.0]], [1], 0.8, 0.9)
    comp = build_composite(mdp, 1)
    v = policy_eval_tail(comp, np.array([0, 0]), "exec")
    assert v[0] == pytest.approx(2.0 / (1 - 0.8))
    vc = policy_eval_tail(comp, np.array([0, 0]), "checkin")
    assert vc[0] == pytest.approx(1.0 / (1 - 0.9))


def test_all_goal_mdp_is_zero():
    T = np.array([[[1.0, 0.0], [0.0, 1.0]]] * 2)
    mdp = Mdp.from_dense(T, np.zeros((2, 2)), [0, 1], 0.9, 0.9)
    comp = build_composite(mdp, 2)
    for obj in ("exec", "checkin"):
        assert not solve_tail(comp, obj)[1].any()
        assert not policy_eval_tail(comp, np.zeros(2, int), obj).any()
        assert not extend_policy_eval(np.zeros(2), comp, np.array([1, 3]), obj).any()
    _, pair = solve_tail_alpha(comp, 0.4)
    assert not pair.v_exec.any() and not pair.v_checkin.any()
    _, pair = extend_alpha(ValuePair(np.zeros(2), np.zeros(2)), comp, 0.4)
    assert not pair.v_exec.any() and not pair.v_checkin.any()


def test_one_backup_by_hand():
    T = np.array([[[0.5, 0.5], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]])
    mdp = Mdp.from_dense(T, [[1.0, 3.0], [0.0, 0.0]], [1], 0.5, 0.9)
    comp = build_composite(mdp, 1)
    layer, v = extend_value(np.array([1.0, 0.0]), comp, "exec")
    # action 0: 1 + 0.5*0.5*1 = 1.25, action 1: 3 + 0 = 3
    assert v[0] == pytest.approx(1.25)
    assert layer[0] == 0
    assert v[1] == 0.0


def test_extend_policy_eval_consistent_with_extend_value():
    mdp = random_mdp(np.random.default_rng(5))
    comp = build_composite(mdp, 2)
    v = np.random.default_rng(6).normal(size=mdp.n_states)
    v[mdp.goal_mask] = 0
    layer, best = extend_value(v, comp, "exec")
    np.testing.assert_allclose(extend_policy_eval(v, comp, layer, "exec"), best)


def test_deterministic_chain_layer_by_hand():
    # 0 -> 1 -> 2(goal), one action, cost 1 per step
    T = np.array([[[0, 1, 0], [0, 0, 1], [0, 0, 1]]], dtype=float)
    mdp = Mdp.from_dense(T, [[1.0], [1.0], [0.0]], [2], 0.5, 0.9)
    comp = build_composite(mdp, 2)
    v = extend_policy_eval(np.array([7.0, 7.0, 0.0]), comp, np.zeros(3, int), "exec")
    # from 0: 1 + 0.5*1 + 0.25*0; from 1: 1 + 0 + 0.25*0
    np.testing.assert_allclose(v, [1.5, 1.0, 0.0])


def test_ties_pick_lowest_macro():
    T = np.array([[[0.0, 1.0], [0.0, 1.0]]] * 3)
    mdp = Mdp.from_dense(T, [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]], [1], 0.9, 0.9)
    comp = build_composite(mdp, 2)
    pol, _ = solve_tail(comp, "exec")
    assert pol[0] == 0


def test_fixed_point_after_one_more_backup():
    mdp = random_mdp(np.random.default_rng(2), n_states=6)
    for k in (1, 2, 3):
        comp = build_composite(mdp, k)
        for obj in ("exec", "checkin"):
            _, v = solve_tail(comp, obj)
            _, v2 = extend_value(v, comp, obj)
            assert np.max(np.abs(v2 - v)) <= 10 * default_eps(comp, obj)


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_schedule_values_match_enumeration(seed):
    mdp = random_mdp(np.random.default_rng(seed), n_states=4)
    for text in ("(1)", "(2)", "1(2)", "2(1)"):
        sched = parse_schedule(text)
        solved = solve_schedule(mdp, sched)
        E, C = layered_pairs(mdp, sched.prefix, sched.tail)
        np.testing.assert_allclose(solved.exec_opt.values.v_exec, E.min(axis=0), atol=1e-6)
        np.testing.assert_allclose(solved.checkin_opt.values.v_checkin, C.min(axis=0), atol=1e-6)


def test_alpha_layer_minimises_scalarised_head():
    rng = np.random.default_rng(11)
    for _ in range(5):
        mdp = random_mdp(rng, n_states=4)
        comp = build_composite(mdp, 2)
        for alpha in (0.2, 0.5, 0.8):
            _, suffix = solve_tail_alpha(comp, alpha)
            _, pair = extend_alpha(suffix, comp, alpha)
            _, E, C = layer_backup(mdp, 2, suffix.v_exec[None], suffix.v_checkin[None])
            scal = alpha * E[0] + (1 - alpha) * C[0]
            got = alpha * pair.v_exec + (1 - alpha) * pair.v_checkin
            np.testing.assert_allclose(got, scal.min(axis=0), atol=1e-9)


def _single_discount_mdp(rng, k):
    mdp = random_mdp(rng, n_states=4)
    return Mdp(mdp.n_states, mdp.n_actions, mdp.transitions, mdp.cost, mdp.goal,
               mdp.gamma_exec, mdp.gamma_exec**k)


def test_alpha_tail_is_on_its_support_line():
    rng = np.random.default_rng(21)
    for k in (1, 2):
        mdp = _single_discount_mdp(rng, k)
        comp = build_composite(mdp, k)
        _, ve, vc = tail_pairs(mdp, k)
        for alpha in (0.1, 0.5, 0.9):
            _, pair = solve_tail_alpha(comp, alpha)
            scal = alpha * ve + (1 - alpha) * vc
            got = alpha * pair.v_exec + (1 - alpha) * pair.v_checkin
            np.testing.assert_allclose(got, scal.min(axis=0), atol=1e-7)
            d = np.full(4, 0.25)
            assert got @ d <= (scal @ d).min() + 1e-7


def test_alpha_matches_blended_value_iteration():
    rng = np.random.default_rng(8)
    mdp = _single_discount_mdp(rng, 2)
    comp = build_composite(mdp, 2)
    alpha = 0.3
    blended = alpha * comp.exec_cost + (1 - alpha) * comp.checkin_cost[None, :]
    v = np.zeros(4)
    for _ in range(5000):
        v = (blended + mdp.gamma_checkin * comp.expected(v)).min(axis=0)
        v[mdp.goal_mask] = 0
    _, pair = solve_tail_alpha(comp, alpha)
    np.testing.assert_allclose(alpha * pair.v_exec + (1 - alpha) * pair.v_checkin, v, atol=1e-7)


def test_alpha_with_agreeing_objectives():
    # cost 1 per step on the only non-goal state: both objectives prefer the same action
    T = np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]])
    mdp = Mdp.from_dense(T, [[1.0, 1.0], [0.0, 0.0]], [1], 0.9, 0.9)
    comp = build_composite(mdp, 1)
    pol, pair = solve_tail_alpha(comp, 0.5)
    pe, ve = solve_tail(comp, "exec")
    assert np.array_equal(pol, pe)
    np.testing.assert_allclose(pair.v_exec, ve)


def test_alpha_bounds():
    comp = build_composite(chain_mdp(), 1)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(InputError):
            solve_tail_alpha(comp, bad)


def test_prepend_matches_per_policy_calls():
    mdp = random_mdp(np.random.default_rng(4), n_states=5)
    c2, c1 = build_composite(mdp, 2), build_composite(mdp, 1)
    base = solve_base(c2, alphas=(0.5,))
    ext = prepend_schedule(base, 1, c1, alphas=(0.5,))
    assert ext.schedule == Schedule((1,), 2)
    layer, ve = extend_value(base.exec_opt.values.v_exec, c1, "exec")
    np.testing.assert_allclose(ext.exec_opt.values.v_exec, ve)
    np.testing.assert_array_equal(ext.exec_opt.layers[0], layer)
    vc = extend_policy_eval(base.exec_opt.values.v_checkin, c1, layer, "checkin")
    np.testing.assert_allclose(ext.exec_opt.values.v_checkin, vc)
    la, pair = extend_alpha(base.policies["alpha=0.5"].values, c1, 0.5)
    np.testing.assert_allclose(ext.policies["alpha=0.5"].values.v_exec, pair.v_exec)
    assert ext.exec_opt.strides == (1, 2)


def test_prepend_same_stride_collapses():
    mdp = random_mdp(np.random.default_rng(4))
    comp = build_composite(mdp, 2)
    base = solve_base(comp)
    ext = prepend_schedule(base, 2, comp)
    assert ext.schedule == base.schedule
    assert len(ext.exec_opt.layers) == 1
    np.testing.assert_allclose(ext.exec_opt.values.v_exec, base.exec_opt.values.v_exec, atol=1e-6)


def test_policy_labels():
    solved = solve_schedule(random_mdp(np.random.default_rng(0)), parse_schedule("1(2)"), (0.25,))
    assert set(solved.policies) == {EXEC_OPT, CHECKIN_OPT, "alpha=0.25"}


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_checkin_values_are_bounded(seed):
    mdp = random_mdp(np.random.default_rng(seed), n_states=5, n_goal=1)
    solved = solve_schedule(mdp, parse_schedule("21(3)"), (0.5,))
    bound = 1.0 / (1.0 - mdp.gamma_checkin)
    for rec in solved.policies.values():
        vc = rec.values.v_checkin
        assert np.all(vc >= -1e-12) and np.all(vc <= bound + 1e-9)
        assert np.all(vc[~mdp.goal_mask] >= 1.0 - 1e-12)
        assert not rec.values.v_exec[mdp.goal_mask].any()
