import itertools

import numpy as np
import pytest

from helpers import oracle_filter, random_dfa, random_event_model, strategy_values
from storyplan.automata import Dfa, literal
from storyplan.errors import ConvergenceError, ImpossibleObservationError, ImproperPolicyError, UnachievableError
from storyplan.event_model import EventModel, fully_hidden, fully_observable
from storyplan.product import BOTTOM, build_goal_pomdp, extract_goal_mdp
from storyplan.solvers import (
    Belief,
    MdpPolicy,
    OnlinePolicy,
    almost_sure_winning_set,
    bellman_residual,
    belief_update,
    observation_likelihood,
    plan_online,
    policy_evaluation,
    q_values,
    solve_mdp,
    value_iteration,
)


def _achievable_instances(rng, count, n_states=3, n_q=3, n_obs=2):
    found = []
    while len(found) < count:
        model, obs = random_event_model(rng, n_states, ("a", "b"), n_obs=n_obs)
        spec = random_dfa(rng, n_q, ("a", "b"))
        p = build_goal_pomdp(model, obs, spec)
        if not p.goal[p.initial] and p.states[p.initial] in almost_sure_winning_set(p):
            found.append((model, obs, spec, p))
    return found


def _policy_oracle(m):
    """Minimum expected steps over every deterministic stationary policy, each solved with numpy."""
    n = len(m.states)
    free = [i for i in range(n) if not m.goal[i]]
    best = np.inf
    for choice in itertools.product(m.actions, repeat=len(free)):
        P = np.zeros((n, n))
        for i, a in zip(free, choice):
            P[i] = m.T[a].toarray()[i]
        # states that reach the goal with probability one under this policy
        A = np.eye(len(free)) - P[np.ix_(free, free)]
        try:
            v = np.linalg.solve(A, np.ones(len(free)))
        except np.linalg.LinAlgError:
            continue
        reach = P[np.ix_(free, free)].sum(axis=1) + P[free][:, m.goal].sum(axis=1)
        if np.any(v < -1e-9) or not np.allclose(reach, 1.0):
            continue
        if np.all(np.abs(A @ v - 1) < 1e-9) and np.linalg.cond(A) < 1e12:
            full = np.zeros(n)
            full[free] = v
            best = min(best, full[m.initial])
    return best


def test_belief_validation(geometric):
    with pytest.raises(ValueError):
        Belief(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        Belief(np.array([-0.1, 1.1]))
    b = Belief(np.array([1.0, 3.0]))
    np.testing.assert_allclose(b.probs, [0.25, 0.75])


def test_likelihood_example(geometric):
    model, spec, _ = geometric
    p = build_goal_pomdp(model, fully_hidden(model), spec)
    b = Belief.initial(p)
    assert observation_likelihood(p, b, "e", BOTTOM) == pytest.approx(0.5)
    assert observation_likelihood(p, b, "e", (False, "none")) == pytest.approx(0.5)
    assert observation_likelihood(p, b, "e", (True, "none")) == 0.0
    with pytest.raises(ImpossibleObservationError):
        belief_update(p, b, "e", (True, "none"))
    b2 = belief_update(p, b, "e", (False, "none"))
    assert b2.as_dict(p) == {("s0", 0): 1.0}
    assert belief_update(p, b, "e", BOTTOM).is_goal(p)


def test_filter_matches_path_enumeration():
    rng = np.random.default_rng(0)
    for model, obs, spec, p in _achievable_instances(rng, 6):
        exact = oracle_filter(model, obs, spec, p.states, 3)
        for hist, joint in exact.items():
            b = Belief.initial(p)
            for a, z in zip(hist[::2], hist[1::2]):
                b = belief_update(p, b, a, z)
            total = sum(joint.values())
            for x, w in joint.items():
                assert abs(b.probs[p.index[x]] - w / total) < 1e-10
            assert abs(b.probs.sum() - 1) < 1e-12


def test_winning_set_example():
    # predicting b first sends the DFA to its sink, so only a is safe
    model = EventModel(("s0", "s1"), {"s0": {"s1": 1.0}, "s1": {"s1": 1.0}}, "s0", ("a", "b"), {"s1": {"a", "b"}})
    spec = literal(["a"], ["a", "b"])
    m = extract_goal_mdp(model, spec, prune=False)
    win = almost_sure_winning_set(m)
    assert ("s0", spec.initial) in win
    sink = [q for q in spec.states if q not in spec.accepting and q != spec.initial][0]
    assert ("s0", sink) not in win and ("s1", sink) not in win
    sol = solve_mdp(m)
    assert sol.value(("s0", spec.initial)) == pytest.approx(1.0)
    assert sol.policy[("s0", spec.initial)] == "a"
    assert np.isinf(sol.value(("s1", sink)))


def test_unachievable_story_raises(geometric):
    model, _, _ = geometric
    spec = literal(["e", "e"], ["e"])
    spec = Dfa(spec.states, spec.alphabet, spec.transitions, spec.initial, frozenset())
    with pytest.raises(UnachievableError) as info:
        solve_mdp(extract_goal_mdp(model, spec))
    assert info.value.exit_code == 4


def test_geometric_value_and_policy_evaluation(geometric):
    model, spec, _ = geometric
    m = extract_goal_mdp(model, spec)
    sol = solve_mdp(m)
    assert abs(sol.initial_value - 2.0) < 1e-9
    v = policy_evaluation(m, {("s0", 0): "e"})
    assert v[m.initial] == pytest.approx(2.0, abs=1e-12)


def test_policy_evaluation_rejects_improper_policies():
    model = EventModel(
        ("s0", "s1", "s2"),
        {"s0": {"s1": 0.5, "s2": 0.5}, "s1": {"s1": 1.0}, "s2": {"s2": 1.0}},
        "s0", ("a", "b"), {"s1": {"a"}, "s2": {"b"}},
    )
    spec = Dfa((0, 1), ("a", "b"), {(0, "a"): 1, (0, "b"): 0, (1, "a"): 1, (1, "b"): 1}, 0, {1})
    m = extract_goal_mdp(model, spec)
    # always predicting b never records a, and s2 never emits a
    bad = {x: "b" for x in m.states if x[1] == 0}
    with pytest.raises(ImproperPolicyError):
        policy_evaluation(m, bad)
    with pytest.raises(ImproperPolicyError):
        policy_evaluation(m, {m.states[m.initial]: "a"})


def test_values_match_policy_enumeration():
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 15:
        model, _ = random_event_model(rng, 2, ("a", "b"))
        spec = random_dfa(rng, 3, ("a", "b"))
        m = extract_goal_mdp(model, spec)
        if m.goal[m.initial] or len(m.states) - m.goal.sum() > 7:
            continue
        oracle = _policy_oracle(m)
        if not np.isfinite(oracle):
            with pytest.raises(UnachievableError):
                solve_mdp(m)
            continue
        sol = solve_mdp(m)
        assert sol.initial_value == pytest.approx(oracle, rel=1e-9, abs=1e-9)
        checked += 1


def test_residual_and_monotone_iterates():
    rng = np.random.default_rng(2)
    for _, _, spec, p in _achievable_instances(rng, 8, 4, 3):
        m = p.as_mdp()
        tol = 1e-9
        sol = solve_mdp(m, tol)
        assert np.max(bellman_residual(m, sol.values)) < 10 * tol
        prev = None
        for k, V in enumerate(value_iteration(m)):
            if prev is not None:
                fin = np.isfinite(V)
                assert np.all(V[fin] >= prev[fin] - 1e-12)
                assert np.all(V[fin] <= sol.values[fin] + 1e-9)
            prev = V
            if k > 50:
                break
        x0 = m.states[m.initial]
        qs = q_values(m, sol.values, x0)
        assert min(qs.values()) == pytest.approx(sol.initial_value)
        assert qs[sol.policy[x0]] == pytest.approx(sol.initial_value)


def test_non_convergence_is_reported(geometric):
    model, spec, _ = geometric
    with pytest.raises(ConvergenceError) as info:
        solve_mdp(extract_goal_mdp(model, spec), tol=1e-9, max_iter=3)
    assert info.value.exit_code == 5


def test_full_observability_beliefs_stay_points():
    rng = np.random.default_rng(3)
    for model, _, spec, _ in _achievable_instances(rng, 5):
        p = build_goal_pomdp(model, fully_observable(model), spec)
        sol = solve_mdp(p.as_mdp())
        pol = MdpPolicy(p, sol)
        b = Belief.initial(p)
        for a in p.actions:
            for z in p.observations:
                try:
                    b2 = belief_update(p, b, a, z)
                except ImpossibleObservationError:
                    continue
                assert b2.probs.max() == 1.0
                if not b2.is_goal(p):
                    assert pol(b2) in p.actions


def test_planner_matches_strategy_enumeration():
    rng = np.random.default_rng(4)
    checked = 0
    for model, _, spec, _ in _achievable_instances(rng, 6, 2, 3):
        p = build_goal_pomdp(model, fully_hidden(model), spec)
        sol = solve_mdp(p.as_mdp())
        V = {x: sol.values[i] for i, x in enumerate(p.states)}
        b = Belief.initial(p)
        for depth in (1, 2, 3):
            vals = strategy_values(p, V, b.as_dict(p), depth)
            best = {a: min(v) for a, v in vals.items()}
            lowest = min(best.values())
            expected = min(a for a, v in best.items() if v <= lowest + 1e-10 * max(1, abs(lowest)))
            assert plan_online(p, sol, b, depth) == expected
            checked += 1
    assert checked == 18


def test_planner_argument_checks(geometric):
    model, spec, _ = geometric
    p = build_goal_pomdp(model, fully_hidden(model), spec)
    sol = solve_mdp(p.as_mdp())
    with pytest.raises(ValueError):
        plan_online(p, sol, Belief.initial(p), depth=0)
    goal = Belief.point(p, ("s1", 1))
    with pytest.raises(ValueError):
        plan_online(p, sol, goal)
    assert plan_online(p, sol, Belief.initial(p)) == "e"
    pol = OnlinePolicy(p, sol, 2)
    assert pol(Belief.initial(p)) == "e"


def test_mdp_policy_refuses_spread_beliefs():
    model = EventModel(("s0", "s1", "s2"), {"s0": {"s1": 0.5, "s2": 0.5}, "s1": {"s1": 1.0}, "s2": {"s2": 1.0}},
                       "s0", ("a",), {"s1": {"a"}, "s2": {"a"}})
    spec = Dfa((0, 1, 2), ("a",), {(0, "a"): 1, (1, "a"): 2, (2, "a"): 2}, 0, {2})
    p = build_goal_pomdp(model, fully_hidden(model), spec)
    sol = solve_mdp(p.as_mdp())
    b = belief_update(p, Belief.initial(p), "a", (True, "none"))
    with pytest.raises(ValueError):
        MdpPolicy(p, sol)(b)
