"""Belief filtering, Goal MDP value iteration and a depth-limited belief-tree planner."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceError,
    ImpossibleObservationError,
    ImproperPolicyError,
    UnachievableError,
)
from .product import GoalMdp, GoalPomdp, project_belief

log = logging.getLogger(__name__)

BELIEF_TOL = 1e-12
TIE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Belief:
    """Distribution over the product states of one Goal POMDP, in its state order."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        total = probs.sum()
        if probs.ndim != 1 or total <= 0 or np.any(probs < 0):
            raise ValueError("a belief must be a nonnegative vector with positive mass")
        if abs(total - 1.0) > BELIEF_TOL:
            probs = probs / total
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def initial(cls, p: GoalMdp) -> "Belief":
        probs = np.zeros(len(p.states))
        probs[p.initial] = 1.0
        return cls(probs)

    @classmethod
    def point(cls, p: GoalMdp, x) -> "Belief":
        probs = np.zeros(len(p.states))
        probs[p.index[x]] = 1.0
        return cls(probs)

    def goal_mass(self, p: GoalMdp) -> float:
        return float(self.probs[p.goal].sum())

    def is_goal(self, p: GoalMdp) -> bool:
        return self.goal_mass(p) >= 1.0 - BELIEF_TOL

    def as_dict(self, p: GoalMdp) -> dict:
        return {p.states[i]: float(self.probs[i]) for i in np.flatnonzero(self.probs)}


DENSE_LIMIT = 600


def _transposed(p: GoalMdp) -> dict:
    """T(., a, .) transposed per action; dense for small products where scipy overhead dominates."""
    cache = p.__dict__.setdefault("_transposed", {})
    if not cache:
        for a, m in p.T.items():
            cache[a] = m.T.toarray() if len(p.states) <= DENSE_LIMIT else m.T.tocsr()
    return cache


def predict(p: GoalMdp, b: Belief, a) -> np.ndarray:
    """Sum over x' of T(x', a, x) b(x')."""
    return _transposed(p)[a] @ b.probs


def observation_likelihood(p: GoalPomdp, b: Belief, a, z) -> float:
    return float(p.observation_column(a, z) @ predict(p, b, a))


def belief_update(p: GoalPomdp, b: Belief, a, z) -> Belief:
    joint = p.observation_column(a, z) * predict(p, b, a)
    total = joint.sum()
    if total <= 0:
        raise ImpossibleObservationError(f"observation {z!r} has zero probability after action {a!r}")
    probs = joint / total
    probs.setflags(write=False)
    b2 = object.__new__(Belief)  # already normalized; skip re-validation on the hot path
    object.__setattr__(b2, "probs", probs)
    return b2


# Goal MDP


@dataclass(frozen=True, eq=False)
class MdpSolution:
    """Optimal expected steps per product state (``inf`` outside the winning set) and a greedy policy."""

    states: tuple
    values: np.ndarray
    policy: Mapping  # product state -> action, for finite-value non-goal states
    iterations: int
    residual: float
    initial: int = 0

    def value(self, x) -> float:
        return float(self.values[self.states.index(x)])

    @property
    def initial_value(self) -> float:
        return float(self.values[self.initial])


def _winning_mask(m: GoalMdp) -> np.ndarray:
    win = np.ones(len(m.states), dtype=bool)
    while True:
        outside = (~win).astype(float)
        allowed = {a: (m.T[a] @ outside) == 0 for a in m.actions}
        reach = m.goal & win
        while True:
            hits = reach.astype(float)
            grow = reach.copy()
            for a in m.actions:
                grow |= win & allowed[a] & ((m.T[a] @ hits) > 0)
            if np.array_equal(grow, reach):
                break
            reach = grow
        if np.array_equal(reach, win):
            return win
        win = reach


def almost_sure_winning_set(m: GoalMdp) -> frozenset:
    """Product states from which some policy reaches the goal with probability one."""
    mask = _winning_mask(m)
    return frozenset(m.states[i] for i in np.flatnonzero(mask))


def _allowed(m: GoalMdp, win: np.ndarray) -> np.ndarray:
    outside = (~win).astype(float)
    return np.array([(m.T[a] @ outside) == 0 for a in m.actions])


def _q_matrix(m: GoalMdp, V: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    finite = np.where(np.isfinite(V), V, 0.0)
    Q = np.vstack([m.T[a] @ finite for a in m.actions]) + m.cost
    Q[~allowed] = np.inf
    return Q


def value_iteration(m: GoalMdp, win: np.ndarray | None = None) -> Iterator[np.ndarray]:
    """Bellman iterates from V = 0 restricted to the winning set (``inf`` elsewhere)."""
    win = _winning_mask(m) if win is None else win
    allowed = _allowed(m, win)
    active = win & ~m.goal
    V = np.where(win, 0.0, np.inf)
    while True:
        Q = _q_matrix(m, V, allowed)
        nxt = V.copy()
        nxt[active] = Q[:, active].min(axis=0)
        V = nxt
        yield V


def _greedy(m: GoalMdp, V: np.ndarray, allowed: np.ndarray, active: np.ndarray) -> np.ndarray:
    Q = _q_matrix(m, V, allowed)
    best = Q.min(axis=0)
    near = Q <= best + TIE_RTOL * np.maximum(1.0, np.abs(best))
    choice = np.argmax(near, axis=0)
    return np.where(active, choice, -1)


def bellman_residual(m: GoalMdp, V: np.ndarray) -> np.ndarray:
    """|V(x) - min_a (c + sum T V)| on finite-value non-goal states, 0 elsewhere."""
    win = np.isfinite(V)
    allowed = _allowed(m, win)
    Q = _q_matrix(m, V, allowed)
    active = win & ~m.goal
    out = np.zeros(len(V))
    out[active] = np.abs(V[active] - Q[:, active].min(axis=0))
    return out


def solve_mdp(m: GoalMdp, tol: float = 1e-9, max_iter: int = 10**6) -> MdpSolution:
    """Value iteration for expected steps to the goal.

    States outside the almost-sure winning set get ``inf``.  After the sup-norm
    change drops below ``tol`` the greedy policy is evaluated exactly and its
    values replace the iterate when they are a tighter Bellman fixed point.
    """
    win = _winning_mask(m)
    if not win[m.initial]:
        losing = [m.states[i] for i in np.flatnonzero(~win)]
        raise UnachievableError(
            f"the story cannot be completed with probability one from {m.states[m.initial]!r}; "
            f"{len(losing)} losing product states, e.g. {losing[:5]!r}",
            losing,
        )
    allowed = _allowed(m, win)
    active = win & ~m.goal
    residual = np.inf
    V = np.where(win, 0.0, np.inf)
    iterations = 0
    for iterations, nxt in enumerate(value_iteration(m, win), start=1):
        residual = float(np.max(np.abs(nxt[win] - V[win]), initial=0.0))
        V = nxt
        if residual < tol:
            break
        if iterations >= max_iter:
            raise ConvergenceError(
                f"value iteration did not converge in {max_iter} sweeps (residual {residual:.3g})", residual
            )
    choice = _greedy(m, V, allowed, active)
    policy = {m.states[i]: m.actions[choice[i]] for i in np.flatnonzero(active)}
    try:
        exact = policy_evaluation(m, policy)
    except ImproperPolicyError:
        exact = None
    if exact is not None:
        if np.max(bellman_residual(m, exact), initial=0.0) <= np.max(bellman_residual(m, V), initial=0.0):
            V = exact
            choice = _greedy(m, V, allowed, active)
            policy = {m.states[i]: m.actions[choice[i]] for i in np.flatnonzero(active)}
    log.debug("value iteration: %d sweeps, residual %.3g", iterations, residual)
    V.setflags(write=False)
    return MdpSolution(m.states, V, policy, iterations, residual, m.initial)


def policy_evaluation(m: GoalMdp, policy: Mapping) -> np.ndarray:
    """Expected steps under a fixed policy by a direct linear solve.

    ``policy`` maps non-goal product states to actions; states that are
    neither goal nor in the policy get ``inf`` and must not be reachable
    from the policy's domain.
    """
    n = len(m.states)
    dom = np.zeros(n, dtype=bool)
    for x, a in policy.items():
        i = m.index[x]
        if m.goal[i]:
            continue
        dom[i] = True
    idx = np.flatnonzero(dom)
    P = sp.lil_matrix((n, n))
    for i in idx:
        a = policy[m.states[i]]
        for j, pr in m.successors(i, a):
            P[i, j] = pr
    P = P.tocsr()
    closed = dom | m.goal
    leak = (P @ (~closed).astype(float)) > 0
    if np.any(leak):
        raise ImproperPolicyError(f"policy leaves its domain from {m.states[int(np.flatnonzero(leak)[0])]!r}")
    # goal must stay reachable from every state of the domain
    reach = m.goal.copy()
    while True:
        grow = reach | (dom & ((P @ reach.astype(float)) > 0))
        if np.array_equal(grow, reach):
            break
        reach = grow
    if not np.all(reach[dom]):
        bad = int(np.flatnonzero(dom & ~reach)[0])
        raise ImproperPolicyError(f"policy never reaches the goal from {m.states[bad]!r}")
    values = np.full(n, np.inf)
    values[m.goal] = 0.0
    if idx.size:
        A = sp.identity(idx.size, format="csc") - P[idx][:, idx].tocsc()
        sol = spla.spsolve(A, np.ones(idx.size))
        sol = np.atleast_1d(sol)
        if not np.all(np.isfinite(sol)):
            raise ImproperPolicyError("policy evaluation system is singular")
        values[idx] = sol
    return values


def q_values(m: GoalMdp, V: np.ndarray, x) -> dict:
    i = m.index[x]
    win = np.isfinite(V)
    Q = _q_matrix(m, V, _allowed(m, win))
    return {a: float(Q[k, i]) for k, a in enumerate(m.actions)}


# online planning


def _argmin(values, actions):
    best = min(values)
    if not np.isfinite(best):
        return None
    cut = best + TIE_RTOL * max(1.0, abs(best))
    for a, v in zip(actions, values):
        if v <= cut:
            return a


class BeliefTreePlanner:
    """Exact expectimax over the belief tree with expected-MDP-value leaves.

    Node values are memoized on the belief's bytes, which is safe because the
    value of a belief at a given remaining depth never changes.
    """

    max_cache = 2_000_000

    def __init__(self, pomdp: GoalPomdp, solution: MdpSolution, depth: int = 6):
        if depth < 1:
            raise ValueError("planning depth must be at least 1")
        if len(solution.values) != len(pomdp.states) or solution.states != pomdp.states:
            raise ValueError("MDP solution does not belong to this product")
        self.pomdp = pomdp
        self.depth = depth
        self.V = np.asarray(solution.values)
        self._finite = np.isfinite(self.V)
        self._Vf = np.where(self._finite, self.V, 0.0)
        self._TT = _transposed(pomdp)
        self._O = {a: pomdp.observation_matrix(a) for a in pomdp.actions}
        self._cache: dict = {}

    def heuristic(self, probs: np.ndarray) -> float:
        if np.any((probs > 0) & ~self._finite):
            return np.inf
        return float(probs @ self._Vf)

    def _branches(self, probs, a):
        joint = (self._TT[a] @ probs)[:, None] * self._O[a]
        like = joint.sum(axis=0)
        for k in np.flatnonzero(like > 0):
            yield like[k], joint[:, k] / like[k]

    def q(self, probs: np.ndarray, a, depth: int) -> float:
        goal = float(probs[self.pomdp.goal].sum())
        total = 1.0 - goal
        for like, post in self._branches(probs, a):
            total += like * self.value(post, depth - 1)
        return total

    def value(self, probs: np.ndarray, depth: int) -> float:
        if probs[self.pomdp.goal].sum() >= 1.0 - BELIEF_TOL:
            return 0.0
        if depth == 0:
            return self.heuristic(probs)
        key = (probs.tobytes(), depth)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        v = min(self.q(probs, a, depth) for a in self.pomdp.actions)
        if len(self._cache) > self.max_cache:
            self._cache.clear()
        self._cache[key] = v
        return v

    def plan(self, b: Belief, depth: int | None = None):
        depth = self.depth if depth is None else depth
        if depth < 1:
            raise ValueError("planning depth must be at least 1")
        probs = b.probs
        if probs[self.pomdp.goal].sum() >= 1.0 - BELIEF_TOL:
            raise ValueError("no decision is needed at a goal belief")
        qs = [self.q(probs, a, depth) for a in self.pomdp.actions]
        a = _argmin(qs, self.pomdp.actions)
        if a is None:
            raise UnachievableError("every action has infinite expected time from this belief")
        return a


def plan_online(p: GoalPomdp, mdp_values: MdpSolution, b: Belief, depth: int = 6):
    """Receding-horizon action for belief ``b``; ties go to the alphabetically first action."""
    return BeliefTreePlanner(p, mdp_values, depth).plan(b)


# policy handles used by the simulator


class MdpPolicy:
    """Optimal Goal MDP policy applied to single-outcome beliefs (full observability only)."""

    def __init__(self, pomdp: GoalMdp, solution: MdpSolution):
        self.pomdp = pomdp
        self.solution = solution

    def __call__(self, b: Belief):
        i = int(np.argmax(b.probs))
        if b.probs[i] < 1.0 - BELIEF_TOL:
            d, _ = project_belief(self.pomdp, b)
            if d.max() < 1.0 - BELIEF_TOL:
                raise ValueError("the MDP policy needs a single-outcome belief; use an online planner")
        x = self.pomdp.states[i]
        try:
            return self.solution.policy[x]
        except KeyError:
            raise UnachievableError(f"no finite-time action from {x!r}", [x]) from None


class OnlinePolicy:
    def __init__(self, pomdp: GoalPomdp, solution: MdpSolution, depth: int = 6):
        self.pomdp = pomdp
        self.planner = BeliefTreePlanner(pomdp, solution, depth)
        self._decisions: dict = {}

    def __call__(self, b: Belief):
        key = b.probs.tobytes()
        a = self._decisions.get(key)
        if a is None:
            a = self._decisions[key] = self.planner.plan(b)
        return a
