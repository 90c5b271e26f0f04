"""Goal POMDP / Goal MDP built from an event model, a channel and a story DFA.

Product states are pairs ``(s, q)``.  Predicting event ``e`` moves the DFA
along ``e`` only when ``e`` is among the events of the successor event-model
state; DFA-accepting pairs are absorbing and cost nothing.  Observations are
``(hit, y)`` pairs, plus :data:`BOTTOM` which is seen exactly on goal states.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .automata import Dfa
from .errors import AlphabetError, BeliefInvariantError
from .event_model import EventModel, ObservationModel, check, fully_observable

BOTTOM = "BOTTOM"
ROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GoalMdp:
    model: EventModel
    spec: Dfa
    states: tuple  # product states (s, q), index order
    actions: tuple
    initial: int
    T: dict  # action -> csr matrix, T[a][x, x']
    goal: np.ndarray  # bool mask over states

    @cached_property
    def index(self) -> dict:
        return {x: i for i, x in enumerate(self.states)}

    @cached_property
    def s_index(self) -> np.ndarray:
        return np.array([self.model.index[s] for s, _ in self.states], dtype=np.intp)

    @cached_property
    def hit(self) -> np.ndarray:
        """``hit[a, x]`` is true when action ``a`` names an event of the state entered at ``x``."""
        out = np.zeros((len(self.actions), len(self.states)), dtype=bool)
        for i, (s, _) in enumerate(self.states):
            label = self.model.labeling[s]
            for k, a in enumerate(self.actions):
                out[k, i] = a in label
        return out

    @property
    def cost(self) -> np.ndarray:
        return (~self.goal).astype(float)

    def action_index(self, a) -> int:
        try:
            return self.actions.index(a)
        except ValueError:
            raise AlphabetError(f"action {a!r} is not one of {list(self.actions)}") from None

    def transition_prob(self, x, a, x2) -> float:
        i, j = self.index.get(x), self.index.get(x2)
        if i is None or j is None:
            return 0.0
        return float(self.T[a][i, j])

    def cost_of(self, x, a) -> float:
        return 0.0 if self.goal[self.index[x]] else 1.0

    def successors(self, i: int, a) -> list[tuple[int, float]]:
        row = self.T[a]
        lo, hi = row.indptr[i], row.indptr[i + 1]
        return list(zip(row.indices[lo:hi].tolist(), row.data[lo:hi].tolist()))

    def summary(self) -> dict:
        return {
            "states": len(self.states),
            "actions": len(self.actions),
            "goal_states": int(self.goal.sum()),
            "transitions_nonzero": int(sum(m.nnz for m in self.T.values())),
        }


@dataclass(frozen=True, eq=False)
class GoalPomdp(GoalMdp):
    obs: ObservationModel = field(default=None)

    @cached_property
    def observations(self) -> tuple:
        ys = self.obs.observations
        return tuple((True, y) for y in ys) + tuple((False, y) for y in ys) + (BOTTOM,)

    @cached_property
    def obs_index(self) -> dict:
        return {z: i for i, z in enumerate(self.observations)}

    @cached_property
    def emission(self) -> np.ndarray:
        """h(s, y) per product state, shape (|X|, |Y|)."""
        return self.obs.matrix(self.model.states)[self.s_index]

    @cached_property
    def _columns(self) -> dict:
        return {}

    def observation_column(self, a, z) -> np.ndarray:
        """O(a, x, z) for every x."""
        key = (a, z)
        col = self._columns.get(key)
        if col is None:
            if z == BOTTOM:
                col = self.goal.astype(float)
            else:
                r, y = z
                k = self.action_index(a)
                try:
                    j = self.obs.observations.index(y)
                except ValueError:
                    raise KeyError(f"unknown observation {z!r}") from None
                mask = (~self.goal) & (self.hit[k] == bool(r))
                col = np.where(mask, self.emission[:, j], 0.0)
            col.setflags(write=False)
            self._columns[key] = col
        return col

    @cached_property
    def _observation_matrices(self) -> dict:
        return {}

    def observation_matrix(self, a) -> np.ndarray:
        """Dense O(a, ., .) with shape (|X|, |Z|), materialized on first use."""
        cache = self._observation_matrices
        if a not in cache:
            k = self.action_index(a)
            nongoal = ~self.goal
            hit = self.hit[k] & nongoal
            miss = (~self.hit[k]) & nongoal
            m = np.hstack(
                [self.emission * hit[:, None], self.emission * miss[:, None], self.goal[:, None].astype(float)]
            )
            m.setflags(write=False)
            cache[a] = m
        return cache[a]

    def observation_prob(self, a, x, z) -> float:
        i = self.index[x]
        s, q = x
        if self.spec.is_accepting(q):
            return 1.0 if z == BOTTOM else 0.0
        if z == BOTTOM:
            return 0.0
        r, y = z
        hit = a in self.model.labeling[s]
        if bool(r) != hit:
            return 0.0
        return float(self.emission[i, self.obs.observations.index(y)])

    def summary(self) -> dict:
        out = super().summary()
        out["observations"] = len(self.observations)
        out["observations_nonzero"] = int(
            sum(np.count_nonzero(self.observation_matrix(a)) for a in self.actions)
        )
        return out

    def as_mdp(self) -> GoalMdp:
        return GoalMdp(self.model, self.spec, self.states, self.actions, self.initial, self.T, self.goal)


def _successors(model: EventModel, spec: Dfa, s, q, e):
    if spec.is_accepting(q):
        return [((s, q), 1.0)]
    out = []
    moved = spec.step(q, e)
    for t, p in model.transition_prob[s].items():
        if p > 0:
            out.append(((t, moved if e in model.labeling[t] else q), p))
    return out


def _build(model: EventModel, spec: Dfa, prune: bool):
    if set(spec.alphabet) != set(model.events):
        raise AlphabetError(
            f"specification alphabet {list(spec.alphabet)} differs from model events {list(model.events)}"
        )
    actions = tuple(model.events)
    start = (model.initial, spec.initial)
    if prune:
        order = {start: 0}
        queue = deque([start])
        while queue:
            s, q = queue.popleft()
            for e in actions:
                for x2, _ in _successors(model, spec, s, q, e):
                    if x2 not in order:
                        order[x2] = len(order)
                        queue.append(x2)
        states = tuple(order)
    else:
        states = tuple((s, q) for s in model.states for q in spec.states)
        order = {x: i for i, x in enumerate(states)}
    n = len(states)
    T = {}
    for e in actions:
        rows, cols, vals = [], [], []
        for i, (s, q) in enumerate(states):
            for x2, p in _successors(model, spec, s, q, e):
                rows.append(i)
                cols.append(order[x2])
                vals.append(p)
        m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        m.sum_duplicates()
        m.eliminate_zeros()
        T[e] = m
        sums = np.asarray(m.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            raise AssertionError(f"transition rows not stochastic for action {e!r} at {states[bad[0]]!r}")
    goal = np.array([spec.is_accepting(q) for _, q in states], dtype=bool)
    goal.setflags(write=False)
    return dict(
        model=model, spec=spec, states=states, actions=actions, initial=order[start], T=T, goal=goal
    )


def build_goal_pomdp(model: EventModel, obs: ObservationModel, spec: Dfa, prune: bool = True) -> GoalPomdp:
    """Product of event model, channel and specification.

    With ``prune`` only pairs reachable from the start pair are kept.
    """
    check(model, obs)
    pomdp = GoalPomdp(obs=obs, **_build(model, spec, prune))
    for a in pomdp.actions:
        sums = pomdp.observation_matrix(a).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_TOL):
            raise AssertionError(f"observation rows not stochastic for action {a!r}")
    return pomdp


def extract_goal_mdp(model: EventModel, spec: Dfa, prune: bool = True) -> GoalMdp:
    """The fully observable Goal MDP: same states, transitions and costs, no observations."""
    check(model, fully_observable(model))
    return GoalMdp(**_build(model, spec, prune))


def project_belief(p: GoalMdp, b) -> tuple[np.ndarray, object]:
    """Split a product belief into a distribution over event-model states and its single DFA state."""
    probs = np.asarray(getattr(b, "probs", b), dtype=float)
    support = np.flatnonzero(probs > 0)
    qs = {p.states[i][1] for i in support}
    if len(qs) != 1:
        raise BeliefInvariantError(f"belief support spans DFA states {sorted(map(str, qs))}")
    (q,) = qs
    d = np.zeros(len(p.model.states))
    np.add.at(d, p.s_index[support], probs[support])
    return d, q


def to_dict(p: GoalMdp) -> dict:
    """Sparse product document, product state ``(s, q)`` written as ``"s|q"``."""
    name = [f"{s}|{q}" for s, q in p.states]
    doc = {
        "states": name,
        "actions": list(p.actions),
        "initial": name[p.initial],
        "goal": [name[i] for i in np.flatnonzero(p.goal)],
        "transitions": [
            {"from": name[i], "action": a, "to": name[j], "prob": pr}
            for a in p.actions
            for i in range(len(p.states))
            for j, pr in p.successors(i, a)
        ],
    }
    if isinstance(p, GoalPomdp):
        doc["observations"] = [z if z == BOTTOM else [z[0], z[1]] for z in p.observations]
        doc["observation_probs"] = []
        for a in p.actions:
            m = p.observation_matrix(a)
            for i, k in zip(*np.nonzero(m)):
                z = p.observations[k]
                doc["observation_probs"].append(
                    {"action": a, "state": name[i], "obs": z if z == BOTTOM else [z[0], z[1]], "prob": float(m[i, k])}
                )
    return doc
