"""Brute-force oracles and random instance generators shared by the tests.

Nothing here calls into the code paths under test except plain DFA
membership (``Dfa.accepts``) and belief bookkeeping, which each oracle states.
"""

from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np

from storyplan.automata import Dfa
from storyplan.event_model import EventModel, ObservationModel
from storyplan.product import BOTTOM


def all_words(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(sorted(alphabet), repeat=n)


def fold(delta, q0, word):
    q = q0
    for e in word:
        q = delta[(q, e)]
    return q


def random_dfa(rng, n_states, alphabet, p_accept=0.4) -> Dfa:
    alphabet = tuple(sorted(alphabet))
    delta = {(q, e): int(rng.integers(n_states)) for q in range(n_states) for e in alphabet}
    acc = frozenset(q for q in range(n_states) if rng.random() < p_accept)
    return Dfa(tuple(range(n_states)), alphabet, delta, 0, acc)


def bloat(dfa: Dfa, rng, copies=2) -> Dfa:
    """Language-preserving variant: each state split into ``copies`` clones, edges land on random clones."""
    states = [(q, i) for q in dfa.states for i in range(copies)]
    delta = {
        ((q, i), e): (dfa.transitions[(q, e)], int(rng.integers(copies)))
        for q, i in states
        for e in dfa.alphabet
    }
    return Dfa(
        tuple(states),
        dfa.alphabet,
        delta,
        (dfa.initial, 0),
        frozenset((q, i) for q, i in states if q in dfa.accepting),
    )


def is_subsequence(u, w) -> bool:
    it = iter(w)
    return all(any(c == x for x in it) for c in u)


def subsequences(w):
    for mask in itertools.product((0, 1), repeat=len(w)):
        yield tuple(c for c, keep in zip(w, mask) if keep)


def edit_distance(a, b) -> int:
    """Unit-cost Levenshtein distance by dynamic programming."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def edit_ball(w, alphabet, k):
    """All words reachable from ``w`` by at most ``k`` single edits."""
    ball = {tuple(w)}
    frontier = {tuple(w)}
    for _ in range(k):
        nxt = set()
        for u in frontier:
            for i in range(len(u) + 1):
                for c in alphabet:
                    nxt.add(u[:i] + (c,) + u[i:])
            for i in range(len(u)):
                nxt.add(u[:i] + u[i + 1:])
                for c in alphabet:
                    nxt.add(u[:i] + (c,) + u[i + 1:])
        frontier = nxt - ball
        ball |= nxt
    return ball


def levenshtein_member(dfa: Dfa, w, k) -> bool:
    for u in edit_ball(w, dfa.alphabet, k):
        if dfa.accepts(u):
            assert edit_distance(w, u) <= k
            return True
    return False


def good_shots_member(dfa: Dfa, w, e, e_prime, k, saturating=False) -> bool:
    """Choose which e' occurrences were level-climbing substitutes for e.

    Exactly ``k`` climbs are required (at least ``k`` with ``saturating``);
    remaining e' symbols must be ordinary DFA moves.
    """
    spots = [i for i, c in enumerate(w) if c == e_prime]
    sizes = range(k, len(spots) + 1) if saturating else [k]
    for n in sizes:
        for chosen in itertools.combinations(spots, n):
            u = tuple(e if i in chosen else c for i, c in enumerate(w))
            if all(c in dfa.alphabet for c in u) and dfa.accepts(u):
                return True
    return False


def random_event_model(rng, n_states, events, density=0.7, n_obs=None):
    """Random model whose start state carries no events; every row has a self-loop free choice of support."""
    states = tuple(f"s{i}" for i in range(n_states))
    P = {}
    for s in states:
        support = [t for t in states if rng.random() < density] or [states[int(rng.integers(n_states))]]
        w = rng.random(len(support)) + 0.05
        P[s] = dict(zip(support, (w / w.sum()).tolist()))
    labels = {}
    for s in states[1:]:
        labels[s] = {e for e in events if rng.random() < 0.5}
    model = EventModel(states, P, states[0], tuple(events), labels)
    obs = None
    if n_obs:
        ys = tuple(f"y{j}" for j in range(n_obs))
        H = {}
        for s in states:
            w = rng.random(n_obs) * (rng.random(n_obs) < 0.7) + 1e-3 * (rng.random(n_obs) < 0.2)
            if w.sum() == 0:
                w[int(rng.integers(n_obs))] = 1.0
            H[s] = dict(zip(ys, (w / w.sum()).tolist()))
        obs = ObservationModel(ys, H)
    return model, obs


# literal Goal POMDP cases, computed without the product module


def oracle_T(model: EventModel, spec: Dfa, x, e, x2) -> float:
    (s, q), (s2, q2) = x, x2
    if q not in spec.accepting:
        hit = e in model.labeling[s2]
        if hit and q2 == spec.transitions[(q, e)]:
            return model.transition_prob[s].get(s2, 0.0)
        if not hit and q2 == q:
            return model.transition_prob[s].get(s2, 0.0)
        return 0.0
    return 1.0 if (q2 == q and s2 == s) else 0.0


def oracle_O(model: EventModel, obs: ObservationModel, spec: Dfa, e, x, z) -> float:
    s, q = x
    if q in spec.accepting:
        return 1.0 if z == BOTTOM else 0.0
    if z == BOTTOM:
        return 0.0
    r, y = z
    hit = e in model.labeling[s]
    if r == hit:
        return obs.emission_prob[s].get(y, 0.0)
    return 0.0


def oracle_filter(model, obs, spec, states, depth):
    """Exact conditionals over product states by enumerating every state path.

    Returns {(a1, z1, ..., ak, zk): {x: P(x_k = x, z_1..k | a_1..k)}} for k <= depth,
    one entry per observation sequence of positive probability.
    """
    Z = [(r, y) for r in (True, False) for y in obs.observations] + [BOTTOM]
    start = (model.initial, spec.initial)
    out = {}
    # frontier holds (history, path_end, weight) for each explicit path prefix
    frontier = [((), start, 1.0)]
    for _ in range(depth):
        nxt = []
        for hist, x, w in frontier:
            for a in sorted(model.events):
                for x2 in states:
                    t = oracle_T(model, spec, x, a, x2)
                    if t == 0:
                        continue
                    for z in Z:
                        o = oracle_O(model, obs, spec, a, x2, z)
                        if o > 0:
                            nxt.append((hist + (a, z), x2, w * t * o))
        frontier = nxt
        for hist, x, w in frontier:
            out.setdefault(hist, defaultdict(float))[x] += w
    return out


def dict_posterior(p, belief, a):
    """Branches (likelihood, posterior dict) of a dict belief, straight from the case analysis."""
    joint = defaultdict(float)
    for x, w in belief.items():
        for x2 in p.states:
            t = oracle_T(p.model, p.spec, x, a, x2)
            if t == 0:
                continue
            for z in p.observations:
                o = oracle_O(p.model, p.obs, p.spec, a, x2, z)
                if o > 0:
                    joint[z, x2] += w * t * o
    out = {}
    for (z, x2), w in joint.items():
        out.setdefault(z, {})[x2] = w
    branches = []
    for z in p.observations:
        if z in out:
            like = sum(out[z].values())
            branches.append((like, {x: w / like for x, w in out[z].items()}))
    return branches


def strategy_values(p, V, belief, depth):
    """Value of every depth-limited strategy tree from ``belief``, grouped by root action.

    A tree fixes one action per node and one subtree per positive-probability
    observation; leaves score the expected MDP value.  Trees are enumerated
    explicitly with itertools.product, so no minimization happens below the root.
    """
    def leaf(b):
        return sum(w * V[x] for x, w in b.items() if w > 0)

    def all_trees(b, d):
        if d == 0:
            return [leaf(b)]
        out = []
        for vals in by_action(b, d).values():
            out.extend(vals)
        return out

    def by_action(b, d):
        cost = sum(w for x, w in b.items() if not p.spec.is_accepting(x[1]))
        res = {}
        for a in p.actions:
            branches = dict_posterior(p, b, a)
            options = [all_trees(post, d - 1) for _, post in branches]
            likes = [like for like, _ in branches]
            res[a] = [cost + sum(l * v for l, v in zip(likes, combo)) for combo in itertools.product(*options)]
        return res

    return by_action(belief, depth)
