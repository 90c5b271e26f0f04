"""Finite automata over event alphabets and the specification mutators.

Every :class:`Dfa` is total: missing transitions are routed to a sink state
added at construction time.  Alphabets are kept as sorted tuples so that all
iteration (subset construction, minimization, pair exploration) happens in a
fixed order and results are reproducible.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from itertools import product as cartesian
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import AlphabetError, ExpressionError

State = Hashable
Event = str

SINK = "__sink__"


@dataclass(frozen=True, eq=False)
class Dfa:
    states: tuple
    alphabet: tuple
    transitions: Mapping[tuple, State]
    initial: State
    accepting: frozenset

    def __post_init__(self):
        states = list(dict.fromkeys(self.states))
        alphabet = tuple(sorted(set(self.alphabet)))
        delta = dict(self.transitions)
        if self.initial not in states:
            raise ValueError(f"initial state {self.initial!r} is not a state")
        accepting = frozenset(self.accepting)
        if not accepting <= set(states):
            raise ValueError(f"accepting states {sorted(map(str, accepting - set(states)))} are not states")
        for (q, e), r in delta.items():
            if q not in states or r not in states:
                raise ValueError(f"transition ({q!r}, {e!r}) -> {r!r} uses an unknown state")
            if e not in alphabet:
                raise AlphabetError(f"transition ({q!r}, {e!r}) uses an event outside the alphabet")
        missing = [(q, e) for q in states for e in alphabet if (q, e) not in delta]
        if missing:
            sink = SINK
            while sink in states:
                sink = "_" + sink
            states.append(sink)
            for key in missing:
                delta[key] = sink
            for e in alphabet:
                delta[(sink, e)] = sink
        object.__setattr__(self, "states", tuple(states))
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "transitions", delta)
        object.__setattr__(self, "accepting", accepting)

    def step(self, q: State, e: Event) -> State:
        try:
            return self.transitions[(q, e)]
        except KeyError:
            if e not in self.alphabet:
                raise AlphabetError(f"event {e!r} is not in the alphabet {list(self.alphabet)}") from None
            raise

    def run(self, word: Iterable[Event], start: State | None = None) -> State:
        q = self.initial if start is None else start
        for e in word:
            q = self.step(q, e)
        return q

    def accepts(self, word: Iterable[Event]) -> bool:
        return self.run(word) in self.accepting

    def is_accepting(self, q: State) -> bool:
        return q in self.accepting

    def reachable(self) -> list:
        seen = {self.initial: None}
        queue = deque([self.initial])
        while queue:
            q = queue.popleft()
            for e in self.alphabet:
                r = self.transitions[(q, e)]
                if r not in seen:
                    seen[r] = None
                    queue.append(r)
        return list(seen)

    def __len__(self):
        return len(self.states)

    def __repr__(self):
        return (
            f"Dfa(states={len(self.states)}, alphabet={list(self.alphabet)}, "
            f"initial={self.initial!r}, accepting={len(self.accepting)})"
        )

    # serialization

    def to_dict(self) -> dict:
        for q in self.states:
            if not isinstance(q, (str, int)):
                raise ValueError(f"state {q!r} is not serializable; relabel() first")
        return {
            "alphabet": list(self.alphabet),
            "states": list(self.states),
            "initial": self.initial,
            "accepting": [q for q in self.states if q in self.accepting],
            "transitions": [
                {"from": q, "event": e, "to": self.transitions[(q, e)]}
                for q in self.states
                for e in self.alphabet
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Dfa":
        try:
            delta = {}
            for t in doc.get("transitions", []):
                key = (t["from"], t["event"])
                if key in delta and delta[key] != t["to"]:
                    raise ExpressionError(f"nondeterministic transition on {key!r}")
                delta[key] = t["to"]
            return cls(
                states=tuple(doc["states"]),
                alphabet=tuple(doc["alphabet"]),
                transitions=delta,
                initial=doc["initial"],
                accepting=frozenset(doc.get("accepting", [])),
            )
        except KeyError as exc:
            raise ExpressionError(f"automaton document is missing field {exc.args[0]!r}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Dfa":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ExpressionError(f"invalid automaton document: {exc.msg}", exc.pos) from None
        return cls.from_dict(doc)


@dataclass(frozen=True, eq=False)
class Nfa:
    states: tuple
    alphabet: tuple
    transitions: Mapping[tuple, frozenset]
    initial: frozenset
    accepting: frozenset
    epsilon: Mapping[State, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(sorted(set(self.alphabet))))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "accepting", frozenset(self.accepting))
        known = set(self.states)
        if not self.initial <= known or not self.accepting <= known:
            raise ValueError("initial and accepting sets must be subsets of the states")

    def closure(self, qs: Iterable[State]) -> frozenset:
        out = set(qs)
        stack = list(out)
        while stack:
            q = stack.pop()
            for r in self.epsilon.get(q, ()):
                if r not in out:
                    out.add(r)
                    stack.append(r)
        return frozenset(out)

    def move(self, qs: Iterable[State], e: Event) -> frozenset:
        nxt = set()
        for q in qs:
            nxt.update(self.transitions.get((q, e), ()))
        return self.closure(nxt)

    def accepts(self, word: Iterable[Event]) -> bool:
        current = self.closure(self.initial)
        for e in word:
            if e not in self.alphabet:
                raise AlphabetError(f"event {e!r} is not in the alphabet {list(self.alphabet)}")
            current = self.move(current, e)
        return bool(current & self.accepting)


def as_nfa(dfa: Dfa) -> Nfa:
    return Nfa(
        states=dfa.states,
        alphabet=dfa.alphabet,
        transitions={k: frozenset([v]) for k, v in dfa.transitions.items()},
        initial=frozenset([dfa.initial]),
        accepting=dfa.accepting,
    )


def run(dfa: Dfa, word: Iterable[Event]) -> State:
    return dfa.run(word)


def accepts(dfa: Dfa, word: Iterable[Event]) -> bool:
    return dfa.accepts(word)


def determinize(nfa: Nfa) -> Dfa:
    """Subset construction; the empty subset, when reached, is the sink."""
    start = nfa.closure(nfa.initial)
    index = {start: 0}
    queue = deque([start])
    delta = {}
    while queue:
        subset = queue.popleft()
        for e in nfa.alphabet:
            nxt = nfa.move(subset, e)
            if nxt not in index:
                index[nxt] = len(index)
                queue.append(nxt)
            delta[(index[subset], e)] = index[nxt]
    return Dfa(
        states=tuple(range(len(index))),
        alphabet=nfa.alphabet,
        transitions=delta,
        initial=0,
        accepting=frozenset(i for s, i in index.items() if s & nfa.accepting),
    )


def _renumber(dfa: Dfa, states: Sequence, block_of: Mapping, blocks_accepting) -> Dfa:
    order = {}
    queue = deque([block_of[dfa.initial]])
    order[block_of[dfa.initial]] = 0
    rep = {}
    for q in states:
        rep.setdefault(block_of[q], q)
    delta = {}
    while queue:
        b = queue.popleft()
        for e in dfa.alphabet:
            nb = block_of[dfa.transitions[(rep[b], e)]]
            if nb not in order:
                order[nb] = len(order)
                queue.append(nb)
            delta[(order[b], e)] = order[nb]
    return Dfa(
        states=tuple(range(len(order))),
        alphabet=dfa.alphabet,
        transitions=delta,
        initial=0,
        accepting=frozenset(order[b] for b in order if blocks_accepting(rep[b])),
    )


def minimize(dfa: Dfa) -> Dfa:
    """Minimal total DFA with states renumbered 0..n-1 in BFS order from the initial state.

    Unreachable states are dropped first, then Moore partition refinement
    merges Myhill-Nerode equivalent states.  The BFS renumbering makes the
    output canonical, so equal languages give identical transition tables.
    """
    states = dfa.reachable()
    block = {q: int(q in dfa.accepting) for q in states}
    n_blocks = len(set(block.values()))
    while True:
        signatures = {}
        new_block = {}
        for q in states:
            sig = (block[q],) + tuple(block[dfa.transitions[(q, e)]] for e in dfa.alphabet)
            new_block[q] = signatures.setdefault(sig, len(signatures))
        block = new_block
        if len(signatures) == n_blocks:
            break
        n_blocks = len(signatures)
    return _renumber(dfa, states, block, dfa.is_accepting)


def isomorphic(d1: Dfa, d2: Dfa) -> bool:
    if d1.alphabet != d2.alphabet:
        return False
    r1, r2 = d1.reachable(), d2.reachable()
    if len(r1) != len(r2):
        return False
    mapping = {d1.initial: d2.initial}
    queue = deque([d1.initial])
    while queue:
        q = queue.popleft()
        if d1.is_accepting(q) != d2.is_accepting(mapping[q]):
            return False
        for e in d1.alphabet:
            a, b = d1.transitions[(q, e)], d2.transitions[(mapping[q], e)]
            if a in mapping:
                if mapping[a] != b:
                    return False
            else:
                mapping[a] = b
                queue.append(a)
    return len(set(mapping.values())) == len(mapping)


def relabel(dfa: Dfa) -> Dfa:
    """Rename states to 0..n-1 in BFS order, keeping every state (reachable ones first)."""
    order = {q: i for i, q in enumerate(dfa.reachable())}
    for q in dfa.states:
        order.setdefault(q, len(order))
    return Dfa(
        states=tuple(range(len(order))),
        alphabet=dfa.alphabet,
        transitions={(order[q], e): order[r] for (q, e), r in dfa.transitions.items()},
        initial=order[dfa.initial],
        accepting=frozenset(order[q] for q in dfa.accepting),
    )


def _require_same_alphabet(d1, d2):
    if set(d1.alphabet) != set(d2.alphabet):
        raise AlphabetError(
            f"alphabets differ: {list(d1.alphabet)} vs {list(d2.alphabet)}"
        )


def product(d1: Dfa, d2: Dfa, accept=lambda a, b: a and b) -> Dfa:
    """Reachable synchronous product; ``accept`` combines the two acceptance flags."""
    _require_same_alphabet(d1, d2)
    start = (d1.initial, d2.initial)
    seen = {start: None}
    queue = deque([start])
    delta = {}
    while queue:
        p, q = pair = queue.popleft()
        for e in d1.alphabet:
            nxt = (d1.transitions[(p, e)], d2.transitions[(q, e)])
            delta[(pair, e)] = nxt
            if nxt not in seen:
                seen[nxt] = None
                queue.append(nxt)
    return Dfa(
        states=tuple(seen),
        alphabet=d1.alphabet,
        transitions=delta,
        initial=start,
        accepting=frozenset(
            (p, q) for p, q in seen if accept(d1.is_accepting(p), d2.is_accepting(q))
        ),
    )


def complement(dfa: Dfa) -> Dfa:
    return Dfa(
        states=dfa.states,
        alphabet=dfa.alphabet,
        transitions=dfa.transitions,
        initial=dfa.initial,
        accepting=frozenset(q for q in dfa.states if q not in dfa.accepting),
    )


def is_empty(dfa: Dfa) -> bool:
    return not any(dfa.is_accepting(q) for q in dfa.reachable())


def universal(alphabet: Iterable[Event]) -> Dfa:
    alphabet = tuple(alphabet)
    return Dfa((0,), alphabet, {(0, e): 0 for e in alphabet}, 0, frozenset([0]))


def literal(word: Sequence[Event], alphabet: Iterable[Event]) -> Dfa:
    """DFA accepting exactly ``word``."""
    alphabet = tuple(alphabet)
    for e in word:
        if e not in alphabet:
            raise AlphabetError(f"event {e!r} is not in the alphabet {list(alphabet)}")
    delta = {(i, e): i + 1 for i, e in enumerate(word)}
    return Dfa(tuple(range(len(word) + 1)), alphabet, delta, 0, frozenset([len(word)]))


# mutators


def mutate_supersequence(dfa: Dfa) -> Dfa:
    """Words having some word of the language as a subsequence."""
    delta = {}
    for (q, e), r in dfa.transitions.items():
        delta[(q, e)] = frozenset([r, q])
    nfa = Nfa(dfa.states, dfa.alphabet, delta, frozenset([dfa.initial]), dfa.accepting)
    return minimize(determinize(nfa))


def mutate_intersection(d1: Dfa, d2: Dfa) -> Dfa:
    return minimize(product(d1, d2))


def mutate_levenshtein(dfa: Dfa, k: int) -> Dfa:
    """Words within unit-cost edit distance ``k`` of the language.

    NFA states are (dfa state, edits used).  On an input symbol we may match,
    substitute (advance the DFA on any symbol) or treat the symbol as an
    insertion (stay put); a deletion advances the DFA without consuming input.
    """
    if k < 0:
        raise ValueError("edit budget must be nonnegative")
    states = tuple(cartesian(dfa.states, range(k + 1)))
    delta: dict = {}
    eps: dict = {}
    for q, i in states:
        for a in dfa.alphabet:
            targets = {(dfa.transitions[(q, a)], i)}
            if i < k:
                targets.add((q, i + 1))
                targets.update((dfa.transitions[(q, b)], i + 1) for b in dfa.alphabet)
            delta[((q, i), a)] = frozenset(targets)
        if i < k:
            eps[(q, i)] = frozenset((dfa.transitions[(q, b)], i + 1) for b in dfa.alphabet)
    nfa = Nfa(
        states=states,
        alphabet=dfa.alphabet,
        transitions=delta,
        initial=frozenset([(dfa.initial, 0)]),
        accepting=frozenset((q, i) for q, i in states if q in dfa.accepting),
        epsilon=eps,
    )
    return minimize(determinize(nfa))


def good_shots_nfa(dfa: Dfa, e: Event, e_prime: Event, k: int, saturating: bool = False) -> Nfa:
    """The leveled NFA behind :func:`mutate_good_shots`, states are (q, level)."""
    if e == e_prime:
        raise ValueError("the superior event must differ from the replaced one")
    if k < 1:
        raise ValueError("k must be positive")
    if e not in dfa.alphabet:
        raise AlphabetError(f"event {e!r} is not in the alphabet {list(dfa.alphabet)}")
    alphabet = tuple(sorted(set(dfa.alphabet) | {e_prime}))
    top = k + 1
    states = tuple(cartesian(dfa.states, range(1, top + 1)))
    delta: dict = {}
    for q, level in states:
        for a in dfa.alphabet:
            delta.setdefault(((q, level), a), set()).add((dfa.transitions[(q, a)], level))
        if level < top:
            delta.setdefault(((q, level), e_prime), set()).add((dfa.transitions[(q, e)], level + 1))
        elif saturating:
            delta.setdefault(((q, level), e_prime), set()).add((dfa.transitions[(q, e)], level))
    return Nfa(
        states=states,
        alphabet=alphabet,
        transitions={key: frozenset(v) for key, v in delta.items()},
        initial=frozenset([(dfa.initial, 1)]),
        accepting=frozenset((q, top) for q in dfa.accepting),
    )


def mutate_good_shots(dfa: Dfa, e: Event, e_prime: Event, k: int, saturating: bool = False) -> Dfa:
    """Copy ``dfa`` into k+1 levels; an ``e_prime`` edge parallel to each ``e`` edge climbs a level.

    Accepting states exist only on the top level, so at least ``k`` occurrences
    of ``e`` must have been captured as ``e_prime``.  Without ``saturating`` the
    top level offers no ``e_prime`` substitute (the literal level construction).
    """
    return minimize(determinize(good_shots_nfa(dfa, e, e_prime, k, saturating)))


# equivalence


@dataclass(frozen=True)
class BisimWitness:
    equivalent: bool
    relation: frozenset | None = None
    counterexample: tuple | None = None

    def __bool__(self):
        return self.equivalent


def language_equivalent(d1: Dfa, d2: Dfa) -> BisimWitness:
    """Explore state pairs breadth-first from the initial pair.

    Symbols are tried in alphabet order, so the first pair found with differing
    acceptance carries the shortlex-least distinguishing word.  If none exists
    the explored pairs form a bisimulation relation.
    """
    _require_same_alphabet(d1, d2)
    start = (d1.initial, d2.initial)
    word_of = {start: ()}
    queue = deque([start])
    while queue:
        p, q = pair = queue.popleft()
        if d1.is_accepting(p) != d2.is_accepting(q):
            return BisimWitness(False, counterexample=word_of[pair])
        for e in d1.alphabet:
            nxt = (d1.transitions[(p, e)], d2.transitions[(q, e)])
            if nxt not in word_of:
                word_of[nxt] = word_of[pair] + (e,)
                queue.append(nxt)
    return BisimWitness(True, relation=frozenset(word_of))


def is_bisimulation(relation: Iterable[tuple], d1: Dfa, d2: Dfa) -> bool:
    rel = set(relation)
    for p, q in rel:
        if p not in d1.states or q not in d2.states:
            return False
        if d1.is_accepting(p) != d2.is_accepting(q):
            return False
        for e in d1.alphabet:
            if (d1.transitions[(p, e)], d2.transitions[(q, e)]) not in rel:
                return False
    return True


# regular expressions over event names

_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z0-9_']+)|(?P<op>[()|*+?]))")


class _RegexParser:
    """Recursive descent: alt := cat ('|' cat)*, cat := rep+, rep := atom ('*'|'+'|'?')*."""

    def __init__(self, text: str, alphabet: tuple):
        self.tokens = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise ExpressionError(f"unexpected character {text[pos]!r}", pos)
            self.tokens.append((m.group("name") or m.group("op"), m.start(m.lastindex)))
            pos = m.end()
        self.i = 0
        self.alphabet = alphabet
        self.counter = 0
        self.delta: dict = {}
        self.eps: dict = {}

    def new(self):
        self.counter += 1
        return self.counter - 1

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def parse(self):
        if not self.tokens:
            s = self.new()
            return s, s
        frag = self.alt()
        if self.i != len(self.tokens):
            tok, pos = self.tokens[self.i]
            raise ExpressionError(f"unexpected token {tok!r}", pos)
        return frag

    def link(self, a, b):
        self.eps.setdefault(a, set()).add(b)

    def alt(self):
        s, f = self.new(), self.new()
        while True:
            a, b = self.cat()
            self.link(s, a)
            self.link(b, f)
            if self.peek() != "|":
                return s, f
            self.i += 1

    def cat(self):
        frag = None
        while self.peek() not in (None, "|", ")"):
            nxt = self.rep()
            if frag is None:
                frag = nxt
            else:
                self.link(frag[1], nxt[0])
                frag = (frag[0], nxt[1])
        if frag is None:
            pos = self.tokens[self.i][1] if self.i < len(self.tokens) else None
            raise ExpressionError("empty alternative", pos)
        return frag

    def rep(self):
        s, f = self.atom()
        while self.peek() in ("*", "+", "?"):
            op = self.tokens[self.i][0]
            self.i += 1
            ns, nf = self.new(), self.new()
            self.link(ns, s)
            self.link(f, nf)
            if op in ("*", "+"):
                self.link(f, s)
            if op in ("*", "?"):
                self.link(ns, nf)
            s, f = ns, nf
        return s, f

    def atom(self):
        tok, pos = self.tokens[self.i]
        self.i += 1
        if tok == "(":
            frag = self.alt()
            if self.peek() != ")":
                raise ExpressionError("missing ')'", pos)
            self.i += 1
            return frag
        if tok in ("*", "+", "?", ")", "|"):
            raise ExpressionError(f"unexpected token {tok!r}", pos)
        if tok not in self.alphabet:
            raise AlphabetError(f"event {tok!r} at position {pos} is not in the alphabet")
        s, f = self.new(), self.new()
        self.delta.setdefault((s, tok), set()).add(f)
        return s, f


def from_regex(pattern: str, alphabet: Iterable[Event]) -> Dfa:
    """Compile a regular expression whose atoms are event names.

    Concatenation is juxtaposition (whitespace separated), ``|`` is union and
    ``*``, ``+``, ``?`` are postfix.  Example: ``"(s2 | c2)+ d12"``.
    """
    alphabet = tuple(sorted(set(alphabet)))
    parser = _RegexParser(pattern, alphabet)
    start, final = parser.parse()
    nfa = Nfa(
        states=tuple(range(parser.counter)),
        alphabet=alphabet,
        transitions={k: frozenset(v) for k, v in parser.delta.items()},
        initial=frozenset([start]),
        accepting=frozenset([final]),
        epsilon={k: frozenset(v) for k, v in parser.eps.items()},
    )
    return minimize(determinize(nfa))
