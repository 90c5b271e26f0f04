"""Mutator expressions such as ``MI(MS(D1), ML(D2, 1))`` evaluated over named specifications."""

from __future__ import annotations

import re
from typing import Mapping

from . import automata
from .automata import Dfa
from .errors import ExpressionError

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)(?![A-Za-z_'])|(?P<name>[A-Za-z0-9_']+)|(?P<punct>[(),]))")

# operator -> argument kinds
OPERATORS = {
    "MS": ("dfa",),
    "MI": ("dfa", "dfa"),
    "ML": ("dfa", "int"),
    "MG": ("dfa", "event", "event", "int"),
}


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].isspace():
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.end = len(text)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", None, self.end)

    def take(self, value=None):
        tok = self.peek()
        if value is not None and tok[1] != value:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExpressionError(f"expected {value!r}, found {found}", tok[2])
        self.i += 1
        return tok

    def node(self):
        kind, value, pos = self.take()
        if kind == "int":
            return ("int", int(value), pos)
        if kind != "name":
            found = "end of input" if kind == "end" else repr(value)
            raise ExpressionError(f"expected a name or operator, found {found}", pos)
        if self.peek()[1] != "(":
            return ("name", value, pos)
        self.take("(")
        args = [self.node()]
        while self.peek()[1] == ",":
            self.take(",")
            args.append(self.node())
        self.take(")")
        return ("call", value, pos, args)

    def parse(self):
        tree = self.node()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected trailing {value!r}", pos)
        return tree


def parse(text: str):
    """Syntax tree of nested ``("call", op, pos, args)``, ``("name", ...)`` and ``("int", ...)`` nodes."""
    return _Parser(text).parse()


def _evaluate(node, env: Mapping[str, Dfa], want: str):
    kind = node[0]
    if want == "int":
        if kind != "int":
            raise ExpressionError("expected an integer argument", node[2])
        return node[1]
    if want == "event":
        if kind == "int":
            return str(node[1])
        if kind != "name":
            raise ExpressionError("expected an event name", node[2])
        return node[1]
    if kind == "int":
        raise ExpressionError("expected a specification, found an integer", node[2])
    if kind == "name":
        try:
            return env[node[1]]
        except KeyError:
            raise ExpressionError(f"undefined specification {node[1]!r}", node[2]) from None
    _, op, pos, args = node
    if op not in OPERATORS:
        raise ExpressionError(f"unknown operator {op!r}; expected one of {sorted(OPERATORS)}", pos)
    kinds = OPERATORS[op]
    if len(args) != len(kinds):
        raise ExpressionError(f"{op} takes {len(kinds)} argument(s), got {len(args)}", pos)
    vals = [_evaluate(a, env, k) for a, k in zip(args, kinds)]
    try:
        if op == "MS":
            return automata.mutate_supersequence(*vals)
        if op == "MI":
            return automata.mutate_intersection(*vals)
        if op == "ML":
            return automata.mutate_levenshtein(*vals)
        return automata.mutate_good_shots(*vals)
    except ValueError as exc:
        raise ExpressionError(f"{op}: {exc}", pos) from None


def parse_mutator_expression(text: str, env: Mapping[str, Dfa]) -> Dfa:
    """Evaluate ``name | MS(e) | MI(e, e) | ML(e, int) | MG(e, event, event, int)`` bottom-up.

    A bare name returns the bound automaton unchanged; every operator result is minimal.
    """
    return _evaluate(parse(text), env, "dfa")
