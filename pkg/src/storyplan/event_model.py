"""Labeled Markov chains that generate events, and their observation channels."""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from functools import cached_property
from itertools import product as cartesian
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ExpressionError, ValidationError

State = Hashable
ROW_TOL = 1e-9
HIDDEN_OBSERVATION = "none"


def _renormalize(row: Mapping) -> dict:
    row = {k: float(v) for k, v in row.items()}
    total = sum(row.values())
    if total > 0 and abs(total - 1.0) <= ROW_TOL:
        row = {k: v / total for k, v in row.items()}
    return row


@dataclass(frozen=True, eq=False)
class EventModel:
    """States ``S``, transition probabilities ``P``, start state, events ``E`` and labels ``g``.

    ``transition_prob[s][t]`` is P(s, t); rows within 1e-9 of summing to one
    are renormalized, anything further off is left for :func:`validate`.
    """

    states: tuple
    transition_prob: Mapping[State, Mapping[State, float]]
    initial: State
    events: tuple
    labeling: Mapping[State, frozenset]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "events", tuple(sorted(set(self.events))))
        object.__setattr__(
            self,
            "transition_prob",
            {s: _renormalize(self.transition_prob.get(s, {})) for s in self.states},
        )
        object.__setattr__(
            self, "labeling", {s: frozenset(self.labeling.get(s, ())) for s in self.states}
        )

    @cached_property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def matrix(self) -> np.ndarray:
        P = np.zeros((len(self.states), len(self.states)))
        for s, row in self.transition_prob.items():
            for t, p in row.items():
                if t in self.index:
                    P[self.index[s], self.index[t]] = p
        P.setflags(write=False)
        return P

    @cached_property
    def _cumulative(self) -> list:
        return np.cumsum(self.matrix, axis=1).tolist()

    def label(self, s: State) -> frozenset:
        return self.labeling[s]

    def to_dict(self, obs: "ObservationModel | None" = None) -> dict:
        doc = {
            "states": list(self.states),
            "initial": self.initial,
            "events": list(self.events),
            "labels": {str(s): sorted(self.labeling[s]) for s in self.states if self.labeling[s]},
            "transitions": [
                {"from": s, "to": t, "prob": p}
                for s in self.states
                for t, p in self.transition_prob[s].items()
                if p > 0
            ],
        }
        if obs is not None:
            doc["observations"] = list(obs.observations)
            doc["emissions"] = [
                {"state": s, "obs": y, "prob": p}
                for s in self.states
                for y, p in obs.emission_prob.get(s, {}).items()
                if p > 0
            ]
        return doc


@dataclass(frozen=True, eq=False)
class ObservationModel:
    """Observation set ``Y`` and emission probabilities ``h(s, y)``."""

    observations: tuple
    emission_prob: Mapping[State, Mapping[Hashable, float]]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(
            self, "emission_prob", {s: _renormalize(row) for s, row in self.emission_prob.items()}
        )

    def matrix(self, states: Sequence[State]) -> np.ndarray:
        col = {y: j for j, y in enumerate(self.observations)}
        H = np.zeros((len(states), len(self.observations)))
        for i, s in enumerate(states):
            for y, p in self.emission_prob.get(s, {}).items():
                H[i, col[y]] = p
        return H


def validate(model: EventModel, obs: ObservationModel | None = None) -> list[str]:
    """Every violated invariant as a readable line; empty when the inputs are valid."""
    report = []
    known = set(model.states)
    events = set(model.events)
    if model.initial not in known:
        report.append(f"initial state {model.initial!r} is not a state")
    elif model.labeling[model.initial]:
        report.append(
            f"initial state {model.initial!r} carries events {sorted(model.labeling[model.initial])}; "
            "the initial state must have no events"
        )
    for s in model.states:
        row = model.transition_prob[s]
        for t, p in row.items():
            if t not in known:
                report.append(f"transition {s!r} -> {t!r} targets an unknown state")
            if not 0.0 <= p <= 1.0:
                report.append(f"transition {s!r} -> {t!r} has probability {p} outside [0, 1]")
        total = sum(row.values())
        if abs(total - 1.0) > ROW_TOL:
            report.append(f"transition row of state {s!r} sums to {total:.12g}, not 1")
        stray = model.labeling[s] - events
        if stray:
            report.append(f"state {s!r} is labeled with undeclared events {sorted(stray)}")
    for s in model.transition_prob:
        if s not in known:
            report.append(f"transitions given for unknown state {s!r}")
    if obs is not None:
        ys = set(obs.observations)
        for s in obs.emission_prob:
            if s not in known:
                report.append(f"emissions given for unknown state {s!r}")
        for s in model.states:
            row = obs.emission_prob.get(s, {})
            for y, p in row.items():
                if y not in ys:
                    report.append(f"state {s!r} emits undeclared observation {y!r}")
                if not 0.0 <= p <= 1.0:
                    report.append(f"emission {s!r} -> {y!r} has probability {p} outside [0, 1]")
            total = sum(row.values())
            if abs(total - 1.0) > ROW_TOL:
                report.append(f"emission row of state {s!r} sums to {total:.12g}, not 1")
    return report


def check(model: EventModel, obs: ObservationModel | None = None) -> None:
    report = validate(model, obs)
    if report:
        raise ValidationError(report)


def fully_observable(model: EventModel) -> ObservationModel:
    return ObservationModel(model.states, {s: {s: 1.0} for s in model.states})


def fully_hidden(model: EventModel) -> ObservationModel:
    return ObservationModel((HIDDEN_OBSERVATION,), {s: {HIDDEN_OBSERVATION: 1.0} for s in model.states})


def indicator_channel(model: EventModel, states: Iterable[State], seen: str, unseen: str) -> ObservationModel:
    """A sensor that reports ``seen`` exactly when the process is in one of ``states``."""
    states = set(states)
    return ObservationModel(
        (seen, unseen),
        {s: {seen if s in states else unseen: 1.0} for s in model.states},
    )


def sample_step(model: EventModel, obs: ObservationModel, s: State, rng: np.random.Generator):
    """Draw the successor state, its events and the emitted observation."""
    i = model.index[s]
    cum = model._cumulative[i]
    j = min(bisect.bisect_right(cum, rng.random() * cum[-1]), len(cum) - 1)
    nxt = model.states[j]
    row = obs.emission_prob[nxt]
    u = rng.random()
    acc = 0.0
    y = None
    for y, p in row.items():
        acc += p
        if u < acc:
            break
    return nxt, model.labeling[nxt], y


def compose(
    models: Sequence[EventModel],
    suffixes: Sequence[str],
    joint_events: Mapping[str, Iterable[str]] | None = None,
    separator: str = ",",
) -> EventModel:
    """Independent parallel composition of several event models.

    Each component's events are renamed by appending its suffix.  A joint
    event ``name -> required`` is added to every product state whose
    (renamed) events include all of ``required``.
    """
    if len(models) != len(suffixes):
        raise ValueError("one suffix per component model is required")
    joint_events = {k: frozenset(v) for k, v in (joint_events or {}).items()}

    def name(parts):
        return separator.join(str(p) for p in parts)

    combos = list(cartesian(*(m.states for m in models)))
    labels = {}
    for combo in combos:
        evs = set()
        for m, sfx, s in zip(models, suffixes, combo):
            evs.update(f"{e}{sfx}" for e in m.labeling[s])
        evs.update(j for j, req in joint_events.items() if req <= evs)
        labels[name(combo)] = frozenset(evs)
    events = {f"{e}{sfx}" for m, sfx in zip(models, suffixes) for e in m.events}
    events.update(joint_events)
    P = {}
    for combo in combos:
        row = {}
        for nxt in cartesian(*(m.transition_prob[s].items() for m, s in zip(models, combo))):
            p = float(np.prod([pr for _, pr in nxt]))
            if p > 0:
                row[name(t for t, _ in nxt)] = p
        P[name(combo)] = row
    return EventModel(
        states=tuple(name(c) for c in combos),
        transition_prob=P,
        initial=name(m.initial for m in models),
        events=tuple(events),
        labeling=labels,
    )


def from_dict(doc: Mapping) -> tuple[EventModel, ObservationModel | None]:
    try:
        P: dict = {s: {} for s in doc["states"]}
        for t in doc.get("transitions", []):
            P.setdefault(t["from"], {})
            P[t["from"]][t["to"]] = P[t["from"]].get(t["to"], 0.0) + float(t["prob"])
        model = EventModel(
            states=tuple(doc["states"]),
            transition_prob=P,
            initial=doc["initial"],
            events=tuple(doc["events"]),
            labeling={s: frozenset(evs) for s, evs in doc.get("labels", {}).items()},
        )
        obs = None
        if "observations" in doc:
            H: dict = {}
            for em in doc.get("emissions", []):
                H.setdefault(em["state"], {})[em["obs"]] = float(em["prob"])
            obs = ObservationModel(tuple(doc["observations"]), H)
    except (KeyError, TypeError) as exc:
        raise ExpressionError(f"malformed model document: {exc!r}") from None
    stray = [s for s in doc.get("labels", {}) if s not in model.index]
    if stray:
        raise ValidationError([f"labels given for unknown state {s!r}" for s in stray])
    return model, obs


def loads(text: str) -> tuple[EventModel, ObservationModel | None]:
    try:
        return from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ExpressionError(f"invalid model document: {exc.msg}", exc.pos) from None
