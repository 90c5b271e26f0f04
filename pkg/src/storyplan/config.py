"""Experiment documents: model, channel, named specifications and run settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from . import event_model as em
from .automata import Dfa, from_regex
from .errors import ExpressionError, ValidationError
from .expr import parse_mutator_expression

SHIPPED = ("geometric", "oulu", "wedding")


@dataclass
class ExperimentConfig:
    name: str
    model: em.EventModel
    channel: em.ObservationModel | None  # the custom observation channel, if any
    specs: dict
    spec_expression: str
    spec: Dfa
    tol: float = 1e-9
    max_iter: int = 10**6
    depth: int = 6
    runs: int = 1000
    max_steps: int = 10_000
    seed: int = 0
    bins: int = 20
    source: Path | None = field(default=None, repr=False)

    def observation_model(self, observability: str) -> em.ObservationModel:
        if observability == "full":
            return em.fully_observable(self.model)
        if observability == "hidden":
            return em.fully_hidden(self.model)
        if observability == "custom":
            if self.channel is None:
                raise ValidationError(f"experiment {self.name!r} defines no custom observation channel")
            return self.channel
        raise ValueError(f"unknown observability {observability!r}")


def shipped_path(name: str) -> Path:
    return Path(str(resources.files("storyplan") / "data" / name / "experiment.json"))


def resolve(ref: str | Path) -> Path:
    path = Path(ref)
    if path.is_dir():
        path = path / "experiment.json"
    if not path.exists() and str(ref) in SHIPPED:
        path = shipped_path(str(ref))
    if not path.exists():
        raise ValidationError(f"experiment document {str(ref)!r} not found")
    return path


def read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"referenced document {str(path)!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ExpressionError(f"{path}: {exc.msg}", exc.pos) from None


def load_model(doc: Mapping, base: Path):
    if "file" in doc:
        return em.from_dict(read_json(base / doc["file"]))
    if "inline" in doc:
        return em.from_dict(doc["inline"])
    if "compose" in doc:
        spec = doc["compose"]
        parts = [em.from_dict(read_json(base / c["file"]))[0] for c in spec["components"]]
        model = em.compose(
            parts,
            [c["suffix"] for c in spec["components"]],
            spec.get("joint_events", {}),
            separator=spec.get("separator", ","),
        )
        return model, None
    raise ExpressionError("model reference needs one of 'file', 'inline' or 'compose'")


def load_channel(doc: Mapping | None, model: em.EventModel, fallback, base: Path):
    if doc is None:
        return fallback
    if "file" in doc:
        raw = read_json(base / doc["file"])
        return em.from_dict({**model.to_dict(), **raw})[1]
    if "indicator" in doc:
        ind = doc["indicator"]
        if "states" in ind:
            states = ind["states"]
        else:
            sep = ind.get("separator", ",")
            states = [s for s in model.states if str(s).split(sep)[ind["component"]] in set(ind["in"])]
        return em.indicator_channel(model, states, ind.get("seen", "seen"), ind.get("unseen", "unseen"))
    raise ExpressionError("channel reference needs 'file' or 'indicator'")


def load_spec(doc: Mapping, alphabet, base: Path) -> Dfa:
    if "file" in doc:
        return Dfa.from_dict(read_json(base / doc["file"]))
    if "regex" in doc:
        return from_regex(doc["regex"], doc.get("alphabet", alphabet))
    if "inline" in doc:
        return Dfa.from_dict(doc["inline"])
    raise ExpressionError("specification reference needs 'file', 'regex' or 'inline'")


def load_experiment(ref: str | Path) -> ExperimentConfig:
    path = resolve(ref)
    doc = read_json(path)
    base = path.parent
    try:
        model, channel = load_model(doc["model"], base)
        channel = load_channel(doc.get("channel"), model, channel, base)
        specs = {name: load_spec(s, model.events, base) for name, s in doc.get("specs", {}).items()}
        expression = doc.get("spec", next(iter(specs), ""))
        spec = parse_mutator_expression(expression, specs)
        solver = doc.get("solver", {})
        simulation = doc.get("simulation", {})
    except KeyError as exc:
        raise ExpressionError(f"{path}: missing field {exc.args[0]!r}") from None
    return ExperimentConfig(
        name=doc.get("name", path.parent.name),
        model=model,
        channel=channel,
        specs=specs,
        spec_expression=expression,
        spec=spec,
        tol=float(solver.get("tol", 1e-9)),
        max_iter=int(solver.get("max_iter", 10**6)),
        depth=int(solver.get("depth", 6)),
        runs=int(simulation.get("runs", 1000)),
        max_steps=int(simulation.get("max_steps", 10_000)),
        seed=int(simulation.get("seed", 0)),
        bins=int(simulation.get("bins", 20)),
        source=path,
    )
