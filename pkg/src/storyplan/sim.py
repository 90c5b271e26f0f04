"""Seeded simulation of the capture loop and batch summaries."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .automata import Dfa
from .errors import AlphabetError, ImpossibleObservationError, StoryPlanError
from .event_model import EventModel, ObservationModel, sample_step
from .product import BOTTOM, GoalPomdp, build_goal_pomdp
from .solvers import Belief, belief_update

MAX_STEPS = 10_000


@dataclass(frozen=True)
class StepLog:
    predicted: str
    occurred: tuple
    observation: object
    hit: bool


@dataclass
class TraceRecord:
    steps: int
    story: tuple
    dfa_path: list
    success: bool
    log: list = field(default_factory=list)
    seed: int | None = None


def run_episode(
    model: EventModel,
    obs: ObservationModel,
    spec: Dfa,
    policy: Callable[[Belief], str],
    max_steps: int = MAX_STEPS,
    rng: np.random.Generator | None = None,
    pomdp: GoalPomdp | None = None,
) -> TraceRecord:
    """One execution: predict, let the process move, record on a hit, filter the belief.

    The belief is tracked on ``pomdp`` (taken from the policy when it carries
    one), which must be the product of exactly these ``model``, ``obs`` and ``spec``.
    """
    if rng is None:
        raise ValueError("an explicit random generator is required")
    pomdp = pomdp or getattr(policy, "pomdp", None) or build_goal_pomdp(model, obs, spec)
    if pomdp.model is not model or pomdp.spec is not spec or pomdp.obs is not obs:
        raise ValueError("the policy's product was built from different inputs")
    s, q = model.initial, spec.initial
    story: list = []
    path = [q]
    trace = []
    b = Belief.initial(pomdp)
    k = 0
    while not spec.is_accepting(q) and k < max_steps:
        a = policy(b)
        if a not in spec.alphabet:
            raise AlphabetError(f"policy predicted {a!r}, which is not an event of the specification")
        s, events, y = sample_step(model, obs, s, rng)
        hit = a in events
        if hit:
            story.append(a)
            q = spec.step(q, a)
        z = BOTTOM if spec.is_accepting(q) else (hit, y)
        try:
            b = belief_update(pomdp, b, a, z)
        except ImpossibleObservationError as exc:
            raise StoryPlanError(f"belief filter rejected a sampled observation: {exc}") from exc
        k += 1
        path.append(q)
        trace.append(StepLog(a, tuple(sorted(events)), z, hit))
    return TraceRecord(k, tuple(story), path, spec.is_accepting(q), trace)


def replay(spec: Dfa, log: Iterable[StepLog]) -> tuple[tuple, list]:
    """Recompute the captured story and DFA path from a per-step log."""
    q = spec.initial
    story, path = [], [q]
    for step in log:
        if step.predicted in step.occurred:
            story.append(step.predicted)
            q = spec.step(q, step.predicted)
        path.append(q)
    return tuple(story), path


def episode_seed(master_seed: int, episode: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(episode,))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class BatchStats:
    runs: int
    mean_steps: float
    std_error: float
    histogram: list  # (bin_low, bin_high, count), default 20 bins
    story_distribution: dict
    failures: int
    episodes: list  # TraceRecord per episode index, per-step logs dropped

    @property
    def successes(self) -> int:
        return self.runs - self.failures

    def success_steps(self) -> list[int]:
        return [t.steps for t in self.episodes if t.success]


def histogram(steps: Sequence[int], bins: int) -> list[tuple[int, int, int]]:
    """Equal-width integer bins ``[low, high]`` covering min..max of ``steps``."""
    if bins < 1:
        raise ValueError("need at least one bin")
    if not steps:
        return []
    lo, hi = min(steps), max(steps)
    width = max(1, math.ceil((hi - lo + 1) / bins))
    count = math.ceil((hi - lo + 1) / width)
    counts = [0] * count
    for k in steps:
        counts[(k - lo) // width] += 1
    return [(lo + i * width, lo + (i + 1) * width - 1, c) for i, c in enumerate(counts)]


def aggregate(records: Sequence[TraceRecord], bins: int = 20) -> BatchStats:
    ok = [t.steps for t in records if t.success]
    n = len(ok)
    mean = float(np.mean(ok)) if n else float("nan")
    se = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    stories = Counter(t.story for t in records if t.success)
    return BatchStats(
        runs=len(records),
        mean_steps=mean,
        std_error=se,
        histogram=histogram(ok, bins),
        story_distribution=dict(sorted(stories.items(), key=lambda kv: (-kv[1], kv[0]))),
        failures=len(records) - n,
        episodes=list(records),
    )


def run_batch(
    model: EventModel,
    obs: ObservationModel,
    spec: Dfa,
    policy: Callable[[Belief], str],
    runs: int,
    master_seed: int,
    max_steps: int = MAX_STEPS,
    order: Sequence[int] | None = None,
    keep_logs: bool = False,
) -> BatchStats:
    """Independent episodes, episode ``i`` seeded from ``(master_seed, i)``.

    ``order`` only changes the execution order; results are keyed by episode
    index so the statistics do not depend on it.
    """
    order = range(runs) if order is None else order
    if sorted(order) != list(range(runs)):
        raise ValueError("order must be a permutation of the episode indices")
    records: list = [None] * runs
    for i in order:
        seed = episode_seed(master_seed, i)
        t = run_episode(model, obs, spec, policy, max_steps, np.random.default_rng(seed))
        t.seed = seed
        if not keep_logs:
            t.log = []
        records[i] = t
    return aggregate(records)


def story_text(story: Sequence[str]) -> str:
    return " ".join(story)


@dataclass
class Report:
    text: str
    histogram_csv: str
    stories_csv: str
    episodes_csv: str


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def summarize(stats: BatchStats, bins: int = 20, width: int = 50) -> Report:
    """Text summary with an ASCII histogram, plus the CSV tables."""
    if bins < 1:
        raise ValueError("need at least one bin")
    hist = histogram(stats.success_steps(), bins)
    lines = [
        f"runs: {stats.runs}",
        f"successes: {stats.successes}",
        f"failures (step cap): {stats.failures}",
        f"mean steps: {stats.mean_steps:.4f}",
        f"std error: {stats.std_error:.4f}",
        "",
        "steps histogram:",
    ]
    top = max((c for _, _, c in hist), default=0)
    for lo, hi, c in hist:
        bar = "#" * (round(width * c / top) if top else 0)
        lines.append(f"{lo:>6}-{hi:<6} {c:>7} {bar}")
    lines += ["", "captured stories:"]
    total = stats.successes
    for story, c in stats.story_distribution.items():
        lines.append(f"{c:>7} {100.0 * c / total:6.2f}%  {story_text(story) or '(empty)'}")
    return Report(
        text="\n".join(lines) + "\n",
        histogram_csv=_csv(hist, ["bin_low", "bin_high", "count"]),
        stories_csv=_csv(
            [(story_text(s), c) for s, c in stats.story_distribution.items()], ["story", "count"]
        ),
        episodes_csv=_csv(
            [(i, t.seed, t.steps, int(t.success), story_text(t.story)) for i, t in enumerate(stats.episodes)],
            ["episode", "seed", "steps", "success", "story"],
        ),
    )
