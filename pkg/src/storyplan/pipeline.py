"""Wiring shared by the CLI and the experiment tests: one observability setting end to end."""

from __future__ import annotations

from dataclasses import dataclass

from .config import ExperimentConfig
from .event_model import ObservationModel
from .product import GoalPomdp, build_goal_pomdp
from .sim import BatchStats, run_batch
from .solvers import MdpPolicy, MdpSolution, OnlinePolicy, solve_mdp

SETTINGS = {"fom": "full", "partial": "custom", "fhm": "hidden"}


@dataclass
class Setting:
    name: str
    obs: ObservationModel
    pomdp: GoalPomdp
    solution: MdpSolution
    policy: object


def prepare(cfg: ExperimentConfig, setting: str, depth: int | None = None,
            tol: float | None = None, max_iter: int | None = None) -> Setting:
    """Full observability uses the Goal MDP policy; the other settings plan online on the Goal POMDP."""
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}; expected one of {sorted(SETTINGS)}")
    obs = cfg.observation_model(SETTINGS[setting])
    pomdp = build_goal_pomdp(cfg.model, obs, cfg.spec)
    solution = solve_mdp(pomdp.as_mdp(), cfg.tol if tol is None else tol,
                         cfg.max_iter if max_iter is None else max_iter)
    if setting == "fom":
        policy = MdpPolicy(pomdp, solution)
    else:
        policy = OnlinePolicy(pomdp, solution, cfg.depth if depth is None else depth)
    return Setting(setting, obs, pomdp, solution, policy)


def simulate(cfg: ExperimentConfig, setting: str, runs: int | None = None, seed: int | None = None,
             max_steps: int | None = None, depth: int | None = None) -> tuple[Setting, BatchStats]:
    prepared = prepare(cfg, setting, depth)
    stats = run_batch(
        cfg.model, prepared.obs, cfg.spec, prepared.policy,
        cfg.runs if runs is None else runs,
        cfg.seed if seed is None else seed,
        cfg.max_steps if max_steps is None else max_steps,
    )
    return prepared, stats
