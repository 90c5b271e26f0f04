"""Plan which events to try to record so a story from a regular language is captured quickly."""

from .automata import (
    BisimWitness,
    Dfa,
    Nfa,
    accepts,
    determinize,
    from_regex,
    language_equivalent,
    minimize,
    mutate_good_shots,
    mutate_intersection,
    mutate_levenshtein,
    mutate_supersequence,
    run,
)
from .event_model import (
    EventModel,
    ObservationModel,
    compose,
    fully_hidden,
    fully_observable,
    sample_step,
    validate,
)
from .expr import parse_mutator_expression
from .product import BOTTOM, GoalMdp, GoalPomdp, build_goal_pomdp, extract_goal_mdp, project_belief
from .sim import BatchStats, TraceRecord, run_batch, run_episode, summarize
from .solvers import (
    Belief,
    MdpPolicy,
    MdpSolution,
    OnlinePolicy,
    almost_sure_winning_set,
    belief_update,
    observation_likelihood,
    plan_online,
    policy_evaluation,
    solve_mdp,
)

__version__ = "0.1.0"
