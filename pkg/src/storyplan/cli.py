"""Command line entry point: ``storyplan {validate,mutate,product,solve-mdp,simulate,equiv-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import event_model as em
from .automata import Dfa, language_equivalent
from .config import load_experiment, read_json
from .errors import StoryPlanError
from .expr import parse_mutator_expression
from .pipeline import SETTINGS, prepare, simulate
from .product import build_goal_pomdp, to_dict
from .sim import summarize
from .solvers import MdpSolution, solve_mdp

EXIT_NOT_EQUIVALENT = 1


def values_table(states, solution: MdpSolution) -> str:
    lines = ["state\tvalue\taction"]
    for i, (s, q) in enumerate(states):
        v = solution.values[i]
        a = solution.policy.get((s, q), "-")
        lines.append(f"{s}|{q}\t{'inf' if not np.isfinite(v) else repr(float(v))}\t{a}")
    return "\n".join(lines) + "\n"


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_validate(args) -> int:
    if args.model:
        model, channel = em.from_dict(read_json(Path(args.model)))
        spec = None
    else:
        cfg = load_experiment(args.config)
        model, channel, spec = cfg.model, cfg.channel, cfg.spec
    if args.observability == "full":
        obs = em.fully_observable(model)
    elif args.observability == "hidden":
        obs = em.fully_hidden(model)
    else:
        obs = channel
    report = em.validate(model, obs)
    if spec is not None:
        if set(spec.alphabet) != set(model.events):
            report.append(f"specification alphabet {list(spec.alphabet)} differs from model events {list(model.events)}")
    for line in report:
        print(line)
    if report:
        return 3
    print("valid")
    return 0


def _env(args) -> dict:
    env = {}
    if args.config:
        env.update(load_experiment(args.config).specs)
    for item in args.spec or []:
        name, _, path = item.partition("=")
        if not path:
            raise StoryPlanError(f"--spec expects NAME=FILE, got {item!r}")
        env[name] = Dfa.loads(Path(path).read_text())
    return env


def cmd_mutate(args) -> int:
    dfa = parse_mutator_expression(args.expr, _env(args))
    _write(args.out, dfa.dumps())
    return 0


def cmd_product(args) -> int:
    cfg = load_experiment(args.config)
    p = build_goal_pomdp(cfg.model, cfg.observation_model(args.observability), cfg.spec)
    for key, value in p.summary().items():
        print(f"{key}: {value}")
    if args.dump:
        Path(args.dump).write_text(json.dumps(to_dict(p), indent=2) + "\n")
    return 0


def cmd_solve(args) -> int:
    cfg = load_experiment(args.config)
    p = build_goal_pomdp(cfg.model, em.fully_observable(cfg.model), cfg.spec).as_mdp()
    sol = solve_mdp(p, args.tol or cfg.tol, args.max_iter or cfg.max_iter)
    print(f"# expected steps from the initial state: {sol.initial_value!r} "
          f"({sol.iterations} sweeps, residual {sol.residual:.3g})", file=sys.stderr)
    _write(args.out, values_table(p.states, sol))
    return 0


def cmd_simulate(args) -> int:
    cfg = load_experiment(args.config)
    if args.tol or args.max_iter:
        cfg.tol = args.tol or cfg.tol
        cfg.max_iter = args.max_iter or cfg.max_iter
    prepared, stats = simulate(cfg, args.setting, args.runs, args.seed, args.max_steps, args.depth)
    runs = cfg.runs if args.runs is None else args.runs
    seed = cfg.seed if args.seed is None else args.seed
    report = summarize(stats, args.bins or cfg.bins)
    header = [
        f"experiment: {cfg.name}",
        f"setting: {args.setting} (observability {SETTINGS[args.setting]})",
        f"specification: {cfg.spec_expression} ({len(cfg.spec)} DFA states)",
        f"product states: {len(prepared.pomdp.states)}",
        f"optimal expected steps (full observability): {prepared.solution.initial_value:.6f}",
        f"runs: {runs}, master seed: {seed}",
    ]
    if args.setting != "fom":
        header.append(f"planner depth: {prepared.policy.planner.depth}")
    text = "\n".join(header) + "\n\n" + report.text
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        (out / "episodes.csv").write_text(report.episodes_csv)
        (out / "histogram.csv").write_text(report.histogram_csv)
        (out / "stories.csv").write_text(report.stories_csv)
        (out / "values.tsv").write_text(values_table(prepared.pomdp.states, prepared.solution))
    return 0


def _load_dfa(ref: str, env: dict) -> Dfa:
    path = Path(ref)
    if path.exists():
        return Dfa.loads(path.read_text())
    return parse_mutator_expression(ref, env)


def cmd_equiv(args) -> int:
    env = _env(args)
    d1, d2 = _load_dfa(args.first, env), _load_dfa(args.second, env)
    witness = language_equivalent(d1, d2)
    if witness:
        print(f"equivalent: bisimulation with {len(witness.relation)} related state pairs")
        if args.show_relation:
            for p, q in sorted(witness.relation, key=str):
                print(f"  {p!r} ~ {q!r}")
        return 0
    word = " ".join(witness.counterexample) or "(empty word)"
    print(f"not equivalent: counterexample {word}")
    print(f"  first accepts: {d1.accepts(witness.counterexample)}, second accepts: {d2.accepts(witness.counterexample)}")
    return EXIT_NOT_EQUIVALENT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storyplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    obs_choices = ["full", "hidden", "custom"]

    p = sub.add_parser("validate", help="check a model (and its channel) for consistency")
    p.add_argument("config", nargs="?", default=None, help="experiment document or shipped example name")
    p.add_argument("--model", help="validate a bare model document instead")
    p.add_argument("--observability", choices=obs_choices, default="custom")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mutate", help="evaluate a mutator expression and print the DFA document")
    p.add_argument("--expr", required=True)
    p.add_argument("--spec", action="append", metavar="NAME=FILE")
    p.add_argument("--config", help="take named specifications from this experiment")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mutate)

    p = sub.add_parser("product", help="build the Goal POMDP and print its size")
    p.add_argument("config")
    p.add_argument("--observability", choices=obs_choices, default="full")
    p.add_argument("--dump", help="write the full sparse product document here")
    p.set_defaults(func=cmd_product)

    p = sub.add_parser("solve-mdp", help="optimal expected steps under full observability")
    p.add_argument("config")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--depth", type=int, help="accepted for symmetry with simulate; unused")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="seeded batch of recording episodes")
    p.add_argument("config")
    p.add_argument("--setting", choices=sorted(SETTINGS), default="fom")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--out", help="directory for report.txt, episodes.csv, histogram.csv, stories.csv, values.tsv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equiv-check", help="language equivalence with a bisimulation witness")
    p.add_argument("first", help="DFA document or mutator expression")
    p.add_argument("second")
    p.add_argument("--spec", action="append", metavar="NAME=FILE")
    p.add_argument("--config")
    p.add_argument("--show-relation", action="store_true")
    p.set_defaults(func=cmd_equiv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "validate" and not (args.config or args.model):
        parser.error("validate needs an experiment or --model")
    try:
        return args.func(args)
    except StoryPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
