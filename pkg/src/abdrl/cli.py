"""Command line entry points: `run` for experiments, `plan` for one-shot
planner invocations with optional DOT and LP dumps."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .agent import MODES
from .graph import build_graph, graph_stats
from .harness import ExperimentConfig, export_dot, final_window_means, run_experiment
from .ilp import dump_lp, encode
from .logic import parse_knowledge_base, parse_observation
from .planner import extract_plan
from .solver import solve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="abdrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the NO-PLANNER / FIXED-GOAL / ABDUCTIVE comparison")
    run_p.add_argument("--kb", required=True, type=Path)
    run_p.add_argument("--domain", required=True, type=Path)
    run_p.add_argument("--modes", default=",".join(MODES))
    run_p.add_argument("--episodes", type=int, default=3000)
    run_p.add_argument("--trials", type=int, default=3)
    run_p.add_argument("--test-every", type=int, default=10)
    run_p.add_argument("--window", type=int, default=100)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--depth", type=int, default=6)
    run_p.add_argument("--timeout-ms", type=int, default=5000)
    run_p.add_argument("--reward-sign", type=int, choices=(1, -1), default=1)
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--out", required=True, type=Path)

    plan_p = sub.add_parser("plan", help="one-shot planner invocation for debugging")
    plan_p.add_argument("--kb", required=True, type=Path)
    plan_p.add_argument("--obs", required=True, type=Path)
    plan_p.add_argument("--depth", type=int, default=5)
    plan_p.add_argument("--timeout-ms", type=int, default=5000)
    plan_p.add_argument("--no-reward", action="store_true")
    plan_p.add_argument("--reward-sign", type=int, choices=(1, -1), default=1)
    plan_p.add_argument("--dot", type=Path, help="write the solution proof graph")
    plan_p.add_argument("--lp-dump", type=Path, help="write the integer program in LP text form")

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_plan(args)


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        kb_text=args.kb.read_text(),
        domain_text=args.domain.read_text(),
        episodes=args.episodes,
        trials=args.trials,
        test_every=args.test_every,
        sliding_window=args.window,
        modes=tuple(m.strip() for m in args.modes.split(",") if m.strip()),
        master_seed=args.seed,
        depth_limit=args.depth,
        timeout_ms=args.timeout_ms,
        reward_sign=args.reward_sign,
        workers=args.workers,
    )
    started = time.perf_counter()
    rows, _ = run_experiment(cfg, out_dir=args.out)
    elapsed = time.perf_counter() - started
    finals = final_window_means(rows, cfg.sliding_window)
    print(f"wrote {args.out}/metrics.csv ({len(rows)} rows) in {elapsed:.1f}s")
    for mode in cfg.modes:
        if mode in finals:
            print(f"  final-window mean return [{mode}]: {finals[mode]:.3f}")
    (args.out / "run_summary.json").write_text(
        __import__("json").dumps({"wall_seconds": elapsed, "final_window_means": finals}, indent=2) + "\n"
    )
    return 0


def _cmd_plan(args) -> int:
    kb = parse_knowledge_base(args.kb.read_text())
    obs = parse_observation(args.obs.read_text(), default_cost=kb.default_observation_cost)
    graph = build_graph(kb, obs, args.depth)
    prob = encode(graph, kb, reward_enabled=not args.no_reward, reward_sign=args.reward_sign)
    hypothesis = solve(prob, args.timeout_ms)
    plan = extract_plan(hypothesis, graph, kb)

    nodes, chains, unifies = graph_stats(graph)
    print(f"graph: {nodes} nodes, {chains} chain edges, {unifies} unify edges")
    print(f"score: {hypothesis.score}  cost: {hypothesis.cost}  reward: {hypothesis.reward}"
          f"{'' if hypothesis.optimal else '  (timeout incumbent)'}")
    if plan.subgoals:
        for i, sg in enumerate(plan.subgoals, 1):
            flag = " (abstract)" if sg.abstract else ""
            print(f"  {i}. {sg.label}{flag}  [distance {sg.graph_distance}]")
    else:
        print("  (empty plan)")
    if args.dot:
        args.dot.write_text(export_dot(hypothesis, graph))
        print(f"wrote {args.dot}")
    if args.lp_dump:
        args.lp_dump.write_text(dump_lp(prob))
        print(f"wrote {args.lp_dump}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
