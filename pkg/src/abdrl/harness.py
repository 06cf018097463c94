"""Experiment harness: runs the three agent variants over identical seeded
task sequences, records test-phase metrics on a fixed cadence, and emits
CSV curves plus DOT proof graphs.

Every (mode, trial) pair is an independent worker facing the same worlds:
world generation is seeded by episode index alone, agent randomness by
(master seed, mode, trial).  metrics.csv is byte-identical across runs;
the solver effort column reports a deterministic work measure (thousands
of branch-and-bound nodes, roughly milliseconds on a laptop) rather than
wall time, which run_summary.json reports instead.
"""

from __future__ import annotations

import json
import random
import zlib
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from pathlib import Path

from .agent import ABDUCTIVE, FIXED_GOAL, MODES, NO_PLANNER, AgentConfig, QTable, run_episode
from .graph import ProofGraph, build_graph
from .ilp import Hypothesis, encode
from .logic import format_pair, parse_knowledge_base
from .planner import PlanCache, PlannerConfig
from .solver import solve
from .world import generate_episode, observe, parse_domain_config, to_observation

CSV_SCHEMA = "mode,trial,episode,test_return,steps,plans_requested,cache_hits,solver_ms"
CSV_VERSION = "abdrl-metrics-v1"


@dataclass
class ExperimentConfig:
    kb_text: str
    domain_text: str
    episodes: int = 3000
    trials: int = 3
    test_every: int = 10
    sliding_window: int = 100
    modes: tuple[str, ...] = MODES
    master_seed: int = 0
    depth_limit: int = 6
    timeout_ms: int = 5000
    reward_sign: int = 1
    workers: int | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)

    def validate(self):
        if self.test_every < 1 or self.sliding_window < 1 or self.trials < 1:
            raise ValueError("test_every, sliding_window and trials must be >= 1")
        for mode in self.modes:
            if mode not in MODES:
                raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class MetricsRow:
    mode: str
    trial: int
    episode: int
    test_return: float
    steps: int
    plans_requested: int
    cache_hits: int
    solver_ms: int


def agent_seed(master_seed: int, mode: str, trial: int) -> int:
    return zlib.crc32(f"{master_seed}:{mode}:{trial}".encode())


def _run_trial(args) -> list[MetricsRow]:
    cfg_dict, mode, trial = args
    cfg = ExperimentConfig(**cfg_dict)
    kb = parse_knowledge_base(cfg.kb_text)
    domain = parse_domain_config(cfg.domain_text)
    uses_planner = mode != NO_PLANNER

    agent_cfg = AgentConfig(**{**asdict(cfg.agent), "mode": mode, "total_episodes": cfg.episodes})
    planner_cfg = PlannerConfig(
        depth_limit=cfg.depth_limit,
        timeout_ms=cfg.timeout_ms,
        reward_enabled=(mode == ABDUCTIVE),
        reward_sign=cfg.reward_sign,
    )
    cache = PlanCache()
    q = QTable()
    rng = random.Random(agent_seed(cfg.master_seed, mode, trial))
    rows: list[MetricsRow] = []
    plans_total = 0

    for episode in range(cfg.episodes):
        world = generate_episode(episode, domain)
        result = run_episode(
            world, domain, kb if uses_planner else None, q, agent_cfg,
            planner_cfg if uses_planner else None, cache if uses_planner else None,
            rng, agent_cfg.epsilon_for(episode), learning=True,
        )
        plans_total += result.plans_requested

        if (episode + 1) % cfg.test_every == 0:
            saved = (cache.hits, cache.misses, cache.solver_calls, cache.solver_work, cache.solver_wall_s)
            test_world = generate_episode(episode, domain)
            test_rng = random.Random(agent_seed(cfg.master_seed, mode, trial) ^ 0x5EED)
            test = run_episode(
                test_world, domain, kb if uses_planner else None, q, agent_cfg,
                planner_cfg if uses_planner else None, cache if uses_planner else None,
                test_rng, epsilon=0.0, learning=False,
            )
            cache.hits, cache.misses, cache.solver_calls, cache.solver_work, cache.solver_wall_s = saved
            rows.append(
                MetricsRow(
                    mode=mode,
                    trial=trial,
                    episode=episode + 1,
                    test_return=test.extrinsic_return,
                    steps=test.steps,
                    plans_requested=plans_total,
                    cache_hits=cache.hits,
                    solver_ms=cache.solver_work // 1000,
                )
            )
    return rows


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None):
    """Run all (mode, trial) workers, merge rows deterministically, and
    write metrics.csv / summary.csv / proof DOTs / a config echo."""
    cfg.validate()
    tasks = [(_cfg_dict(cfg), mode, trial) for mode in cfg.modes for trial in range(cfg.trials)]
    workers = cfg.workers or 1
    if workers > 1 and len(tasks) > 1:
        with Pool(min(workers, len(tasks))) as pool:
            buffers = pool.map(_run_trial, tasks)
    else:
        buffers = [_run_trial(t) for t in tasks]

    # pool.map preserves task order, so the merge is deterministic
    rows: list[MetricsRow] = []
    for buf in buffers:
        rows.extend(buf)
    summary = window_average(rows, cfg.sliding_window)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics_csv(rows))
        (out / "summary.csv").write_text(summary_csv(summary))
        _write_proofs(cfg, out)
        echo = asdict(cfg)
        del echo["kb_text"]
        del echo["domain_text"]
        (out / "run_config.json").write_text(json.dumps(echo, indent=2) + "\n")
    return rows, summary


def _cfg_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["agent"] = AgentConfig(**d["agent"])
    return d


def _write_proofs(cfg: ExperimentConfig, out: Path):
    """One proof graph per planner mode for the first episode's view."""
    kb = parse_knowledge_base(cfg.kb_text)
    domain = parse_domain_config(cfg.domain_text)
    world = generate_episode(0, domain)
    view = observe(world, None, domain)
    n = 0
    for mode in cfg.modes:
        if mode == NO_PLANNER:
            continue
        fixed = domain.book.best_item() if mode == FIXED_GOAL else None
        obs = to_observation(view, domain, fixed)
        graph = build_graph(kb, obs, cfg.depth_limit)
        prob = encode(graph, kb, mode == ABDUCTIVE, cfg.reward_sign)
        hyp = solve(prob, cfg.timeout_ms)
        (out / f"proof_{n}.dot").write_text(export_dot(hyp, graph))
        n += 1


# ---------------------------------------------------------------------------
# metrics files

def metrics_csv(rows: list[MetricsRow]) -> str:
    lines = [f"# {CSV_VERSION}: {CSV_SCHEMA}", CSV_SCHEMA]
    for r in rows:
        lines.append(
            f"{r.mode},{r.trial},{r.episode},{r.test_return!r},{r.steps},"
            f"{r.plans_requested},{r.cache_hits},{r.solver_ms}"
        )
    return "\n".join(lines) + "\n"


def summary_csv(summary) -> str:
    lines = [f"# {CSV_VERSION}: mode,episode,window_return", "mode,episode,window_return"]
    for mode, episode, value in summary:
        lines.append(f"{mode},{episode},{value!r}")
    return "\n".join(lines) + "\n"


def window_average(rows: list[MetricsRow], window: int):
    """Trailing mean of test_return per mode: trial-averaged per episode,
    then averaged over the episodes inside (episode - window, episode]."""
    per_mode: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        per_mode.setdefault(r.mode, {}).setdefault(r.episode, []).append(r.test_return)
    out = []
    for mode in sorted(per_mode):
        episodes = sorted(per_mode[mode])
        means = {e: sum(v) / len(v) for e, v in per_mode[mode].items()}
        for e in episodes:
            inside = [means[x] for x in episodes if e - window < x <= e]
            out.append((mode, e, sum(inside) / len(inside)))
    return out


def final_window_means(rows: list[MetricsRow], window: int) -> dict[str, float]:
    """Mean test_return per mode over the final window of episodes."""
    summary = window_average(rows, window)
    finals: dict[str, float] = {}
    for mode, _, value in summary:
        finals[mode] = value  # last write per mode wins (episodes sorted)
    return finals


# ---------------------------------------------------------------------------
# DOT export

def export_dot(h: Hypothesis | None, g: ProofGraph) -> str:
    """Graphviz text: solid directed chaining edges, dotted unification
    edges labeled with their equalities, observations filled gray, and each
    conjunctive tail group clustered."""
    included = h.node_ids if h is not None else frozenset(n.id for n in g.nodes)
    active_chains = h.active_chain_edges if h is not None else frozenset(e.id for e in g.chain_edges)
    active_unify = h.active_unify_edges if h is not None else frozenset(u.id for u in g.unify_edges)

    lines = ["digraph hypothesis {", "  rankdir=RL;", '  node [shape=box, fontname="Helvetica"];']

    def node_line(n):
        fill = ', style=filled, fillcolor="gray85"' if n.origin == "observation" else ""
        return f'    n{n.id} [label="{n.atom}"{fill}];'

    init_nodes = [n for n in g.nodes if n.id in included and n.origin == "observation" and n.obs_label == "init"]
    goal_nodes = [n for n in g.nodes if n.id in included and n.origin == "observation" and n.obs_label == "goal"]
    clustered = {n.id for n in init_nodes} | {n.id for n in goal_nodes}

    if init_nodes:
        lines.append("  subgraph cluster_init {")
        lines.append('    label="initial state";')
        lines.extend(node_line(n) for n in init_nodes)
        lines.append("  }")
    if goal_nodes:
        lines.append("  subgraph cluster_goal {")
        lines.append('    label="goal state";')
        lines.extend(node_line(n) for n in goal_nodes)
        lines.append("  }")

    for e in g.chain_edges:
        if e.id not in active_chains:
            continue
        group = [g.nodes[t] for t in e.tail_ids if t in included]
        if len(group) > 1:
            lines.append(f"  subgraph cluster_c{e.id} {{")
            lines.append("    style=dashed;")
            lines.extend(node_line(n) for n in group)
            lines.append("  }")
            clustered.update(n.id for n in group)

    for n in g.nodes:
        if n.id in included and n.id not in clustered:
            lines.append(node_line(n)[2:])

    for e in g.chain_edges:
        if e.id not in active_chains:
            continue
        for head in e.head_ids:
            for tail in e.tail_ids:
                if head in included and tail in included:
                    lines.append(f'  n{head} -> n{tail} [label="{e.rule_id}"];')
    for u in g.unify_edges:
        if u.id not in active_unify:
            continue
        if u.node_a in included and u.node_b in included:
            label = ", ".join(format_pair(p) for p in u.equalities)
            lines.append(
                f'  n{u.node_a} -> n{u.node_b} [dir=none, style=dotted, label="{label}"];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"
