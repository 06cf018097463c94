"""Plan extraction from solution hypotheses, plus per-observation caching.

A plan is the hypothesis's action atoms sorted by chain-edge distance from
the goal observation (farthest first); action atoms already satisfied by
the initial state (equality-connected to an init atom) are dropped.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

from .graph import ProofGraph, build_graph
from .ilp import Hypothesis, encode
from .logic import GOAL, INIT, KnowledgeBase, Observation, Term
from .solver import solve

UNREACHED = 10**9  # distance sentinel for action atoms outside the goal cone


@dataclass(frozen=True)
class Subgoal:
    label: str
    action_predicate: str
    target: Term
    graph_distance: int
    abstract: bool = False  # target could not be resolved to a constant


@dataclass(frozen=True)
class Plan:
    subgoals: tuple[Subgoal, ...]
    source_score: float
    optimal: bool
    # atoms the hypothesis explains by chaining (not by the initial state),
    # equality-resolved; lets callers read off what the plan intends to
    # bring about, e.g. which item gets crafted
    explained: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def labels(self):
        return [s.label for s in self.subgoals]


@dataclass
class PlannerConfig:
    depth_limit: int = 5
    timeout_ms: int = 5000
    reward_enabled: bool = True
    reward_sign: int = 1


@dataclass
class PlanCache:
    enabled: bool = True
    entries: dict[str, Plan] = field(default_factory=dict)
    hits: int = 0
    misses: int = 0
    solver_calls: int = 0
    solver_work: int = 0  # branch-and-bound nodes, a deterministic effort measure
    solver_wall_s: float = 0.0


def subgoal_label(predicate: str, target: Term) -> str:
    return f"{predicate}-{target.name.lower()}"


def extract_plan(h: Hypothesis, g: ProofGraph, kb: KnowledgeBase) -> Plan:
    """Order the hypothesis's action atoms into an executable subgoal list."""
    action_preds = dict(kb.action_predicates)
    included = h.node_ids

    # distance from the goal-state observation over active chain edges;
    # actively unified nodes sit at distance 0 from each other
    dist = {n: UNREACHED for n in included}
    queue = deque()
    for n in g.nodes:
        if n.id in included and n.origin == "observation" and n.obs_label == GOAL:
            dist[n.id] = 0
            queue.append(n.id)
    zero_links: dict[int, list[int]] = {n: [] for n in included}
    for uid in h.active_unify_edges:
        u = g.unify_edges[uid]
        zero_links[u.node_a].append(u.node_b)
        zero_links[u.node_b].append(u.node_a)
    chain_links: dict[int, list[int]] = {n: [] for n in included}
    for eid in h.active_chain_edges:
        e = g.chain_edges[eid]
        for head in e.head_ids:
            chain_links[head].extend(e.tail_ids)
    while queue:
        cur = queue.popleft()
        for nxt in zero_links[cur]:
            if dist[nxt] > dist[cur]:
                dist[nxt] = dist[cur]
                queue.appendleft(nxt)
        for nxt in chain_links[cur]:
            if dist[nxt] > dist[cur] + 1:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)

    # satisfied actions: connected to an init observation node through the
    # active unification structure
    merged: dict[int, int] = {n: n for n in included}

    def find(n):
        while merged[n] != n:
            merged[n] = merged[merged[n]]
            n = merged[n]
        return n

    for uid in h.active_unify_edges:
        u = g.unify_edges[uid]
        ra, rb = find(u.node_a), find(u.node_b)
        if ra != rb:
            merged[ra] = rb
    init_classes = {
        find(n.id)
        for n in g.nodes
        if n.id in included and n.origin == "observation" and n.obs_label == INIT
    }

    rep = _equality_representatives(h.equalities)

    picked = []
    for node_id in sorted(included):
        node = g.nodes[node_id]
        idx = action_preds.get(node.atom.predicate)
        if idx is None:
            continue
        if find(node_id) in init_classes:
            continue  # already satisfied by the current state
        raw = node.atom.args[idx] if node.atom.args else None
        if raw is None:
            continue
        target = rep.get(raw, raw)
        picked.append((dist.get(node_id, UNREACHED), node_id, node.atom.predicate, target))

    picked.sort(key=lambda item: (-item[0], item[1]))
    subgoals = []
    seen_labels = set()
    for d, node_id, pred, target in picked:
        label = subgoal_label(pred, target)
        if label in seen_labels:
            continue
        seen_labels.add(label)
        subgoals.append(
            Subgoal(
                label=label,
                action_predicate=pred,
                target=target,
                graph_distance=d,
                abstract=not target.is_const,
            )
        )

    explained = set()
    for eid in h.active_chain_edges:
        for head in g.chain_edges[eid].head_ids:
            atom = g.nodes[head].atom
            args = tuple(rep.get(t, t).name for t in atom.args)
            explained.add((atom.predicate, args))
    return Plan(
        tuple(subgoals),
        source_score=h.score,
        optimal=h.optimal,
        explained=tuple(sorted(explained)),
    )


def _equality_representatives(equalities):
    parent: dict[Term, Term] = {}

    def find(t):
        while parent.get(t, t) != t:
            parent[t] = parent.get(parent[t], parent[t])
            t = parent[t]
        return t

    for s, t in equalities:
        parent.setdefault(s, s)
        parent.setdefault(t, t)
        rs, rt = find(s), find(t)
        if rs != rt:
            parent[rs] = rt

    groups: dict[Term, list[Term]] = {}
    for t in parent:
        groups.setdefault(find(t), []).append(t)
    rep: dict[Term, Term] = {}
    for members in groups.values():
        consts = sorted(m for m in members if m.is_const)
        chosen = consts[0] if consts else sorted(members)[0]
        for m in members:
            rep[m] = chosen
    return rep


def canonical_observation_key(obs: Observation) -> str:
    """Naming-invariant cache key: sorted atoms, variables renamed by first use."""

    def shape(oa):
        args = tuple(t.name if t.is_const else "*" for t in oa.atom.args)
        names = tuple(t.name for t in oa.atom.args)
        return (oa.label, oa.atom.predicate, args, oa.cost, names)

    ordered = sorted(obs.atoms, key=shape)
    rename: dict[str, str] = {}
    parts = []
    for oa in ordered:
        args = []
        for t in oa.atom.args:
            if t.is_const:
                args.append(t.name)
            else:
                args.append(rename.setdefault(t.name, f"v{len(rename)}"))
        parts.append(f"{oa.label}:{oa.atom.predicate}({','.join(args)})${oa.cost}")
    return ";".join(parts)


def plan(kb: KnowledgeBase, obs: Observation, cfg: PlannerConfig, cache: PlanCache) -> Plan:
    """Cached planning: build graph, encode, solve, extract.

    A cached entry is reused only when it came from an optimal solve;
    timeout incumbents are recomputed on the next request.
    """
    key = canonical_observation_key(obs)
    if cache.enabled:
        hit = cache.entries.get(key)
        if hit is not None and hit.optimal:
            cache.hits += 1
            return hit
    cache.misses += 1

    graph = build_graph(kb, obs, cfg.depth_limit)
    prob = encode(graph, kb, cfg.reward_enabled, cfg.reward_sign)
    started = time.perf_counter()
    hypothesis = solve(prob, cfg.timeout_ms)
    cache.solver_calls += 1
    cache.solver_work += hypothesis.work
    cache.solver_wall_s += time.perf_counter() - started
    result = extract_plan(hypothesis, graph, kb)
    if cache.enabled:
        cache.entries[key] = result
    return result
