"""Candidate-hypothesis graph construction.

Starting from the observation atoms, every applicable rule is applied
backward breadth-first up to a depth limit, then unification edges are
enumerated between all same-predicate node pairs.  Costs propagate from
observation costs through antecedent weights.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .logic import (
    Atom,
    KnowledgeBase,
    Observation,
    Term,
    canonical_pair,
    check_observation_against,
    unify,
    var,
)

DEFAULT_DEPTH_LIMIT = 5

OBSERVATION = "observation"
HYPOTHESIZED = "hypothesized"


@dataclass(frozen=True)
class GraphNode:
    id: int
    atom: Atom
    cost: float
    depth: int
    origin: str  # OBSERVATION | HYPOTHESIZED
    obs_label: str | None = None  # init/goal for observation nodes


@dataclass(frozen=True)
class ChainEdge:
    id: int
    rule_id: str
    head_ids: tuple[int, ...]  # consequent instances being explained
    tail_ids: tuple[int, ...]  # antecedent instances created by this application
    substitution: dict[Term, Term] = field(compare=False)


@dataclass(frozen=True)
class UnifyEdge:
    id: int
    node_a: int
    node_b: int
    equalities: tuple[tuple[Term, Term], ...]


@dataclass
class ProofGraph:
    nodes: list[GraphNode]
    chain_edges: list[ChainEdge]
    unify_edges: list[UnifyEdge]
    equality_vars: set[tuple[Term, Term]]
    depth_limit: int

    def node(self, node_id: int) -> GraphNode:
        return self.nodes[node_id]

    def creator_of(self, node_id: int) -> ChainEdge | None:
        """The unique chain edge that created a hypothesized node."""
        return self._creator.get(node_id)

    def explainers_of(self, node_id: int) -> list[ChainEdge]:
        """Chain edges that have this node among their heads."""
        return self._explainers.get(node_id, [])

    def finalize(self):
        self._creator: dict[int, ChainEdge] = {}
        self._explainers: dict[int, list[ChainEdge]] = {}
        for edge in self.chain_edges:
            for t in edge.tail_ids:
                self._creator[t] = edge
            for h in edge.head_ids:
                self._explainers.setdefault(h, []).append(edge)
        return self


def graph_stats(g: ProofGraph) -> tuple[int, int, int]:
    return len(g.nodes), len(g.chain_edges), len(g.unify_edges)


def build_graph(kb: KnowledgeBase, obs: Observation, depth_limit: int = DEFAULT_DEPTH_LIMIT) -> ProofGraph:
    """Backward-chain the observation against the KB and add unify edges.

    Deterministic: nodes are numbered in creation order, applications are
    processed depth layer by depth layer sorted by (rule id, head ids), so
    a depth-d graph is a prefix of the depth-(d+1) graph.
    """
    if depth_limit < 0:
        raise ValueError("depth_limit must be >= 0")
    check_observation_against(kb, obs)

    nodes: list[GraphNode] = []
    chain_edges: list[ChainEdge] = []
    used_names: set[str] = set()
    for rule in kb.rules:
        for atom in rule.antecedent_atoms() + rule.consequents:
            used_names.update(t.name for t in atom.args)

    for oa in obs.atoms:
        nodes.append(GraphNode(len(nodes), oa.atom, oa.cost, 0, OBSERVATION, oa.label))
        used_names.update(t.name for t in oa.atom.args)

    rules_by_cons = kb.rules_by_consequent()
    applied: set[tuple[str, tuple[int, ...]]] = set()
    fresh_counter = itertools.count(1)

    def fresh_term() -> Term:
        while True:
            name = f"u{next(fresh_counter)}"
            if name not in used_names:
                used_names.add(name)
                return var(name)

    def match_consequent(pattern: Atom, node: GraphNode, subst: dict[Term, Term]):
        """Extend subst so pattern matches the node atom, or return None."""
        if pattern.predicate != node.atom.predicate or pattern.arity != node.atom.arity:
            return None
        out = dict(subst)
        for p, t in zip(pattern.args, node.atom.args):
            if p.is_const:
                if p != t:
                    return None
            else:
                bound = out.get(p)
                if bound is None:
                    out[p] = t
                elif bound != t:
                    return None
        return out

    for round_depth in range(1, depth_limit + 1):
        by_pred: dict[str, list[GraphNode]] = {}
        for n in nodes:
            by_pred.setdefault(n.atom.predicate, []).append(n)

        applications = []
        seen_rules = set()
        for pred in by_pred:
            for rule in rules_by_cons.get(pred, ()):
                if rule.id in seen_rules:
                    continue
                seen_rules.add(rule.id)
                candidate_lists = [by_pred.get(c.predicate, []) for c in rule.consequents]
                if any(not lst for lst in candidate_lists):
                    continue
                for combo in itertools.product(*candidate_lists):
                    if max(n.depth for n in combo) != round_depth - 1:
                        continue
                    head_ids = tuple(n.id for n in combo)
                    if (rule.id, head_ids) in applied:
                        continue
                    subst: dict[Term, Term] | None = {}
                    for pattern, node in zip(rule.consequents, combo):
                        subst = match_consequent(pattern, node, subst)
                        if subst is None:
                            break
                    if subst is None:
                        continue
                    applications.append((rule.id, head_ids, rule, subst))

        applications.sort(key=lambda app: (app[0], app[1]))
        for rule_id, head_ids, rule, subst in applications:
            if (rule_id, head_ids) in applied:
                continue
            applied.add((rule_id, head_ids))
            subst = dict(subst)
            parent_cost = sum(nodes[h].cost for h in head_ids)
            tail_ids = []
            for pattern, weight in rule.antecedents:
                args = []
                for p in pattern.args:
                    if p.is_const:
                        args.append(p)
                    else:
                        if p not in subst:
                            subst[p] = fresh_term()
                        args.append(subst[p])
                atom = Atom(pattern.predicate, tuple(args))
                node = GraphNode(
                    len(nodes), atom, parent_cost * weight, round_depth, HYPOTHESIZED
                )
                nodes.append(node)
                tail_ids.append(node.id)
            chain_edges.append(
                ChainEdge(len(chain_edges), rule_id, head_ids, tuple(tail_ids), subst)
            )

    unify_edges: list[UnifyEdge] = []
    by_sig: dict[tuple[str, int], list[GraphNode]] = {}
    for n in nodes:
        by_sig.setdefault((n.atom.predicate, n.atom.arity), []).append(n)
    for sig in sorted(by_sig):
        group = by_sig[sig]
        for a, b in itertools.combinations(group, 2):
            eqs = unify(a.atom, b.atom)
            unify_edges.append(UnifyEdge(len(unify_edges), a.id, b.id, eqs))

    equality_vars = _induced_equality_universe(unify_edges)
    graph = ProofGraph(nodes, chain_edges, unify_edges, equality_vars, depth_limit)
    return graph.finalize()


def _induced_equality_universe(unify_edges) -> set[tuple[Term, Term]]:
    """All term pairs reachable through chains of potential equalities.

    Pairs of two distinct constants never link components (they can never
    hold), but they do enter the universe when both constants share a
    component, so the solver can pin them to zero under transitivity.
    """
    parent: dict[Term, Term] = {}

    def find(t: Term) -> Term:
        while parent.get(t, t) != t:
            parent[t] = parent.get(parent[t], parent[t])
            t = parent[t]
        return t

    def union(s: Term, t: Term):
        rs, rt = find(s), find(t)
        if rs != rt:
            parent[rs] = rt

    for edge in unify_edges:
        for s, t in edge.equalities:
            if s.is_const and t.is_const:
                continue
            parent.setdefault(s, s)
            parent.setdefault(t, t)
            union(s, t)

    components: dict[Term, list[Term]] = {}
    for t in parent:
        components.setdefault(find(t), []).append(t)

    universe: set[tuple[Term, Term]] = set()
    for members in components.values():
        for s, t in itertools.combinations(sorted(members), 2):
            universe.add(canonical_pair(s, t))
    # const-const pairs named directly by a unify edge sit outside every
    # component; they still need (always-zero) variables
    for edge in unify_edges:
        for s, t in edge.equalities:
            if s.is_const and t.is_const:
                universe.add(canonical_pair(s, t))
    return universe
