import random

from abdrl.graph import build_graph, graph_stats
from abdrl.logic import Observation, parse_knowledge_base, parse_observation

from instancegen import generate_checked

QP_KB = parse_knowledge_base("rule r1 { p(x):1.2 => q(x) }")
QP_OBS = parse_observation("goal: q(C)$10")

GROCERY_KB = parse_knowledge_base(
    """
action get/1 arg=0
action buy/1 arg=0
action go/1 arg=0
action have/2 arg=1
rule buy-to-get { buy(x):1.1 => get(x) }
rule shop { go(Grocery):0.55 ^ have(m,Money):0.55 => buy(x) }
"""
)
GROCERY_OBS = parse_observation("init: have(M,Money) ^ money(M); goal: get(Apple) ^ apple(Apple)")


def test_single_chain_weighted_cost():
    g = build_graph(QP_KB, QP_OBS, 1)
    assert graph_stats(g) == (2, 1, 0)
    hypothesized = g.nodes[1]
    assert str(hypothesized.atom) == "p(C)"
    assert hypothesized.cost == 12.0  # 10 * 1.2, exactly
    assert hypothesized.depth == 1


def test_depth_zero_yields_observation_nodes_only():
    g = build_graph(QP_KB, QP_OBS, 0)
    assert graph_stats(g) == (1, 0, 0)
    assert all(n.origin == "observation" for n in g.nodes)


def test_empty_observation_builds_empty_graph():
    g = build_graph(QP_KB, Observation(()), 3)
    assert graph_stats(g) == (0, 0, 0)


def test_depth_zero_unify_count_is_same_predicate_pairs():
    obs = parse_observation("init: p(A) ^ p(B) ^ q(A); goal: r(B)")
    kb = parse_knowledge_base("rule r1 { s(x) => t(x) }")
    g = build_graph(kb, obs, 0)
    assert graph_stats(g) == (4, 0, 1)  # only the p(A)-p(B) pair


def test_grocery_graph_contains_expected_nodes_and_unification():
    g = build_graph(GROCERY_KB, GROCERY_OBS, 3)
    atoms = {str(n.atom) for n in g.nodes}
    assert {"go(Grocery)", "buy(Apple)", "have(u1,Money)"} <= atoms
    labels = {
        tuple(f"{s}={t}" for s, t in u.equalities)
        for u in g.unify_edges
    }
    assert ("M=u1",) in labels


def test_observation_node_invariants():
    g = build_graph(GROCERY_KB, GROCERY_OBS, 3)
    for n in g.nodes:
        assert (n.origin == "observation") == (n.depth == 0)
        if n.origin == "observation":
            assert n.obs_label in ("init", "goal")


def test_every_hypothesized_node_created_by_exactly_one_edge():
    g = build_graph(GROCERY_KB, GROCERY_OBS, 3)
    created = {}
    for e in g.chain_edges:
        for t in e.tail_ids:
            assert t not in created
            created[t] = e.id
    for n in g.nodes:
        if n.origin != "observation":
            assert n.id in created


def test_cost_propagation_invariant_on_random_instances():
    rng = random.Random(77)
    for _ in range(30):
        kb, obs, depth, g = generate_checked(rng)
        for e in g.chain_edges:
            rule = next(r for r in kb.rules if r.id == e.rule_id)
            parent = sum(g.nodes[h].cost for h in e.head_ids)
            for (atom, weight), tail in zip(rule.antecedents, e.tail_ids):
                assert g.nodes[tail].cost == parent * weight


def test_acyclic_by_topological_sort_on_random_instances():
    rng = random.Random(78)
    for _ in range(30):
        _, _, _, g = generate_checked(rng)
        indeg = {n.id: 0 for n in g.nodes}
        succ = {n.id: [] for n in g.nodes}
        for e in g.chain_edges:
            for h in e.head_ids:
                for t in e.tail_ids:
                    succ[h].append(t)
                    indeg[t] += 1
        queue = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            cur = queue.pop()
            seen += 1
            for nxt in succ[cur]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    queue.append(nxt)
        assert seen == len(g.nodes)


def test_depth_monotonicity_graphs_are_prefixes():
    rng = random.Random(79)
    for _ in range(15):
        kb, obs, depth, g_full = generate_checked(rng)
        for d in range(depth):
            g_small = build_graph(kb, obs, d)
            full_atoms = [str(n.atom) for n in g_full.nodes]
            small_atoms = [str(n.atom) for n in g_small.nodes]
            assert full_atoms[: len(small_atoms)] == small_atoms
            small_edges = [(e.rule_id, e.head_ids, e.tail_ids) for e in g_small.chain_edges]
            full_edges = [(e.rule_id, e.head_ids, e.tail_ids) for e in g_full.chain_edges]
            assert full_edges[: len(small_edges)] == small_edges


def test_no_grounding_constants_outside_observation_stay_out():
    # rules may mention a large constant universe; the graph only grows by
    # rule application, never by enumerating constants
    lines = [f"rule z{i} {{ zb(Z{i}) => za(Z{i}) }}" for i in range(50)]
    lines.append("rule r { p(x):0.5 => q(x) }")
    kb = parse_knowledge_base("\n".join(lines))
    obs = parse_observation("goal: q(C)$10")
    g = build_graph(kb, obs, 4)
    assert graph_stats(g)[0] == 2
    names = {t.name for n in g.nodes for t in n.atom.args}
    assert not any(name.startswith("Z") for name in names)


def test_fresh_variables_avoid_used_names():
    kb = parse_knowledge_base("rule r { p(y):0.5 => q(x) }")
    obs = parse_observation("goal: q(u1)$10")  # observation already uses u1
    g = build_graph(kb, obs, 1)
    fresh = g.nodes[1].atom.args[0]
    assert fresh.name == "u2"


def test_build_is_deterministic():
    a = build_graph(GROCERY_KB, GROCERY_OBS, 3)
    b = build_graph(GROCERY_KB, GROCERY_OBS, 3)
    assert [(n.id, str(n.atom), n.cost) for n in a.nodes] == [
        (n.id, str(n.atom), n.cost) for n in b.nodes
    ]
    assert [(e.rule_id, e.head_ids, e.tail_ids) for e in a.chain_edges] == [
        (e.rule_id, e.head_ids, e.tail_ids) for e in b.chain_edges
    ]


def test_multi_consequent_rule_requires_joint_match():
    kb = parse_knowledge_base("rule r { a(x):0.5 => p(x) ^ q(x) }")
    # only p present: no application
    g1 = build_graph(kb, parse_observation("goal: p(C)"), 2)
    assert graph_stats(g1)[1] == 0
    # both present with consistent binding: one application over both heads
    g2 = build_graph(kb, parse_observation("goal: p(C) ^ q(C)"), 2)
    assert graph_stats(g2)[1] == 1
    edge = g2.chain_edges[0]
    assert len(edge.head_ids) == 2
    # inconsistent binding: no application
    g3 = build_graph(kb, parse_observation("goal: p(C) ^ q(D)"), 2)
    assert graph_stats(g3)[1] == 0


def test_multi_head_parent_cost_is_head_sum():
    kb = parse_knowledge_base("rule r { a(x):0.5 => p(x) ^ q(x) }")
    g = build_graph(kb, parse_observation("goal: p(C)$10 ^ q(C)$6"), 2)
    tail = g.nodes[g.chain_edges[0].tail_ids[0]]
    assert tail.cost == (10.0 + 6.0) * 0.5
