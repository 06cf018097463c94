"""Exact solvers for hypothesis selection.

``solve`` runs a depth-first branch and bound over the binary variables of
an encoded problem, with unit-implication propagation on the linear
constraints and the all-assumed hypothesis as the root incumbent.
``brute_force_solve`` enumerates the whole assignment space structurally
and is the independent oracle the branch and bound is tested against.

Both routes decode through :func:`abdrl.ilp.decode`, and ties are broken
by the same total order: objective, then fewer included nodes, then the
lexicographically smallest node-id set, then the smallest equality set.
"""

from __future__ import annotations

import itertools
import time

from .graph import ProofGraph
from .ilp import (
    EPS,
    Hypothesis,
    IlpProblem,
    decode,
    encode,
    inconsistency_instances,
    pays_before,
    reward_candidate_table,
)
from .logic import KbValidationError, KnowledgeBase


class SizeGuardExceeded(ValueError):
    """The brute-force oracle refused an instance that is too large."""


def _check_observation_consistency(graph, instances):
    for a_id, b_id, needed in instances:
        if needed:
            continue
        if graph.node(a_id).origin == "observation" and graph.node(b_id).origin == "observation":
            raise KbValidationError(
                f"observation atoms {graph.node(a_id).atom} and {graph.node(b_id).atom} "
                "violate an inconsistency declaration"
            )


def _summarize(graph, reward_table, reward_decls, included, eq_active, reward_enabled, reward_sign, universe):
    """Canonical objective and tie key for a (node set, equality set).

    Sums run in node-id and declaration order so both solving routes
    produce bit-identical floats; the equality component of the tie is the
    bit vector over the sorted universe with inactive preferred.
    """
    excused = set()
    for e in graph.chain_edges:
        if all(t in included for t in e.tail_ids) and all(h in included for h in e.head_ids):
            excused.update(e.head_ids)
    for u in graph.unify_edges:
        if u.node_a in included and u.node_b in included and all(
            p in eq_active for p in u.equalities
        ):
            a, b = graph.node(u.node_a), graph.node(u.node_b)
            loser = u.node_b if (a.cost, a.id) < (b.cost, b.id) else u.node_a
            excused.add(loser)

    cost = 0.0
    for n in sorted(included):
        if n not in excused:
            cost += graph.node(n).cost

    reward = 0.0
    if reward_enabled:
        for d_idx, candidates in reward_table:
            for node_id, needed in candidates:
                if node_id in included and all(p in eq_active for p in needed):
                    reward += reward_decls[d_idx].reward
                    break
    objective = cost - (reward_sign * reward if reward_enabled else 0.0)
    bits = tuple(1 if pair in eq_active else 0 for pair in universe)
    tie = (objective, len(included), tuple(sorted(included)), bits)
    return objective, tie


# ---------------------------------------------------------------------------
# branch and bound

def solve(prob: IlpProblem, timeout_ms: int = 5000) -> Hypothesis:
    """Minimize the encoded objective exactly, or return the incumbent on timeout."""
    graph, kb = prob.graph, prob.kb
    instances = inconsistency_instances(graph, kb)
    _check_observation_consistency(graph, instances)
    reward_table = prob.reward_candidates

    nvars = len(prob.variables)
    value: list[int | None] = [None] * nvars

    # two-term +1/-1 constraints become direct implications; the rest get
    # generic slack propagation
    imp_if1: list[list[int]] = [[] for _ in range(nvars)]  # a=1 forces these to 1
    imp_if0: list[list[int]] = [[] for _ in range(nvars)]  # b=0 forces these to 0
    generic: list[tuple[tuple[tuple[int, float], ...], float]] = []
    for c in prob.constraints:
        if (
            len(c.coeffs) == 2
            and c.rhs == 0.0
            and {c.coeffs[0][1], c.coeffs[1][1]} == {1.0, -1.0}
        ):
            a = c.coeffs[0][0] if c.coeffs[0][1] > 0 else c.coeffs[1][0]
            b = c.coeffs[0][0] if c.coeffs[0][1] < 0 else c.coeffs[1][0]
            imp_if1[a].append(b)
            imp_if0[b].append(a)
        else:
            generic.append((c.coeffs, c.rhs))
    rhs = [g[1] for g in generic]
    minsum = [0.0] * len(generic)
    var_gcons: list[list[tuple[int, float]]] = [[] for _ in range(nvars)]
    for ci, (coeffs, _) in enumerate(generic):
        s = 0.0
        for vi, coeff in coeffs:
            var_gcons[vi].append((ci, coeff))
            if coeff < 0.0:
                s += coeff
        minsum[ci] = s

    obj = prob.objective
    lb = sum(c for c in obj.values() if c < 0.0)
    included_count = 0
    is_node_var = [False] * nvars
    for v in prob.node_var:
        is_node_var[v] = True

    trail: list[int] = []

    obs_nodes = frozenset(n.id for n in graph.nodes if n.origin == "observation")

    def do_assign(vi: int, val: int):
        nonlocal lb, included_count
        value[vi] = val
        trail.append(vi)
        if val == 1 and is_node_var[vi]:
            included_count += 1
        c = obj.get(vi)
        if c is not None:
            if c > 0.0 and val == 1:
                lb += c
            elif c < 0.0 and val == 0:
                lb -= c
        for ci, coeff in var_gcons[vi]:
            minsum[ci] += coeff * val - (coeff if coeff < 0.0 else 0.0)

    def unassign(vi: int):
        nonlocal lb, included_count
        val = value[vi]
        value[vi] = None
        if val == 1 and is_node_var[vi]:
            included_count -= 1
        c = obj.get(vi)
        if c is not None:
            if c > 0.0 and val == 1:
                lb -= c
            elif c < 0.0 and val == 0:
                lb += c
        for ci, coeff in var_gcons[vi]:
            minsum[ci] -= coeff * val - (coeff if coeff < 0.0 else 0.0)

    def backtrack(mark: int):
        while len(trail) > mark:
            unassign(trail.pop())

    def propagate(vi: int, val: int) -> bool:
        """Assign vi := val and run implications plus generic slack checks."""
        if value[vi] is not None:
            return value[vi] == val
        do_assign(vi, val)
        pending = [vi]
        head = 0
        while head < len(pending):
            cur = pending[head]
            head += 1
            cval = value[cur]
            targets = imp_if1[cur] if cval == 1 else imp_if0[cur]
            forced = 1 if cval == 1 else 0
            for nxt in targets:
                seen = value[nxt]
                if seen is None:
                    do_assign(nxt, forced)
                    pending.append(nxt)
                elif seen != forced:
                    return False
            for ci, _ in var_gcons[cur]:
                slack = rhs[ci] - minsum[ci]
                if slack < -EPS:
                    return False
                for wi, coeff in generic[ci][0]:
                    if value[wi] is not None:
                        continue
                    if coeff > 0.0:
                        if coeff > slack + EPS:
                            do_assign(wi, 0)
                            pending.append(wi)
                    elif -coeff > slack + EPS:
                        do_assign(wi, 1)
                        pending.append(wi)
        return True

    # seed fixed variables
    for v in prob.variables:
        if v.fixed is not None and not propagate(v.index, v.fixed):
            raise KbValidationError("encoded problem is infeasible at the root")

    reward_decls = kb.reward_decls
    root_obj, root_tie = _summarize(
        graph, reward_table, reward_decls, obs_nodes, frozenset(),
        prob.reward_enabled, prob.reward_sign, prob.eq_pairs,
    )
    best = {
        "tie": root_tie,
        "included": obs_nodes,
        "eqs": frozenset(),
    }

    branch = prob.branch_vars
    hints = prob.branch_hint
    deadline = time.perf_counter() + timeout_ms / 1000.0
    stats = {"nodes": 0, "timed_out": False}

    n_nodes = len(graph.nodes)
    node_vars = prob.node_var
    node_costs = [n.cost for n in graph.nodes]
    eq_items = [(pair, prob.eq_var[pair]) for pair in prob.eq_pairs]
    chain_list = [(prob.chain_var[e.id], e.head_ids) for e in graph.chain_edges]
    unify_list = []
    for u in graph.unify_edges:
        if pays_before(graph, u.node_a, u.node_b):
            winner, loser = u.node_a, u.node_b
        else:
            winner, loser = u.node_b, u.node_a
        unify_list.append((winner, loser, tuple(prob.eq_var[p] for p in u.equalities)))
    rho_list = sorted(prob.reward_var.items())

    def leaf():
        incl = [value[v] == 1 for v in node_vars]
        excused = [False] * n_nodes
        for yv, heads in chain_list:
            if value[yv] == 1:
                for h in heads:
                    excused[h] = True
        for winner, loser, req in unify_list:
            if incl[winner] and incl[loser] and all(value[q] == 1 for q in req):
                excused[loser] = True
        cost = 0.0
        included_ids = []
        for i in range(n_nodes):
            if incl[i]:
                included_ids.append(i)
                if not excused[i]:
                    cost += node_costs[i]
        reward = 0.0
        if prob.reward_enabled:
            for d_idx, rho in rho_list:
                if value[rho] == 1:
                    reward += reward_decls[d_idx].reward
        objective = cost - (prob.reward_sign * reward if prob.reward_enabled else 0.0)
        if objective > best["tie"][0] + EPS:
            return
        bits = tuple(1 if value[vi] == 1 else 0 for _, vi in eq_items)
        tie = (objective, len(included_ids), tuple(included_ids), bits)
        if tie < best["tie"]:
            best["tie"] = tie
            best["included"] = frozenset(included_ids)
            best["eqs"] = frozenset(pair for pair, vi in eq_items if value[vi] == 1)

    class Timeout(Exception):
        pass

    def dfs(i: int):
        stats["nodes"] += 1
        if stats["nodes"] % 256 == 0 and time.perf_counter() > deadline:
            raise Timeout
        if lb > best["tie"][0] + EPS:
            return
        # a subtree that can at best tie the objective loses the tie-break
        # once it already includes more nodes than the incumbent
        if lb > best["tie"][0] - EPS and included_count > best["tie"][1]:
            return
        while i < len(branch) and value[branch[i]] is not None:
            i += 1
        if i == len(branch):
            leaf()
            return
        vi = branch[i]
        first = hints.get(vi, 0)
        for val in (first, 1 - first):
            mark = len(trail)
            if propagate(vi, val):
                dfs(i + 1)
            backtrack(mark)

    optimal = True
    try:
        dfs(0)
    except Timeout:
        optimal = False
        stats["timed_out"] = True

    return decode(
        graph, kb, best["included"], best["eqs"],
        prob.reward_enabled, prob.reward_sign,
        optimal=optimal, work=stats["nodes"],
    )


# ---------------------------------------------------------------------------
# brute-force oracle

def brute_force_solve(
    graph: ProofGraph,
    kb: KnowledgeBase,
    reward_enabled: bool,
    reward_sign: int = 1,
    node_limit: int = 25,
    work_limit: int = 250_000,
) -> Hypothesis:
    """Enumerate every feasible assignment structurally and take the optimum.

    Free choices are which chain applications to perform (an
    ancestor-closed edge set) and which equality merges to assume (unions
    of unify-edge and reward requirement sets, transitively closed).
    Everything else is a canonical function of those choices.
    """
    if len(graph.nodes) > node_limit:
        raise SizeGuardExceeded(f"{len(graph.nodes)} nodes exceeds limit {node_limit}")

    instances = inconsistency_instances(graph, kb)
    _check_observation_consistency(graph, instances)
    reward_table = reward_candidate_table(graph, kb)
    reward_decls = kb.reward_decls

    edges = graph.chain_edges
    prereq: list[list[int]] = []
    for e in edges:
        need = set()
        for h in e.head_ids:
            creator = graph.creator_of(h)
            if creator is not None:
                need.add(creator.id)
        prereq.append(sorted(need))

    closed_sets: list[frozenset[int]] = []

    def enum_edges(i: int, chosen: set[int]):
        if len(closed_sets) > work_limit:
            raise SizeGuardExceeded("too many chain-edge subsets")
        if i == len(edges):
            closed_sets.append(frozenset(chosen))
            return
        enum_edges(i + 1, chosen)
        if all(p in chosen for p in prereq[i]):
            chosen.add(i)
            enum_edges(i + 1, chosen)
            chosen.remove(i)

    enum_edges(0, set())

    obs_nodes = frozenset(n.id for n in graph.nodes if n.origin == "observation")
    universe = sorted(graph.equality_vars)
    best_tie = None
    best_state = None
    work = 0

    for chosen in sorted(closed_sets, key=sorted):
        included = set(obs_nodes)
        for eid in chosen:
            included.update(edges[eid].tail_ids)
        included = frozenset(included)

        moves: set[tuple] = set()
        for u in graph.unify_edges:
            if u.node_a not in included or u.node_b not in included or not u.equalities:
                continue
            if any(s.is_const and t.is_const for s, t in u.equalities):
                continue
            moves.add(tuple(sorted(u.equalities)))
        for d_idx, candidates in reward_table:
            for node_id, needed in candidates:
                if node_id in included and needed:
                    moves.add(tuple(sorted(needed)))
        move_list = sorted(moves)
        work += 1 << len(move_list)
        if work > work_limit:
            raise SizeGuardExceeded("equality merge space too large")

        for picks in itertools.product((False, True), repeat=len(move_list)):
            parent: dict = {}

            def find(t):
                while parent.get(t, t) != t:
                    parent[t] = parent.get(parent[t], parent[t])
                    t = parent[t]
                return t

            ok = True
            for move, take in zip(move_list, picks):
                if not take:
                    continue
                for s, t in move:
                    parent.setdefault(s, s)
                    parent.setdefault(t, t)
                    rs, rt = find(s), find(t)
                    if rs != rt:
                        parent[rs] = rt
            # a component may hold at most one constant
            roots: dict = {}
            for t in parent:
                if t.is_const:
                    r = find(t)
                    if r in roots and roots[r] != t:
                        ok = False
                        break
                    roots[r] = t
            if not ok:
                continue
            eqs = frozenset(
                pair
                for pair in universe
                if pair[0] in parent and pair[1] in parent and find(pair[0]) == find(pair[1])
            )
            violated = False
            for a_id, b_id, needed in instances:
                if a_id in included and b_id in included and all(p in eqs for p in needed):
                    violated = True
                    break
            if violated:
                continue
            _, tie = _summarize(
                graph, reward_table, reward_decls, included, eqs,
                reward_enabled, reward_sign, universe,
            )
            if best_tie is None or tie < best_tie:
                best_tie = tie
                best_state = (included, eqs)

    if best_state is None:
        raise KbValidationError("no feasible hypothesis (inconsistent observation)")
    included, eqs = best_state
    return decode(
        graph, kb, included, eqs, reward_enabled, reward_sign, optimal=True, work=work
    )


def solve_observation(kb, obs, depth_limit, reward_enabled, reward_sign=1, timeout_ms=5000):
    """Convenience path: build the graph, encode, and solve in one call."""
    from .graph import build_graph

    graph = build_graph(kb, obs, depth_limit)
    prob = encode(graph, kb, reward_enabled, reward_sign)
    return graph, prob, solve(prob, timeout_ms)
