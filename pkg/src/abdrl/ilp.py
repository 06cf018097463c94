"""0-1 integer program encoding of hypothesis selection over a proof graph.

Every node, chain edge, unify edge, candidate term equality, and payment
gets a binary variable.  The objective is the reward-augmented weighted
abduction score written as a minimization: paid cost minus collected
reward.  All constraints are linear inequalities (<=), so the problem can
be dumped in LP text form and solved by the branch-and-bound in
``solver``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .graph import ProofGraph
from .logic import Atom, KnowledgeBase, Term, canonical_pair, format_pair

EPS = 1e-9


@dataclass(frozen=True)
class IlpVar:
    index: int
    name: str
    kind: str  # node | chain | unify | eq | pay | reward | aux
    fixed: int | None = None


@dataclass(frozen=True)
class LinearConstraint:
    """sum(coeff * var) <= rhs"""

    coeffs: tuple[tuple[int, float], ...]
    rhs: float
    label: str = ""


@dataclass
class IlpProblem:
    variables: list[IlpVar]
    constraints: list[LinearConstraint]
    objective: dict[int, float]
    graph: ProofGraph
    kb: KnowledgeBase
    reward_enabled: bool
    reward_sign: int
    node_var: list[int]
    pay_var: list[int]
    chain_var: list[int]
    unify_var: list[int | None]
    eq_pairs: list[tuple[Term, Term]]
    eq_var: dict[tuple[Term, Term], int]
    reward_candidates: list[tuple[int, list[tuple[int, list[tuple[Term, Term]]]]]]
    reward_var: dict[int, int] = field(default_factory=dict)  # decl index -> rho
    branch_vars: list[int] = field(default_factory=list)
    branch_hint: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Hypothesis:
    """A decoded solution: the selected subgraph plus its scoring."""

    node_ids: frozenset[int]
    resolved_atoms: tuple[str, ...]
    active_chain_edges: frozenset[int]
    active_unify_edges: frozenset[int]
    equalities: tuple[tuple[Term, Term], ...]
    paid_node_ids: frozenset[int]
    cost: float
    reward: float
    score: float
    objective: float
    tie_key: tuple = ()
    optimal: bool = True
    work: int = 0  # search effort that produced this hypothesis


def evaluate(h: Hypothesis) -> float:
    """The value being maximized: minus paid cost plus the reward term."""
    return h.score


def tie_key(objective, node_ids, eq_bits):
    """Total order on assignments: objective, then fewer nodes, then the
    lexicographically smallest node-id set, then the smallest equality
    bit-vector (inactive preferred position by position)."""
    return (objective, len(node_ids), tuple(sorted(node_ids)), eq_bits)


def eq_bit_vector(eq_pairs_sorted, active) -> tuple[int, ...]:
    return tuple(1 if pair in active else 0 for pair in eq_pairs_sorted)


def pays_before(graph: ProofGraph, a: int, b: int) -> bool:
    """Payment order: on a unify edge the cheaper node keeps paying.

    Strict total order by (cost, id); the larger side may drop payment.
    """
    na, nb = graph.node(a), graph.node(b)
    return (na.cost, na.id) < (nb.cost, nb.id)


def inconsistency_instances(graph: ProofGraph, kb: KnowledgeBase):
    """Ground the inconsistency declarations against graph node pairs.

    Each instance is (node_a, node_b, needed_equalities); the pair is
    forbidden whenever both nodes are included and all needed equalities
    hold.  Instances that can never trigger (two distinct constants, or a
    pair outside the equality universe) are dropped.
    """
    instances = []
    seen = set()
    for decl in kb.inconsistency_decls:
        for a in graph.nodes:
            if a.atom.predicate != decl.first.predicate or a.atom.arity != decl.first.arity:
                continue
            for b in graph.nodes:
                if a.id == b.id:
                    continue
                if b.atom.predicate != decl.second.predicate or b.atom.arity != decl.second.arity:
                    continue
                needed = _pattern_pair_requirements(decl.first, decl.second, a.atom, b.atom, graph)
                if needed is None:
                    continue
                key = (min(a.id, b.id), max(a.id, b.id), tuple(sorted(needed)))
                if key in seen:
                    continue
                seen.add(key)
                instances.append((a.id, b.id, tuple(sorted(needed))))
    return instances


def _pattern_pair_requirements(p1: Atom, p2: Atom, a1: Atom, a2: Atom, graph: ProofGraph):
    """Equalities required for (a1, a2) to instantiate patterns (p1, p2)."""
    groups: dict[Term, list[Term]] = {}
    pairs: set[tuple[Term, Term]] = set()

    def visit(pattern: Atom, atom: Atom):
        for p, t in zip(pattern.args, atom.args):
            if p.is_const:
                if p != t:
                    pairs.add(canonical_pair(p, t))
            else:
                groups.setdefault(p, []).append(t)

    visit(p1, a1)
    visit(p2, a2)
    for terms in groups.values():
        for s, t in zip(terms, terms[1:]):
            if s != t:
                pairs.add(canonical_pair(s, t))
    needed = []
    for pair in pairs:
        s, t = pair
        if s.is_const and t.is_const:
            return None  # distinct constants can never be equal
        if pair not in graph.equality_vars:
            return None  # never proposed by any unification
        needed.append(pair)
    return needed


def reward_candidate_table(graph: ProofGraph, kb: KnowledgeBase):
    """For each reward declaration the nodes that can realize its pattern.

    A node realizes the ground pattern when its arguments already equal the
    declared constants or can be made equal through available equality
    variables.
    """
    table = []
    for d_idx, decl in enumerate(kb.reward_decls):
        candidates = []
        for n in graph.nodes:
            if n.atom.predicate != decl.pattern.predicate or n.atom.arity != decl.pattern.arity:
                continue
            needed = []
            ok = True
            for want, have in zip(decl.pattern.args, n.atom.args):
                if want == have:
                    continue
                pair = canonical_pair(want, have)
                if (want.is_const and have.is_const) or pair not in graph.equality_vars:
                    ok = False
                    break
                needed.append(pair)
            if ok:
                candidates.append((n.id, sorted(set(needed))))
        table.append((d_idx, candidates))
    return table


def encode(graph: ProofGraph, kb: KnowledgeBase, reward_enabled: bool, reward_sign: int = 1) -> IlpProblem:
    """Build the 0-1 program whose optimum is the solution hypothesis."""
    variables: list[IlpVar] = []
    constraints: list[LinearConstraint] = []
    objective: dict[int, float] = {}

    def new_var(name, kind, fixed=None):
        v = IlpVar(len(variables), name, kind, fixed)
        variables.append(v)
        return v.index

    node_var = [
        new_var(f"x_n{n.id}", "node", fixed=1 if n.origin == "observation" else None)
        for n in graph.nodes
    ]
    chain_var = [new_var(f"y_c{e.id}", "chain") for e in graph.chain_edges]
    eq_pairs = sorted(graph.equality_vars)
    eq_var = {}
    for pair in eq_pairs:
        fixed = 0 if (pair[0].is_const and pair[1].is_const) else None
        eq_var[pair] = new_var(f"q_{format_pair(pair)}", "eq", fixed=fixed)
    # identical-atom unifications are unconditional once both nodes are in,
    # so they need no activation variable of their own
    unify_var: list[int | None] = [
        new_var(f"z_u{u.id}", "unify") if u.equalities else None for u in graph.unify_edges
    ]
    pay_var = [new_var(f"p_n{n.id}", "pay") for n in graph.nodes]

    def le(coeffs, rhs, label=""):
        constraints.append(LinearConstraint(tuple(coeffs), rhs, label))

    # chain edges: active iff every tail is included, and only under their heads
    for e in graph.chain_edges:
        y = chain_var[e.id]
        for h in e.head_ids:
            le([(y, 1.0), (node_var[h], -1.0)], 0.0, f"chain{e.id}_head{h}")
        for t in e.tail_ids:
            le([(y, 1.0), (node_var[t], -1.0)], 0.0, f"chain{e.id}_tail{t}")
            le([(node_var[t], 1.0), (y, -1.0)], 0.0, f"tail{t}_chain{e.id}")

    # unify edges: active exactly when both nodes are included and all
    # argument equalities hold
    for u in graph.unify_edges:
        z = unify_var[u.id]
        if z is None:
            continue
        members = [node_var[u.node_a], node_var[u.node_b]]
        members += [eq_var[pair] for pair in u.equalities]
        for m in members:
            le([(z, 1.0), (m, -1.0)], 0.0, f"unify{u.id}_req")
        le([(m, 1.0) for m in members] + [(z, -1.0)], float(len(members) - 1), f"unify{u.id}_tight")

    # equality transitivity over each potential-equality component
    for a, b, c in _transitivity_triples(eq_pairs):
        qab, qbc, qac = eq_var[a], eq_var[b], eq_var[c]
        le([(qab, 1.0), (qbc, 1.0), (qac, -1.0)], 1.0, "trans")
        le([(qab, 1.0), (qac, 1.0), (qbc, -1.0)], 1.0, "trans")
        le([(qbc, 1.0), (qac, 1.0), (qab, -1.0)], 1.0, "trans")

    # payments: an included node pays unless chained-from or unified with a
    # node that pays before it
    excuses: list[list[int]] = [[] for _ in graph.nodes]
    for e in graph.chain_edges:
        for h in e.head_ids:
            excuses[h].append(chain_var[e.id])
    for u in graph.unify_edges:
        if pays_before(graph, u.node_a, u.node_b):
            winner, loser = u.node_a, u.node_b
        else:
            winner, loser = u.node_b, u.node_a
        z = unify_var[u.id]
        # folded identical-atom edge: the winner's inclusion is the excuse
        excuses[loser].append(z if z is not None else node_var[winner])
    for n in graph.nodes:
        p, x = pay_var[n.id], node_var[n.id]
        coeffs = [(x, 1.0), (p, -1.0)] + [(v, -1.0) for v in excuses[n.id]]
        le(coeffs, 0.0, f"pay{n.id}_low")
        le([(p, 1.0), (x, -1.0)], 0.0, f"pay{n.id}_high")
        objective[p] = objective.get(p, 0.0) + n.cost

    # rewards: one activation per declaration, realized by any included
    # matching node; the and/or ladder is tight in both directions
    reward_candidates = reward_candidate_table(graph, kb)
    reward_var: dict[int, int] = {}
    for d_idx, candidates in reward_candidates:
        if not candidates:
            continue
        rho = new_var(f"r_d{d_idx}", "reward")
        reward_var[d_idx] = rho
        mus = []
        for node_id, needed in candidates:
            mu = new_var(f"m_d{d_idx}_n{node_id}", "aux")
            members = [node_var[node_id]] + [eq_var[p] for p in needed]
            for m in members:
                le([(mu, 1.0), (m, -1.0)], 0.0, "mu_req")
            le([(m, 1.0) for m in members] + [(mu, -1.0)], float(len(members) - 1), "mu_tight")
            le([(mu, 1.0), (rho, -1.0)], 0.0, "rho_low")
            mus.append(mu)
        le([(rho, 1.0)] + [(mu, -1.0) for mu in mus], 0.0, "rho_high")
        if reward_enabled:
            objective[rho] = objective.get(rho, 0.0) - reward_sign * kb.reward_decls[d_idx].reward

    # declared mutual exclusions under the active equalities
    for a_id, b_id, needed in inconsistency_instances(graph, kb):
        coeffs = [(node_var[a_id], 1.0), (node_var[b_id], 1.0)]
        coeffs += [(eq_var[p], 1.0) for p in needed]
        le(coeffs, float(1 + len(needed)), f"incons_{a_id}_{b_id}")

    prob = IlpProblem(
        variables=variables,
        constraints=constraints,
        objective=objective,
        graph=graph,
        kb=kb,
        reward_enabled=reward_enabled,
        reward_sign=reward_sign,
        node_var=node_var,
        pay_var=pay_var,
        chain_var=chain_var,
        unify_var=unify_var,
        eq_pairs=eq_pairs,
        eq_var=eq_var,
        reward_candidates=reward_candidates,
        reward_var=reward_var,
    )
    prob.branch_vars = chain_var + [
        eq_var[p] for p in eq_pairs if variables[eq_var[p]].fixed is None
    ]
    prob.branch_hint = _branch_hints(prob)
    return prob


def _transitivity_triples(eq_pairs):
    """Unordered term triples fully covered by the equality universe."""
    pair_set = set(eq_pairs)
    by_term: dict[Term, set[Term]] = {}
    for s, t in eq_pairs:
        by_term.setdefault(s, set()).add(t)
        by_term.setdefault(t, set()).add(s)
    terms = sorted(by_term)
    seen = set()
    for b in terms:
        neighbors = sorted(by_term[b])
        for a, c in itertools.combinations(neighbors, 2):
            if canonical_pair(a, c) not in pair_set:
                continue
            trio = tuple(sorted((a, b, c)))
            if trio in seen:
                continue
            seen.add(trio)
            yield (
                canonical_pair(trio[0], trio[1]),
                canonical_pair(trio[1], trio[2]),
                canonical_pair(trio[0], trio[2]),
            )


def _branch_hints(prob: IlpProblem) -> dict[int, int]:
    """Preferred first value per branch variable.

    Each node gets an optimistic "effective cost": zero if some cheaper
    same-predicate partner might absorb it, else the best of assuming it or
    explaining it onward.  A chain edge is tried active first when its
    tails' effective cost does not exceed what its heads cost; equalities
    are tried active first since they only enable excuses and rewards.
    """
    graph = prob.graph
    absorbable = [False] * len(graph.nodes)
    for u in graph.unify_edges:
        a, b = graph.node(u.node_a), graph.node(u.node_b)
        loser = b.id if (a.cost, a.id) < (b.cost, b.id) else a.id
        absorbable[loser] = True

    eff = [0.0] * len(graph.nodes)
    for node in reversed(graph.nodes):
        best = 0.0 if absorbable[node.id] else node.cost
        for e in graph.explainers_of(node.id):
            total = sum(eff[t] for t in e.tail_ids)
            if total < best:
                best = total
        eff[node.id] = best

    hints = {}
    for e in graph.chain_edges:
        head_cost = sum(graph.node(h).cost for h in e.head_ids)
        tail_eff = sum(eff[t] for t in e.tail_ids)
        hints[prob.chain_var[e.id]] = 1 if tail_eff <= head_cost + EPS else 0
    for pair in prob.eq_pairs:
        if prob.variables[prob.eq_var[pair]].fixed is None:
            hints[prob.eq_var[pair]] = 1
    return hints


# ---------------------------------------------------------------------------
# canonical decoding shared by the exact solver and the brute-force oracle

def decode(
    graph: ProofGraph,
    kb: KnowledgeBase,
    included: frozenset[int],
    eq_active: frozenset[tuple[Term, Term]],
    reward_enabled: bool,
    reward_sign: int = 1,
    optimal: bool = True,
    work: int = 0,
) -> Hypothesis:
    """Turn a (node set, equality set) assignment into a Hypothesis.

    Chain and unify activations, payments, and rewards are all canonical
    functions of the assignment, so the two solving routes decode
    identically.
    """
    active_chains = frozenset(
        e.id
        for e in graph.chain_edges
        if all(t in included for t in e.tail_ids) and all(h in included for h in e.head_ids)
    )
    active_unify = frozenset(
        u.id
        for u in graph.unify_edges
        if u.node_a in included
        and u.node_b in included
        and all(p in eq_active for p in u.equalities)
    )
    chain_excused = set()
    for eid in active_chains:
        chain_excused.update(graph.chain_edges[eid].head_ids)
    unify_excused = set()
    for uid in active_unify:
        u = graph.unify_edges[uid]
        loser = u.node_b if pays_before(graph, u.node_a, u.node_b) else u.node_a
        unify_excused.add(loser)

    paid = frozenset(
        n for n in sorted(included) if n not in chain_excused and n not in unify_excused
    )
    cost = 0.0
    for n in sorted(paid):
        cost += graph.node(n).cost

    matched_reward = 0.0
    for d_idx, candidates in reward_candidate_table(graph, kb):
        for node_id, needed in candidates:
            if node_id in included and all(p in eq_active for p in needed):
                matched_reward += kb.reward_decls[d_idx].reward
                break

    reward = matched_reward if reward_enabled else 0.0
    objective = cost - (reward_sign * reward if reward_enabled else 0.0)
    score = -objective

    resolved = _resolve_atoms(graph, included, eq_active)
    bits = eq_bit_vector(sorted(graph.equality_vars), eq_active)
    return Hypothesis(
        node_ids=frozenset(included),
        resolved_atoms=resolved,
        active_chain_edges=active_chains,
        active_unify_edges=active_unify,
        equalities=tuple(sorted(eq_active)),
        paid_node_ids=paid,
        cost=cost,
        reward=reward,
        score=score,
        objective=objective,
        tie_key=tie_key(objective, included, bits),
        optimal=optimal,
        work=work,
    )


def _resolve_atoms(graph, included, eq_active):
    parent: dict[Term, Term] = {}

    def find(t):
        while parent.get(t, t) != t:
            parent[t] = parent.get(parent[t], parent[t])
            t = parent[t]
        return t

    for s, t in eq_active:
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

    out = set()
    for n in sorted(included):
        atom = graph.node(n).atom
        args = tuple(rep.get(t, t) for t in atom.args)
        out.add(str(Atom(atom.predicate, args)))
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# LP text dump

def dump_lp(prob: IlpProblem) -> str:
    """One-line-per-row LP text form of the program, for external checks."""

    def term_str(idx, coeff):
        sign = "+" if coeff >= 0 else "-"
        return f"{sign} {abs(coeff):g} {prob.variables[idx].name}"

    lines = []
    obj = " ".join(term_str(i, c) for i, c in sorted(prob.objective.items()))
    lines.append(f"min: {obj};")
    for con in prob.constraints:
        row = " ".join(term_str(i, c) for i, c in con.coeffs)
        label = f"{con.label}: " if con.label else ""
        lines.append(f"{label}{row} <= {con.rhs:g};")
    for v in prob.variables:
        if v.fixed is not None:
            lines.append(f"fix: {v.name} = {v.fixed};")
    lines.append("binary: " + " ".join(v.name for v in prob.variables) + ";")
    return "\n".join(lines) + "\n"
