"""First-order terms, atoms, weighted rules, and the text formats for
knowledge bases and observations.

Terms follow the capitalization convention: names starting with an
uppercase letter or a digit are logical constants, names starting with a
lowercase letter are variables.  Weighted rules are definite clauses with
one weight per antecedent; negation appears only inside inconsistency
declarations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

SYMBOL_RE = re.compile(r"[A-Za-z0-9_-]+")

DEFAULT_OBSERVATION_COST = 10.0
DEFAULT_RULE_TOTAL_WEIGHT = 1.2  # split evenly over unweighted antecedents

INIT = "init"
GOAL = "goal"


class KbError(ValueError):
    """Base class for knowledge-base and observation format errors."""


class KbSyntaxError(KbError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(f"{message}{where}")


class KbValidationError(KbError):
    pass


@dataclass(frozen=True, order=True)
class Term:
    """A constant or variable; the kind is fixed by the leading character."""

    kind: str  # "const" | "var"
    name: str

    def __post_init__(self):
        if not self.name or not SYMBOL_RE.fullmatch(self.name):
            raise KbValidationError(f"bad term name {self.name!r}")
        if self.kind not in ("const", "var"):
            raise KbValidationError(f"bad term kind {self.kind!r}")

    @property
    def is_const(self) -> bool:
        return self.kind == "const"

    def __str__(self):
        return self.name


def term(name: str) -> Term:
    """Classify a symbol into a constant or variable by its leading character."""
    kind = "const" if (name[:1].isupper() or name[:1].isdigit()) else "var"
    return Term(kind, name)


def const(name: str) -> Term:
    return Term("const", name)


def var(name: str) -> Term:
    return Term("var", name)


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...] = ()
    negated: bool = False  # only legal inside inconsistency declarations

    @property
    def arity(self) -> int:
        return len(self.args)

    def __str__(self):
        body = self.predicate
        if self.args:
            body += "(" + ",".join(t.name for t in self.args) + ")"
        return ("!" if self.negated else "") + body


@dataclass(frozen=True)
class WeightedRule:
    """antecedents => consequents, one positive weight per antecedent."""

    id: str
    antecedents: tuple[tuple[Atom, float], ...]
    consequents: tuple[Atom, ...]

    def antecedent_atoms(self):
        return tuple(a for a, _ in self.antecedents)


@dataclass(frozen=True)
class RewardDecl:
    """Attaches a reward to a ground atom pattern."""

    pattern: Atom
    reward: float


@dataclass(frozen=True)
class InconsistencyDecl:
    """Mutual exclusion of two atom patterns; shared variables must corefer."""

    first: Atom
    second: Atom


@dataclass(frozen=True)
class KnowledgeBase:
    rules: tuple[WeightedRule, ...]
    action_predicates: frozenset[tuple[str, int]]  # (predicate, distinguished arg index)
    reward_decls: tuple[RewardDecl, ...]
    inconsistency_decls: tuple[InconsistencyDecl, ...]
    default_observation_cost: float = DEFAULT_OBSERVATION_COST
    arity: dict[str, int] = field(default_factory=dict, compare=False)

    def action_arg_index(self, predicate: str):
        for pred, idx in self.action_predicates:
            if pred == predicate:
                return idx
        return None

    def rules_by_consequent(self) -> dict[str, list[WeightedRule]]:
        index: dict[str, list[WeightedRule]] = {}
        for rule in self.rules:
            for c in rule.consequents:
                index.setdefault(c.predicate, []).append(rule)
        return index


@dataclass(frozen=True)
class ObsAtom:
    atom: Atom
    cost: float
    label: str  # INIT | GOAL


@dataclass(frozen=True)
class Observation:
    atoms: tuple[ObsAtom, ...]

    def init_atoms(self):
        return tuple(a for a in self.atoms if a.label == INIT)

    def goal_atoms(self):
        return tuple(a for a in self.atoms if a.label == GOAL)


# ---------------------------------------------------------------------------
# unification

def unify(a: Atom, b: Atom):
    """Pairwise term equalities needed to identify two atoms, or None.

    No substitution is applied; the equalities are decision candidates for
    the hypothesis selector.  Identical argument positions contribute no
    pair.
    """
    if a.predicate != b.predicate or a.arity != b.arity or a.negated != b.negated:
        return None
    pairs = []
    for s, t in zip(a.args, b.args):
        if s != t:
            pairs.append(canonical_pair(s, t))
    return tuple(sorted(set(pairs)))


def canonical_pair(s: Term, t: Term) -> tuple[Term, Term]:
    """Order a term pair canonically: constants before variables, then by name."""
    return (s, t) if (s.kind, s.name) <= (t.kind, t.name) else (t, s)


def format_pair(pair: tuple[Term, Term]) -> str:
    return f"{pair[0].name}={pair[1].name}"


# ---------------------------------------------------------------------------
# parsing

_ATOM_RE = re.compile(
    r"(?P<neg>!)?(?P<pred>[A-Za-z0-9_-]+)\s*(?:\((?P<args>[^()]*)\))?"
)
_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


def _strip_comment(line: str) -> str:
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def _parse_atom(text: str, line_no: int, allow_negation: bool = False) -> Atom:
    text = text.strip()
    m = _ATOM_RE.fullmatch(text)
    if not m:
        raise KbSyntaxError(f"malformed atom {text!r}", line_no)
    if m.group("neg") and not allow_negation:
        raise KbSyntaxError("negation is only allowed in inconsistency declarations", line_no)
    args = ()
    if m.group("args") is not None:
        raw = m.group("args").strip()
        if raw:
            parts = [p.strip() for p in raw.split(",")]
            if any(not SYMBOL_RE.fullmatch(p) for p in parts):
                raise KbSyntaxError(f"malformed argument list in {text!r}", line_no)
            args = tuple(term(p) for p in parts)
    return Atom(m.group("pred"), args, negated=bool(m.group("neg")))


def _parse_weighted_atom(text: str, line_no: int):
    """`atom` or `atom:<weight>` inside a rule body."""
    text = text.strip()
    weight = None
    if ":" in text:
        body, _, wtext = text.rpartition(":")
        wtext = wtext.strip()
        if not _NUMBER_RE.fullmatch(wtext):
            raise KbSyntaxError(f"malformed weight {wtext!r}", line_no)
        weight = float(wtext)
        text = body
    return _parse_atom(text, line_no), weight


def _split_conjunction(text: str, line_no: int, what: str):
    parts = [p.strip() for p in text.split("^")]
    if len(parts) == 1 and not parts[0]:
        raise KbSyntaxError(f"empty {what}", line_no)
    if any(not p for p in parts):
        raise KbSyntaxError(f"empty conjunct in {what}", line_no)
    return parts


def _parse_rule(line: str, line_no: int) -> WeightedRule:
    m = re.fullmatch(r"rule\s+(?P<id>[A-Za-z0-9_-]+)\s*\{(?P<body>.*)\}\s*", line)
    if not m:
        raise KbSyntaxError("malformed rule statement", line_no)
    body = m.group("body").strip()
    if "=>" not in body:
        raise KbSyntaxError("rule body must contain '=>'", line_no)
    left, _, right = body.partition("=>")
    ante_parts = _split_conjunction(left, line_no, "rule body")
    cons_parts = _split_conjunction(right, line_no, "rule head")

    parsed = [_parse_weighted_atom(p, line_no) for p in ante_parts]
    default = DEFAULT_RULE_TOTAL_WEIGHT / len(parsed)
    antecedents = []
    for atom, weight in parsed:
        w = default if weight is None else weight
        if w <= 0.0:
            raise KbSyntaxError(f"non-positive weight {w} on {atom}", line_no)
        antecedents.append((atom, w))
    consequents = tuple(_parse_atom(p, line_no) for p in cons_parts)
    return WeightedRule(m.group("id"), tuple(antecedents), consequents)


def parse_knowledge_base(text: str) -> KnowledgeBase:
    """Parse and validate the knowledge-base text format.

    Statements, one per line: ``rule``, ``action``, ``reward``,
    ``inconsistent``, ``option``; ``#`` starts a comment.
    """
    rules: list[WeightedRule] = []
    actions: set[tuple[str, int]] = set()
    rewards: list[RewardDecl] = []
    inconsistencies: list[InconsistencyDecl] = []
    obs_cost = DEFAULT_OBSERVATION_COST
    rule_ids: set[str] = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        head = line.split(None, 1)[0]
        if head == "rule":
            rule = _parse_rule(line, line_no)
            if rule.id in rule_ids:
                raise KbValidationError(f"duplicate rule id {rule.id!r} (line {line_no})")
            rule_ids.add(rule.id)
            rules.append(rule)
        elif head == "action":
            m = re.fullmatch(r"action\s+([A-Za-z0-9_-]+)/(\d+)\s+arg\s*=\s*(\d+)", line)
            if not m:
                raise KbSyntaxError("malformed action declaration", line_no)
            pred, arity, idx = m.group(1), int(m.group(2)), int(m.group(3))
            if idx >= arity:
                raise KbValidationError(
                    f"action {pred}/{arity}: arg index {idx} out of range (line {line_no})"
                )
            actions.add((pred, idx))
        elif head == "reward":
            m = re.fullmatch(r"reward\s+(.+?)\s*=\s*(" + _NUMBER_RE.pattern + r")", line)
            if not m:
                raise KbSyntaxError("malformed reward declaration", line_no)
            pattern = _parse_atom(m.group(1), line_no)
            if any(not t.is_const for t in pattern.args):
                raise KbValidationError(
                    f"reward pattern {pattern} must be ground (line {line_no})"
                )
            rewards.append(RewardDecl(pattern, float(m.group(2))))
        elif head == "inconsistent":
            body = line[len("inconsistent"):].strip()
            # atom arguments contain commas, so split at paren depth zero only
            atoms = _split_top_level_pair(body, line_no)
            inconsistencies.append(
                InconsistencyDecl(
                    _parse_atom(atoms[0], line_no, allow_negation=True),
                    _parse_atom(atoms[1], line_no, allow_negation=True),
                )
            )
        elif head == "option":
            m = re.fullmatch(r"option\s+observation-cost\s*=\s*(" + _NUMBER_RE.pattern + r")", line)
            if not m:
                raise KbSyntaxError("unknown option", line_no)
            obs_cost = float(m.group(1))
            if obs_cost <= 0.0:
                raise KbValidationError(f"observation-cost must be positive (line {line_no})")
        else:
            raise KbSyntaxError(f"unknown statement {head!r}", line_no)

    kb = KnowledgeBase(
        rules=tuple(rules),
        action_predicates=frozenset(actions),
        reward_decls=tuple(rewards),
        inconsistency_decls=tuple(inconsistencies),
        default_observation_cost=obs_cost,
    )
    _validate_kb(kb)
    return kb


def _split_top_level_pair(body: str, line_no: int):
    depth = 0
    for i, ch in enumerate(body):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            left, right = body[:i].strip(), body[i + 1:].strip()
            if not left or not right:
                raise KbSyntaxError("inconsistency declaration needs two atoms", line_no)
            return left, right
    raise KbSyntaxError("inconsistency declaration needs two atoms", line_no)


def _validate_kb(kb: KnowledgeBase):
    arity: dict[str, int] = {}

    def note(atom: Atom, where: str):
        seen = arity.get(atom.predicate)
        if seen is None:
            arity[atom.predicate] = atom.arity
        elif seen != atom.arity:
            raise KbValidationError(
                f"arity conflict for {atom.predicate!r}: {seen} vs {atom.arity} ({where})"
            )

    for rule in kb.rules:
        if not rule.antecedents or not rule.consequents:
            raise KbValidationError(f"rule {rule.id!r} needs antecedents and consequents")
        for a, w in rule.antecedents:
            if w <= 0.0:
                raise KbValidationError(f"non-positive weight in rule {rule.id!r}")
            note(a, f"rule {rule.id}")
        # consequent-only variables are implicitly existential: they bind to
        # whatever the matched nodes carry during backward chaining
        for c in rule.consequents:
            note(c, f"rule {rule.id}")

    known = dict(arity)
    for pred, idx in kb.action_predicates:
        if pred not in known:
            raise KbValidationError(f"action declaration for unknown predicate {pred!r}")
        if idx >= known[pred]:
            raise KbValidationError(f"action arg index {idx} out of range for {pred!r}")
    for decl in kb.reward_decls:
        if decl.pattern.predicate not in known:
            raise KbValidationError(
                f"reward declaration for unknown predicate {decl.pattern.predicate!r}"
            )
        if known[decl.pattern.predicate] != decl.pattern.arity:
            raise KbValidationError(f"arity conflict in reward pattern {decl.pattern}")
    for decl in kb.inconsistency_decls:
        for atom in (decl.first, decl.second):
            if atom.predicate not in known:
                raise KbValidationError(
                    f"inconsistency declaration for unknown predicate {atom.predicate!r}"
                )
            if known[atom.predicate] != atom.arity:
                raise KbValidationError(f"arity conflict in inconsistency pattern {atom}")
    kb.arity.clear()
    kb.arity.update(arity)


def parse_observation(text: str, default_cost: float = DEFAULT_OBSERVATION_COST) -> Observation:
    """Parse ``init: a ^ b$5 ; goal: c`` into labeled, costed atoms."""
    stripped = "\n".join(_strip_comment(l) for l in text.splitlines())
    atoms: list[ObsAtom] = []
    seen_labels: set[str] = set()
    arity: dict[str, int] = {}
    for section in stripped.split(";"):
        section = section.strip()
        if not section:
            continue
        label, colon, body = section.partition(":")
        label = label.strip()
        if not colon or label not in (INIT, GOAL):
            raise KbSyntaxError(f"observation section must start with 'init:' or 'goal:', got {label!r}")
        if label in seen_labels:
            raise KbSyntaxError(f"duplicate {label!r} section")
        seen_labels.add(label)
        body = body.strip()
        if not body:
            continue
        for part in _split_conjunction(body, 1, f"{label} section"):
            cost = default_cost
            if "$" in part:
                part, _, ctext = part.partition("$")
                ctext = ctext.strip()
                if not _NUMBER_RE.fullmatch(ctext):
                    raise KbSyntaxError(f"malformed cost {ctext!r}")
                cost = float(ctext)
            if cost <= 0.0:
                raise KbValidationError(f"atom cost must be positive, got {cost}")
            atom = _parse_atom(part, 1)
            seen = arity.get(atom.predicate)
            if seen is not None and seen != atom.arity:
                raise KbValidationError(
                    f"arity conflict for {atom.predicate!r} within observation"
                )
            arity[atom.predicate] = atom.arity
            atoms.append(ObsAtom(atom, cost, label))
    obs = Observation(tuple(atoms))
    if not obs.goal_atoms():
        raise KbValidationError("observation has no goal atoms; a plan query needs a goal")
    return obs


def check_observation_against(kb: KnowledgeBase, obs: Observation):
    """Cross-check observation predicates against the KB arity table."""
    for oa in obs.atoms:
        seen = kb.arity.get(oa.atom.predicate)
        if seen is not None and seen != oa.atom.arity:
            raise KbValidationError(
                f"arity conflict for {oa.atom.predicate!r}: KB has {seen}, observation has {oa.atom.arity}"
            )


# ---------------------------------------------------------------------------
# pretty printing (round-trips through the parsers)

def format_rule(rule: WeightedRule) -> str:
    ante = " ^ ".join(f"{a}:{w}" for a, w in rule.antecedents)
    cons = " ^ ".join(str(c) for c in rule.consequents)
    return f"rule {rule.id} {{ {ante} => {cons} }}"


def kb_to_text(kb: KnowledgeBase) -> str:
    lines = [f"option observation-cost = {kb.default_observation_cost}"]
    for pred, idx in sorted(kb.action_predicates):
        lines.append(f"action {pred}/{kb.arity[pred]} arg={idx}")
    for decl in kb.reward_decls:
        lines.append(f"reward {decl.pattern} = {decl.reward}")
    for decl in kb.inconsistency_decls:
        lines.append(f"inconsistent {decl.first} , {decl.second}")
    for rule in kb.rules:
        lines.append(format_rule(rule))
    return "\n".join(lines) + "\n"


def observation_to_text(obs: Observation) -> str:
    def fmt(items):
        return " ^ ".join(f"{oa.atom}${oa.cost}" for oa in items)

    parts = []
    if obs.init_atoms():
        parts.append("init: " + fmt(obs.init_atoms()))
    parts.append("goal: " + fmt(obs.goal_atoms()))
    return " ; ".join(parts) + "\n"
