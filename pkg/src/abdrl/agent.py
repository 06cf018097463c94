"""Hierarchical agent: a tabular low-level learner driven by high-level
plans, with intrinsic rewards on subgoal completion.

The learner is a one-step temporal-difference table over compact sensed
features (subgoal label, direction sector to the subgoal's target, local
lava bitmap, carrying flag), substituting for a neural policy behind the
same select/learn interface.  Crafting itself is reflexive: when the
recipe the plan commits to becomes satisfiable on the spot, the agent
executes the craft action directly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .logic import KnowledgeBase
from .planner import Plan, PlanCache, PlannerConfig, plan as make_plan
from .world import (
    DomainConfig,
    SensedView,
    WorldState,
    craft_action,
    craftable_now,
    observe,
    step,
    subgoal_completed,
    target_position,
    to_observation,
)

NO_PLANNER = "NO-PLANNER"
FIXED_GOAL = "FIXED-GOAL"
ABDUCTIVE = "ABDUCTIVE"
MODES = (NO_PLANNER, FIXED_GOAL, ABDUCTIVE)

ACTIONS = ("move-north", "move-south", "move-east", "move-west", "pickup")

SECTOR_HERE = 4
SECTOR_UNKNOWN = 9


@dataclass
class AgentConfig:
    mode: str = ABDUCTIVE
    intrinsic_reward: float = 1.0
    step_penalty: float = -0.01
    death_penalty: float = -1.0  # learning signal for stepping into lava
    learning_rate: float = 0.1
    discount: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_anneal_frac: float = 0.4
    total_episodes: int = 3000
    replan_policy: str = "both"  # on-new-sense | on-subgoal-complete | both
    stuck_limit: int = 50

    def epsilon_for(self, episode_index: int) -> float:
        horizon = max(1.0, self.total_episodes * self.epsilon_anneal_frac)
        frac = min(1.0, episode_index / horizon)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


@dataclass
class QTable:
    values: dict[tuple, list[float]] = field(default_factory=dict)
    visits: dict[tuple, int] = field(default_factory=dict)

    def row(self, key: tuple) -> list[float]:
        row = self.values.get(key)
        if row is None:
            row = [0.0] * len(ACTIONS)
            self.values[key] = row
        return row


def _item(term) -> str:
    return term.name[:1].lower() + term.name[1:]


def _sign(v: int) -> int:
    return (v > 0) - (v < 0)


def feature_key(view: SensedView, subgoal, domain: DomainConfig) -> tuple:
    """Compact sensed features conditioned on the active subgoal."""
    if subgoal is None:
        label = None
        target = view.goal_known
        carrying = bool(view.inventory)
    else:
        label = subgoal.label
        item = _item(subgoal.target)
        target = target_position(subgoal.action_predicate, item, view)
        carrying = item in view.inventory

    px, py = view.player_pos
    if target is None:
        sector = SECTOR_UNKNOWN
    else:
        sector = (_sign(target[0] - px) + 1) * 3 + (_sign(target[1] - py) + 1)

    bits = 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            bits <<= 1
            if view.known_cells.get((px + dx, py + dy)) == 1:  # lava
                bits |= 1
    return (label, sector, bits, carrying)


def select_action(view, current_subgoal, q: QTable, epsilon: float, rng: random.Random, domain) -> str:
    """Epsilon-greedy over the learner's action set; ties break randomly."""
    key = feature_key(view, current_subgoal, domain)
    if rng.random() < epsilon:
        return ACTIONS[rng.randrange(len(ACTIONS))]
    row = q.values.get(key)
    if row is None:
        return ACTIONS[rng.randrange(len(ACTIONS))]
    best = max(row)
    choices = [i for i, v in enumerate(row) if v == best]
    return ACTIONS[choices[0] if len(choices) == 1 else rng.choice(choices)]


def intrinsic_step_reward(before: SensedView, after: SensedView, subgoal, cfg: AgentConfig, domain) -> float:
    """Intrinsic reward when the subgoal's completion predicate turns true."""
    if subgoal is not None and not subgoal.abstract:
        item = _item(subgoal.target)
        pred = subgoal.action_predicate
        if not subgoal_completed(pred, item, before, domain) and subgoal_completed(
            pred, item, after, domain
        ):
            return cfg.intrinsic_reward
    return cfg.step_penalty


def learn(q: QTable, key, action: str, reward: float, next_key, done: bool, cfg: AgentConfig) -> QTable:
    """One-step TD update; terminal transitions bootstrap from zero."""
    a = ACTIONS.index(action)
    row = q.row(key)
    future = 0.0 if done else max(q.row(next_key))
    row[a] += cfg.learning_rate * (reward + cfg.discount * future - row[a])
    q.visits[key] = q.visits.get(key, 0) + 1
    return q


@dataclass
class EpisodeResult:
    extrinsic_return: float
    steps: int
    subgoals_completed: int
    plans_requested: int
    crafted: frozenset


def _sense_key(view: SensedView):
    return (
        frozenset(view.inventory),
        frozenset(i for i in view.crafted if i in view.inventory),
        frozenset(view.known_objects.values()),
        view.goal_known is not None,
    )


def _craft_targets(p: Plan | None):
    if p is None:
        return []
    return [_item_from_name(args[0]) for pred, args in p.explained if pred == "crafted" and args]


def _item_from_name(name: str) -> str:
    return name[:1].lower() + name[1:]


def run_episode(
    world: WorldState,
    domain: DomainConfig,
    kb: KnowledgeBase | None,
    q: QTable,
    cfg: AgentConfig,
    planner_cfg: PlannerConfig | None,
    cache: PlanCache | None,
    rng: random.Random,
    epsilon: float,
    learning: bool = True,
    trace: list | None = None,
) -> EpisodeResult:
    """One full episode of observe -> (re)plan -> act -> learn."""
    book = domain.book
    fixed_goal = book.best_item() if cfg.mode == FIXED_GOAL else None
    uses_planner = cfg.mode in (FIXED_GOAL, ABDUCTIVE)

    view = observe(world, None, domain)
    plans_requested = 0
    subgoals_done = 0
    extrinsic = 0.0

    current_plan: Plan | None = None
    completed: list[bool] = []
    ptr = 0
    stuck = 0
    sense_key = _sense_key(view)

    def replan():
        nonlocal current_plan, completed, ptr, stuck, plans_requested
        obs = to_observation(view, domain, fixed_goal)
        current_plan = make_plan(kb, obs, planner_cfg, cache)
        completed = [False] * len(current_plan.subgoals)
        ptr = 0
        stuck = 0
        plans_requested += 1

    def advance() -> int:
        """Mark completed subgoals from the pointer on; returns marks made."""
        nonlocal ptr
        marks = 0
        while current_plan is not None and ptr < len(current_plan.subgoals):
            sg = current_plan.subgoals[ptr]
            if completed[ptr]:
                ptr += 1
                continue
            if sg.abstract or subgoal_completed(sg.action_predicate, _item(sg.target), view, domain):
                completed[ptr] = True
                ptr += 1
                marks += 1
                continue
            break
        return marks

    if uses_planner:
        replan()
        subgoals_done += advance()

    while not world.done:
        subgoal = None
        if current_plan is not None and ptr < len(current_plan.subgoals):
            subgoal = current_plan.subgoals[ptr]

        craftables = craftable_now(view, domain)
        targets = _craft_targets(current_plan) if uses_planner else sorted(
            craftables, key=lambda i: book.reward_table[i], reverse=True
        )
        craft_now = next((t for t in targets if t in craftables), None)

        if craft_now is not None:
            action = craft_action(craft_now)
            key = None
        else:
            key = feature_key(view, subgoal, domain)
            action = select_action(view, subgoal, q, epsilon, rng, domain)

        world, reward, done, event = step(world, action, domain)
        extrinsic += reward
        next_view = observe(world, view, domain)

        if trace is not None:
            trace.append((world.episode_seed, world.steps_taken, action, world.player_pos, event, reward))

        if key is not None and learning:
            if event == "lava-death":
                learn_reward = cfg.death_penalty
            elif cfg.mode == NO_PLANNER or subgoal is None:
                learn_reward = reward + cfg.step_penalty
            else:
                learn_reward = intrinsic_step_reward(view, next_view, subgoal, cfg, domain)
            next_key = feature_key(next_view, subgoal, domain)
            learn(q, key, action, learn_reward, next_key, done, cfg)

        view = next_view
        stuck += 1

        if uses_planner and not done:
            marks = advance()
            subgoals_done += marks
            new_sense = _sense_key(view)
            sense_changed = new_sense != sense_key
            sense_key = new_sense
            policy = cfg.replan_policy
            want_replan = (
                (sense_changed and policy in ("on-new-sense", "both"))
                or (marks > 0 and policy in ("on-subgoal-complete", "both"))
                or stuck >= cfg.stuck_limit
            )
            if marks > 0 or sense_changed:
                stuck = 0
            if want_replan:
                replan()
                subgoals_done += advance()

    return EpisodeResult(
        extrinsic_return=extrinsic,
        steps=world.steps_taken,
        subgoals_completed=subgoals_done,
        plans_requested=plans_requested,
        crafted=world.crafted,
    )
