"""Randomized, partially observable crafting gridworld.

Worlds are 12-15 cells wide and tall, ringed by lava with ~10% interior
lava, and seeded by episode index so every experiment faces the same task
sequence.  The player senses a Chebyshev neighborhood, picks up materials,
crafts at utilities, and is rewarded on goal arrival according to the best
crafted item carried.
"""

from __future__ import annotations

import random
import re
from collections import Counter, deque
from dataclasses import dataclass, field, replace

import numpy as np

from .logic import GOAL, INIT, Atom, Observation, ObsAtom, const, var

LAND, LAVA = 0, 1

MOVES = {
    "move-north": (0, -1),
    "move-south": (0, 1),
    "move-east": (1, 0),
    "move-west": (-1, 0),
}
PICKUP = "pickup"


def craft_action(item: str) -> str:
    return f"craft:{item}"


def is_craft(action: str) -> bool:
    return action.startswith("craft:")


def item_term(name: str):
    """Map an item/utility symbol to its logical constant (Rabbit-stew style)."""
    return const(name[:1].upper() + name[1:])


@dataclass(frozen=True)
class Recipe:
    item: str
    ingredients: tuple[str, ...]
    utility: str | None = None
    needs_fuel: bool = False


@dataclass(frozen=True)
class CraftBook:
    recipes: dict[str, Recipe]
    reward_table: dict[str, float]
    base_goal_reward: float
    fuel_items: frozenset[str]

    def best_item(self) -> str:
        return max(self.reward_table, key=lambda i: (self.reward_table[i], i))


@dataclass(frozen=True)
class DomainConfig:
    book: CraftBook
    materials: tuple[str, ...]
    utilities: tuple[str, ...] = ("furnace",)
    sensing_radius: int = 2
    lava_density: float = 0.10
    width_range: tuple[int, int] = (12, 15)
    height_range: tuple[int, int] = (12, 15)
    material_kinds_range: tuple[int, int] = (4, 9)
    utility_count_weights: tuple[float, ...] = (0.15, 0.60, 0.25)  # 0, 1, 2 furnaces
    max_steps: int = 100
    init_atom_cost: float = 0.1
    goal_atom_cost: float = 10.0
    fixed_goal_cost: float = 1000.0


@dataclass(frozen=True)
class WorldState:
    width: int
    height: int
    cells: np.ndarray = field(compare=False)  # LAND/LAVA, row-major [y][x], never mutated
    objects: dict[tuple[int, int], str]  # material or utility per position
    player_pos: tuple[int, int]
    inventory: tuple[str, ...]  # sorted multiset
    crafted: frozenset[str]
    goal_pos: tuple[int, int]
    steps_taken: int
    episode_seed: int
    done: bool = False


@dataclass(frozen=True)
class SensedView:
    known_cells: dict[tuple[int, int], int]  # positions ever sensed
    known_objects: dict[tuple[int, int], str]
    player_pos: tuple[int, int]
    inventory: tuple[str, ...]
    crafted: frozenset[str]
    goal_known: tuple[int, int] | None
    steps_taken: int


class GenerationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# episode generation

def generate_episode(episode_index: int, domain: DomainConfig, max_attempts: int = 40) -> WorldState:
    """Deterministic world from the episode index; regenerates (with seed
    mixing) until a land path start->goal exists."""
    for attempt in range(max_attempts):
        rng = random.Random(f"world:{episode_index}:{attempt}")
        state = _generate_once(episode_index, rng, domain)
        if state is not None:
            return state
    raise GenerationError(f"no reachable world after {max_attempts} attempts (episode {episode_index})")


def _generate_once(episode_index, rng, domain):
    width = rng.randint(*domain.width_range)
    height = rng.randint(*domain.height_range)
    cells = np.zeros((height, width), dtype=np.int8)
    cells[0, :] = LAVA
    cells[-1, :] = LAVA
    cells[:, 0] = LAVA
    cells[:, -1] = LAVA
    for y in range(1, height - 1):
        for x in range(1, width - 1):
            if rng.random() < domain.lava_density:
                cells[y, x] = LAVA

    free = [(x, y) for y in range(1, height - 1) for x in range(1, width - 1) if cells[y, x] == LAND]
    kinds = rng.sample(domain.materials, rng.randint(*domain.material_kinds_range))

    objects: dict[tuple[int, int], str] = {}

    def place(kind) -> bool:
        open_cells = [p for p in free if p not in objects]
        if not open_cells:
            return False
        objects[rng.choice(open_cells)] = kind
        return True

    for kind in kinds:
        for _ in range(rng.randint(1, 2)):
            if not place(kind):
                return None
    counts = list(range(len(domain.utility_count_weights)))
    for utility in domain.utilities:
        n = rng.choices(counts, weights=domain.utility_count_weights)[0]
        for _ in range(n):
            if not place(utility):
                return None

    open_cells = [p for p in free if p not in objects]
    if len(open_cells) < 2:
        return None
    player_pos = rng.choice(open_cells)
    open_cells = [p for p in open_cells if p != player_pos]
    goal_pos = rng.choice(open_cells)

    if not _reachable(cells, player_pos, goal_pos):
        return None
    return WorldState(
        width=width,
        height=height,
        cells=cells,
        objects=objects,
        player_pos=player_pos,
        inventory=(),
        crafted=frozenset(),
        goal_pos=goal_pos,
        steps_taken=0,
        episode_seed=episode_index,
    )


def _reachable(cells, start, goal) -> bool:
    height, width = cells.shape
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        if (x, y) == goal:
            return True
        for dx, dy in MOVES.values():
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height and cells[ny, nx] == LAND and (nx, ny) not in seen:
                seen.add((nx, ny))
                queue.append((nx, ny))
    return False


# ---------------------------------------------------------------------------
# transitions

def step(state: WorldState, action: str, domain: DomainConfig):
    """Pure transition: returns (next_state, extrinsic_reward, done, event)."""
    if state.done:
        raise ValueError("episode is done")
    book = domain.book
    steps = state.steps_taken + 1
    event = "moved"
    reward = 0.0
    done = False

    player = state.player_pos
    objects = state.objects
    inventory = state.inventory
    crafted = state.crafted

    if action in MOVES:
        dx, dy = MOVES[action]
        nx, ny = player[0] + dx, player[1] + dy
        if state.cells[ny, nx] == LAVA:
            return (
                replace(state, steps_taken=steps, player_pos=(nx, ny), done=True),
                0.0,
                True,
                "lava-death",
            )
        player = (nx, ny)
        if player == state.goal_pos:
            held = [i for i in crafted if i in inventory and i in book.reward_table]
            reward = book.base_goal_reward + (max(book.reward_table[i] for i in held) if held else 0.0)
            return (
                replace(state, steps_taken=steps, player_pos=player, done=True),
                reward,
                True,
                "reached-goal",
            )
    elif action == PICKUP:
        kind = objects.get(player)
        if kind is None or kind not in domain.materials:
            event = "illegal-action"
        else:
            objects = dict(objects)
            del objects[player]
            inventory = tuple(sorted(inventory + (kind,)))
            event = "picked-up"
    elif is_craft(action):
        item = action.split(":", 1)[1]
        recipe = book.recipes.get(item)
        if recipe is None or not _craft_allowed(state, recipe, book):
            event = "illegal-action"
        else:
            pool = Counter(inventory)
            for ingredient in recipe.ingredients:
                pool[ingredient] -= 1
            if recipe.needs_fuel:
                fuel = sorted(i for i in book.fuel_items if pool[i] > 0)[0]
                pool[fuel] -= 1
            pool[item] += 1
            inventory = tuple(sorted(pool.elements()))
            crafted = crafted | {item}
            event = "crafted"
    else:
        raise ValueError(f"unknown action {action!r}")

    if steps >= domain.max_steps:
        done = True
        event = "timeout" if event == "moved" else event
    return (
        replace(
            state,
            steps_taken=steps,
            player_pos=player,
            objects=objects,
            inventory=inventory,
            crafted=crafted,
            done=done,
        ),
        reward,
        done,
        event,
    )


def _adjacent_to(state: WorldState, kind: str) -> bool:
    px, py = state.player_pos
    for (x, y), obj in state.objects.items():
        if obj == kind and abs(x - px) <= 1 and abs(y - py) <= 1:
            return True
    return False


def _craft_allowed(state: WorldState, recipe: Recipe, book: CraftBook) -> bool:
    pool = Counter(state.inventory)
    need = Counter(recipe.ingredients)
    if any(pool[k] < n for k, n in need.items()):
        return False
    if recipe.needs_fuel:
        leftover = pool - need
        if not any(leftover[i] > 0 for i in book.fuel_items):
            return False
    if recipe.utility is not None and not _adjacent_to(state, recipe.utility):
        return False
    return True


# ---------------------------------------------------------------------------
# sensing

def observe(state: WorldState, previous: SensedView | None, domain: DomainConfig) -> SensedView:
    """Accumulate knowledge of everything within the sensing radius."""
    known_cells = dict(previous.known_cells) if previous else {}
    known_objects = dict(previous.known_objects) if previous else {}
    goal_known = previous.goal_known if previous else None

    r = domain.sensing_radius
    px, py = state.player_pos
    for y in range(max(0, py - r), min(state.height, py + r + 1)):
        for x in range(max(0, px - r), min(state.width, px + r + 1)):
            known_cells[(x, y)] = int(state.cells[y, x])
            kind = state.objects.get((x, y))
            if kind is None:
                known_objects.pop((x, y), None)
            else:
                known_objects[(x, y)] = kind
            if (x, y) == state.goal_pos:
                goal_known = (x, y)
    return SensedView(
        known_cells=known_cells,
        known_objects=known_objects,
        player_pos=state.player_pos,
        inventory=state.inventory,
        crafted=state.crafted,
        goal_known=goal_known,
        steps_taken=state.steps_taken,
    )


# ---------------------------------------------------------------------------
# first-order conversion and subgoal predicates

def to_observation(view: SensedView, domain: DomainConfig, fixed_goal: str | None = None) -> Observation:
    """Sensed state + goal as a logical observation for the planner."""
    init: set[Atom] = set()
    for item in set(view.inventory):
        init.add(Atom("have", (item_term(item),)))
    for item in view.crafted:
        if item in view.inventory:
            init.add(Atom("made", (item_term(item),)))
    for kind in set(view.known_objects.values()):
        if kind in domain.utilities:
            init.add(Atom("utility-available", (item_term(kind),)))
        else:
            init.add(Atom("sensed", (item_term(kind),)))
    if view.goal_known is not None:
        init.add(Atom("sensed", (const("Goal"),)))

    atoms = [
        ObsAtom(a, domain.init_atom_cost, INIT)
        for a in sorted(init, key=lambda a: (a.predicate, tuple(t.name for t in a.args)))
    ]
    if fixed_goal is None:
        atoms.append(ObsAtom(Atom("goal-achieved", (var("e"),)), domain.goal_atom_cost, GOAL))
    else:
        atoms.append(ObsAtom(Atom("crafted", (item_term(fixed_goal),)), domain.fixed_goal_cost, GOAL))
        atoms.append(ObsAtom(Atom("at-goal", (var("e"),)), domain.goal_atom_cost, GOAL))
    return Observation(tuple(atoms))


def subgoal_completed(predicate: str, target_item: str, view: SensedView, domain: DomainConfig) -> bool:
    """Completion predicates for the high-level action vocabulary."""
    if predicate == "find":
        if target_item == "goal":
            return view.goal_known is not None
        return target_item in view.known_objects.values()
    if predicate == "get":
        return target_item in view.inventory
    if predicate == "go":
        if target_item == "goal":
            return view.goal_known is not None and view.player_pos == view.goal_known
        px, py = view.player_pos
        return any(
            kind == target_item and abs(x - px) <= 1 and abs(y - py) <= 1
            for (x, y), kind in view.known_objects.items()
        )
    return False


def target_position(predicate: str, target_item: str, view: SensedView):
    """Nearest known position relevant to a subgoal, or None."""
    if target_item == "goal":
        return view.goal_known
    candidates = [p for p, kind in view.known_objects.items() if kind == target_item]
    if not candidates:
        return None
    px, py = view.player_pos
    return min(candidates, key=lambda p: (abs(p[0] - px) + abs(p[1] - py), p))


def craftable_now(view: SensedView, domain: DomainConfig):
    """Items craftable from the current inventory at the current position."""
    book = domain.book
    out = []
    for item in sorted(book.recipes):
        recipe = book.recipes[item]
        if item in view.crafted:
            continue
        pool = Counter(view.inventory)
        need = Counter(recipe.ingredients)
        if any(pool[k] < n for k, n in need.items()):
            continue
        if recipe.needs_fuel:
            leftover = pool - need
            if not any(leftover[i] > 0 for i in book.fuel_items):
                continue
        if recipe.utility is not None:
            px, py = view.player_pos
            near = any(
                kind == recipe.utility and abs(x - px) <= 1 and abs(y - py) <= 1
                for (x, y), kind in view.known_objects.items()
            )
            if not near:
                continue
        out.append(item)
    return out


# ---------------------------------------------------------------------------
# domain config file

def parse_domain_config(text: str) -> DomainConfig:
    """Domain file: option/material/utility/fuel/recipe/reward statements."""
    options: dict[str, float] = {}
    materials: list[str] = []
    utilities: list[str] = []
    fuels: list[str] = []
    recipes: dict[str, Recipe] = {}
    reward_overrides: dict[str, float] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "option":
            key, _, value = rest.partition("=")
            options[key.strip()] = float(value.strip())
        elif head == "material":
            materials.append(rest)
        elif head == "utility":
            utilities.append(rest)
        elif head == "fuel":
            fuels.append(rest)
        elif head == "reward":
            key, _, value = rest.partition("=")
            reward_overrides[key.strip()] = float(value.strip())
        elif head == "recipe":
            m = re.fullmatch(r"(?P<item>[a-z0-9-]+)\s*\{(?P<body>[^}]*)\}(?P<mods>.*)", rest)
            if not m:
                raise ValueError(f"malformed recipe at line {line_no}")
            ingredients = tuple(p.strip() for p in m.group("body").split("^") if p.strip())
            mods = m.group("mods")
            utility = None
            um = re.search(r"utility\s*=\s*([a-z0-9-]+)", mods)
            if um:
                utility = um.group(1)
            needs_fuel = "fuel" in mods.split()
            recipes[m.group("item")] = Recipe(m.group("item"), ingredients, utility, needs_fuel)
        else:
            raise ValueError(f"unknown domain statement {head!r} at line {line_no}")

    per_material = options.get("reward-per-material", 4.0)
    reward_table = {}
    for item, recipe in recipes.items():
        raw_count = len(recipe.ingredients) + (1 if recipe.needs_fuel else 0)
        reward_table[item] = reward_overrides.get(item, per_material * raw_count)
    book = CraftBook(
        recipes=recipes,
        reward_table=reward_table,
        base_goal_reward=options.get("base-goal-reward", 1.0),
        fuel_items=frozenset(fuels),
    )

    def int_pair(lo_key, hi_key, default):
        return (int(options.get(lo_key, default[0])), int(options.get(hi_key, default[1])))

    return DomainConfig(
        book=book,
        materials=tuple(materials),
        utilities=tuple(utilities) if utilities else ("furnace",),
        sensing_radius=int(options.get("sensing-radius", 2)),
        lava_density=options.get("lava-density", 0.10),
        width_range=int_pair("width-min", "width-max", (12, 15)),
        height_range=int_pair("height-min", "height-max", (12, 15)),
        material_kinds_range=int_pair("materials-min", "materials-max", (4, 9)),
        max_steps=int(options.get("max-steps", 100)),
        init_atom_cost=options.get("init-atom-cost", 0.1),
        goal_atom_cost=options.get("goal-atom-cost", 10.0),
        fixed_goal_cost=options.get("fixed-goal-cost", 1000.0),
    )
