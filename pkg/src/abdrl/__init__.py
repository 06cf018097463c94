"""Abductive high-level planning for hierarchical reinforcement learning.

A weighted-abduction reasoner (hypothesis selection as an exact 0-1
program with a reward-augmented objective) plans subgoal sequences for a
tabular low-level learner on a randomized, partially observable crafting
gridworld.
"""

from .graph import ProofGraph, build_graph, graph_stats
from .ilp import Hypothesis, decode, dump_lp, encode, evaluate
from .logic import (
    Atom,
    KnowledgeBase,
    Observation,
    Term,
    WeightedRule,
    parse_knowledge_base,
    parse_observation,
    unify,
)
from .planner import Plan, PlanCache, PlannerConfig, Subgoal, extract_plan, plan
from .solver import SizeGuardExceeded, brute_force_solve, solve
from .world import CraftBook, DomainConfig, SensedView, WorldState, generate_episode, observe, step, to_observation

__all__ = [
    "Atom", "CraftBook", "DomainConfig", "Hypothesis", "KnowledgeBase", "Observation",
    "Plan", "PlanCache", "PlannerConfig", "ProofGraph", "SensedView", "SizeGuardExceeded",
    "Subgoal", "Term", "WeightedRule", "WorldState", "brute_force_solve", "build_graph",
    "decode", "dump_lp", "encode", "evaluate", "extract_plan", "generate_episode",
    "graph_stats", "observe", "parse_knowledge_base", "parse_observation", "plan",
    "solve", "step", "to_observation", "unify",
]
