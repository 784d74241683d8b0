"""Initialisation, selection, variation and replacement operators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tree import ARITY, FUNCTIONS, MAX_DEPTH, TERMINALS, ExprTree

UNARY = tuple(f for f in FUNCTIONS if ARITY[f] == 1)
BINARY = tuple(f for f in FUNCTIONS if ARITY[f] == 2)
SAME_ARITY = {0: TERMINALS, 1: UNARY, 2: BINARY}

OPERATORS = ("crossover", "branch", "point", "expansion")
DEPTH_RETRIES = 3
WORST_FITNESS = 1e300


@dataclass
class GpParams:
    mu: int = 100
    lam: int = 200
    generations_static: int = 400
    generations_dynamic: int = 1000
    epoch_length: int = 50
    init_depth_min: int = 2
    init_depth_max: int = 6
    max_depth: int = MAX_DEPTH
    tournament_size: int = 4
    p_crossover: float = 0.60
    p_branch_mut: float = 0.20
    p_point_mut: float = 0.10
    p_expansion_mut: float = 0.10
    seed: int = 0

    def __post_init__(self):
        total = self.p_crossover + self.p_branch_mut + self.p_point_mut + self.p_expansion_mut
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"operator probabilities sum to {total}, expected 1")
        if not 1 <= self.mu <= self.lam:
            raise ValueError(f"need 1 <= mu <= lambda, got mu={self.mu} lambda={self.lam}")
        if not 0 <= self.init_depth_min <= self.init_depth_max <= self.max_depth:
            raise ValueError("inconsistent depth limits")
        if self.epoch_length < 1 or self.tournament_size < 1:
            raise ValueError("epoch_length and tournament_size must be >= 1")

    @property
    def operator_probs(self) -> np.ndarray:
        return np.array([self.p_crossover, self.p_branch_mut, self.p_point_mut, self.p_expansion_mut])


@dataclass
class Individual:
    tree: ExprTree
    fitness: float = WORST_FITNESS
    birth_generation: int = 0
    origin: str = "init"

    @property
    def depth(self) -> int:
        return self.tree.depth


# ----------------------------------------------------------------------------
# tree construction

def _random_nodes(rng: np.random.Generator, depth: int, max_depth: int, full: bool,
                  out: list[str]) -> None:
    if depth >= max_depth:
        out.append(TERMINALS[rng.integers(len(TERMINALS))])
        return
    if full or depth == 0:
        sym = FUNCTIONS[rng.integers(len(FUNCTIONS))]
    else:
        pool = len(FUNCTIONS) + len(TERMINALS)
        k = rng.integers(pool)
        sym = FUNCTIONS[k] if k < len(FUNCTIONS) else TERMINALS[k - len(FUNCTIONS)]
    out.append(sym)
    for _ in range(ARITY[sym]):
        _random_nodes(rng, depth + 1, max_depth, full, out)


def random_tree(rng: np.random.Generator, max_depth: int, method: str = "grow") -> ExprTree:
    """Full or grow tree of depth at most ``max_depth``.

    The root is always a function (when ``max_depth >= 1``); below it, grow
    draws uniformly from terminals and functions and full only from functions
    until the depth limit forces terminals.
    """
    if method not in ("full", "grow"):
        raise ValueError(f"unknown init method {method!r}")
    nodes: list[str] = []
    _random_nodes(rng, 0, max_depth, method == "full", nodes)
    return ExprTree(tuple(nodes))


def init_population(params: GpParams, rng: np.random.Generator) -> list[Individual]:
    """Ramped half-and-half over depths ``init_depth_min..init_depth_max``."""
    levels = list(range(params.init_depth_min, params.init_depth_max + 1))
    per_level = [params.mu // len(levels) + (1 if i < params.mu % len(levels) else 0)
                 for i in range(len(levels))]
    pop = []
    for depth, count in zip(levels, per_level):
        n_full = (count + 1) // 2
        for j in range(count):
            method = "full" if j < n_full else "grow"
            pop.append(Individual(random_tree(rng, depth, method), origin=f"init-{method}"))
    return pop


# ----------------------------------------------------------------------------
# selection

def tournament_select(population: Sequence[Individual], rng: np.random.Generator,
                      k: int = 4) -> Individual:
    """Lowest MSE among ``k`` uniform draws with replacement.

    Ties go to the earlier birth generation, then to the lower index.
    """
    picks = rng.integers(len(population), size=k)
    best = min(picks, key=lambda i: (population[i].fitness, population[i].birth_generation, i))
    return population[best]


def replace_comma(offspring: Sequence[Individual], mu: int) -> list[Individual]:
    """The ``mu`` lowest-MSE offspring; parents take no part."""
    if len(offspring) < mu:
        raise ValueError(f"comma replacement needs lambda >= mu ({len(offspring)} < {mu})")
    fitness = np.array([ind.fitness for ind in offspring])
    order = np.argsort(fitness, kind="stable")[:mu]
    return [offspring[i] for i in order]


# ----------------------------------------------------------------------------
# variation

def crossover_points(tree: ExprTree) -> list[int]:
    """Function nodes other than the root."""
    return [i for i in range(1, len(tree.nodes)) if ARITY[tree.nodes[i]]]


def crossover(p1: ExprTree, p2: ExprTree, rng: np.random.Generator,
              max_depth: int = MAX_DEPTH) -> ExprTree:
    """Subtree crossover; returns ``p1`` unchanged when no legal child is found."""
    pts1, pts2 = crossover_points(p1), crossover_points(p2)
    if not pts1 or not pts2:
        return p1
    depths1 = p1.node_depths()
    for _ in range(1 + DEPTH_RETRIES):
        i = pts1[rng.integers(len(pts1))]
        j = pts2[rng.integers(len(pts2))]
        donor = p2.subtree(j)
        if depths1[i] + donor.depth > max_depth:
            continue
        child = p1.replace(i, donor)
        if child.depth <= max_depth:
            return child
    return p1


def _grow_budget(node_depth: int, max_depth: int, cap: int) -> int:
    return max(0, min(cap, max_depth - node_depth))


def mutate(tree: ExprTree, kind: str, rng: np.random.Generator,
           max_depth: int = MAX_DEPTH, grow_cap: int = 6) -> ExprTree:
    """Branch, point or expansion mutation.

    branch: a uniformly chosen subtree is replaced by a grown one.
    point: a uniformly chosen node takes a different symbol of equal arity.
    expansion: a uniformly chosen terminal is replaced by a grown subtree.
    """
    depths = tree.node_depths()
    if kind == "point":
        i = int(rng.integers(len(tree.nodes)))
        choices = [s for s in SAME_ARITY[ARITY[tree.nodes[i]]] if s != tree.nodes[i]]
        new = choices[rng.integers(len(choices))]
        child = ExprTree(tree.nodes[:i] + (new,) + tree.nodes[i + 1:], depths)
        child._ends = tree._ends
        return child
    if kind == "branch":
        candidates = range(len(tree.nodes))
    elif kind == "expansion":
        candidates = [i for i, s in enumerate(tree.nodes) if ARITY[s] == 0]
    else:
        raise ValueError(f"unknown mutation kind {kind!r}")
    for _ in range(1 + DEPTH_RETRIES):
        i = candidates[rng.integers(len(candidates))]
        budget = _grow_budget(depths[i], max_depth, grow_cap)
        child = tree.replace(i, random_tree(rng, budget, "grow"))
        if child.depth <= max_depth:
            return child
    return tree


def breed(population: Sequence[Individual], params: GpParams, rng: np.random.Generator,
          generation: int = 0) -> list[Individual]:
    """``lam`` offspring, each from exactly one operator drawn by its rate."""
    cum = np.cumsum(params.operator_probs)
    k = params.tournament_size
    offspring = []
    for _ in range(params.lam):
        op = OPERATORS[min(int(np.searchsorted(cum, rng.random(), side="right")), len(OPERATORS) - 1)]
        parent = tournament_select(population, rng, k).tree
        if op == "crossover":
            donor = tournament_select(population, rng, k).tree
            child = crossover(parent, donor, rng, params.max_depth)
        else:
            child = mutate(parent, op, rng, params.max_depth, params.init_depth_max)
        offspring.append(Individual(child, birth_generation=generation, origin=op))
    return offspring
