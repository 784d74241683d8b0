"""Generational (mu, lambda) GP loop with pluggable training-subset scheduling."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..data import CaseSet, FitnessCase
from ..subset_selection import SubsetScheduler
from .operators import WORST_FITNESS, GpParams, Individual, breed, init_population, replace_comma
from .tree import ARITY, PRIMITIVES, ExprTree, evaluate

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("generation", "active_subset_id", "best_mse", "mean_mse", "best_depth")


def _as_caseset(dataset) -> CaseSet:
    if isinstance(dataset, CaseSet):
        return dataset
    cases = list(dataset)
    if cases and not isinstance(cases[0], FitnessCase):
        raise TypeError("dataset must be a CaseSet or a sequence of FitnessCase")
    return CaseSet.from_cases("cases", cases)


def squared_errors(predict, dataset: CaseSet) -> np.ndarray:
    """Per-case squared error of ``predict`` (a tree or a callable on a CaseSet)."""
    pred = evaluate(predict, dataset.ck, dataset.sk, dataset.tau) if isinstance(predict, ExprTree) \
        else np.asarray(predict(dataset), dtype=float)
    err = dataset.sigma - pred
    return err * err


def fitness_mse(tree, dataset) -> float:
    """Mean squared error between target and predicted volatility."""
    dataset = _as_caseset(dataset)
    if len(dataset) == 0:
        raise ValueError("MSE of an empty dataset is undefined")
    with np.errstate(over="ignore"):
        mse = float(np.mean(squared_errors(tree, dataset)))
    return mse if np.isfinite(mse) else WORST_FITNESS


class FitnessCache:
    """MSE on one subset, memoised per tree and per subtree.

    Subtree outputs are stored keyed by their node tuple.  Offspring share
    nearly all of their subtrees with the parent population, so only the
    path from the root to the varied node is recomputed.  Results are
    bit-identical to :func:`evaluate`.  Call :meth:`retain` after replacement
    to drop subtrees no longer present in the population.
    """

    def __init__(self, dataset: CaseSet):
        self.dataset = dataset
        self._fitness: dict[tuple[str, ...], float] = {}
        self._memo: dict[tuple[str, ...], np.ndarray] = {}
        self._leaves = {"ck": dataset.ck, "sk": dataset.sk, "tau": dataset.tau}

    def predict(self, tree: ExprTree) -> np.ndarray:
        nodes, ends, memo, leaves = tree.nodes, tree.ends, self._memo, self._leaves

        def value(i):
            key = nodes[i:ends[i]]
            v = memo.get(key)
            if v is None:
                sym = nodes[i]
                arity = ARITY[sym]
                if arity == 0:
                    v = leaves[sym]
                elif arity == 1:
                    v = PRIMITIVES[sym](value(i + 1))
                else:
                    v = PRIMITIVES[sym](value(i + 1), value(ends[i + 1]))
                memo[key] = v
            return v

        with np.errstate(all="ignore"):
            return np.broadcast_to(value(0), self.dataset.sigma.shape)

    def __call__(self, tree: ExprTree) -> float:
        f = self._fitness.get(tree.nodes)
        if f is None:
            if len(self.dataset) == 0:
                raise ValueError("MSE of an empty dataset is undefined")
            err = self.dataset.sigma - self.predict(tree)
            with np.errstate(over="ignore"):
                f = float(np.mean(err * err))
            if not np.isfinite(f):
                f = WORST_FITNESS
            self._fitness[tree.nodes] = f
        return f

    def assign(self, individuals: Sequence[Individual]) -> None:
        for ind in individuals:
            ind.fitness = self(ind.tree)

    def retain(self, individuals: Sequence[Individual]) -> None:
        memo, kept, fits = self._memo, {}, {}
        for ind in individuals:
            nodes, ends = ind.tree.nodes, ind.tree.ends
            if nodes in kept:
                continue
            fits[nodes] = self._fitness[nodes]
            for i in range(len(nodes)):
                key = nodes[i:ends[i]]
                if key not in kept:
                    v = memo.get(key)
                    if v is not None:
                        kept[key] = v
        self._memo = kept
        self._fitness = fits


@dataclass
class HistoryRow:
    generation: int
    active_subset_id: str
    best_mse: float
    mean_mse: float
    best_depth: int


@dataclass
class Champion:
    """Best individual of one epoch, measured on that epoch's subset."""

    epoch: int
    subset_id: str
    individual: Individual
    test_mse: float | None = None


@dataclass
class EvolutionResult:
    best: Individual
    best_test_mse: float | None
    history: list[HistoryRow]
    champions: list[Champion]
    best_so_far: list[float] = field(default_factory=list)
    scheduler: SubsetScheduler | None = None


def run_evolution(params: GpParams, scheduler: SubsetScheduler, subsets: Sequence[CaseSet],
                  test_set: CaseSet | None = None, rng: np.random.Generator | None = None,
                  generations: int | None = None,
                  on_generation: Callable[[int, list[Individual]], None] | None = None
                  ) -> EvolutionResult:
    """Evolve a population while the scheduler rotates the training subset.

    Every ``scheduler.cfg.g`` generations the scheduler's weight for the
    subset just trained is refreshed and the next subset chosen; the current
    population carries over and is re-scored on it.  The returned model is
    the epoch champion with the lowest MSE on ``test_set`` (or the last
    epoch's champion when no test set is given).
    """
    cfg = scheduler.cfg
    if len(subsets) != cfg.k:
        raise ValueError(f"scheduler expects {cfg.k} subsets, got {len(subsets)}")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    static = cfg.method == "STATIC"
    if generations is None:
        generations = params.generations_static if static else params.generations_dynamic
    g = generations if static else cfg.g

    population = init_population(params, rng)
    active = scheduler.next_subset()
    score = FitnessCache(subsets[active])
    score.assign(population)
    score.retain(population)

    history: list[HistoryRow] = []
    champions: list[Champion] = []
    best_so_far: list[float] = []
    epoch_best: Individual | None = None

    def close_epoch():
        champions.append(Champion(scheduler.state.epoch_index, cfg.subset_ids[active], epoch_best))
        if cfg.weight_mode == "best_on_all":
            scheduler.set_weights([fitness_mse(epoch_best.tree, s) for s in subsets])
        else:
            scheduler.end_epoch()

    for t in range(generations):
        if t > 0 and t % g == 0:
            close_epoch()
            active = scheduler.next_subset()
            score = FitnessCache(subsets[active])
            score.assign(population)
            score.retain(population)
            epoch_best = None

        offspring = breed(population, params, rng, generation=t + 1)
        score.assign(offspring)
        population = replace_comma(offspring, params.mu)
        score.retain(population)

        fits = [ind.fitness for ind in population]
        scheduler.record_generation(fits)
        leader = population[0]
        if epoch_best is None or leader.fitness < epoch_best.fitness:
            epoch_best = leader
        best_so_far.append(epoch_best.fitness)
        history.append(HistoryRow(t + 1, cfg.subset_ids[active], leader.fitness,
                                  float(np.mean(fits)), leader.depth))
        if on_generation is not None:
            on_generation(t + 1, population)
    if generations % g == 0:
        close_epoch()
    else:
        champions.append(Champion(scheduler.state.epoch_index, cfg.subset_ids[active], epoch_best))

    if test_set is not None:
        for champ in champions:
            champ.test_mse = fitness_mse(champ.individual.tree, test_set)
        winner = min(champions, key=lambda c: c.test_mse)
    else:
        winner = champions[-1]
    log.info("%s run finished: best %s (test MSE %s)", cfg.method, winner.individual.tree,
             winner.test_mse)
    return EvolutionResult(winner.individual, winner.test_mse, history, champions,
                           best_so_far, scheduler)


def write_history(path: str | Path, history: Sequence[HistoryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([row.generation, row.active_subset_id, repr(row.best_mse),
                        repr(row.mean_mse), row.best_depth])
