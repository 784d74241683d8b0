"""Training-subset schedulers: static, random, sequential and the two
adaptive variants driven by the adaptive subset weight.

A scheduler is advanced only at epoch boundaries (every ``g``
generations).  Subsets are addressed by their 0-based position in
``SchedulerConfig.subset_ids``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

METHODS = ("STATIC", "RSS", "SSS", "ASSS", "ARSS")
WEIGHT_MODES = ("eq4", "best_on_all")


@dataclass
class SchedulerConfig:
    method: str
    g: int
    subset_ids: list[str]
    seed: int = 0
    init_weight: float = 1.0
    weight_mode: str = "eq4"

    def __post_init__(self):
        self.method = self.method.upper()
        if self.method not in METHODS:
            raise ValueError(f"unknown subset selection method {self.method!r}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if not self.subset_ids:
            raise ValueError("at least one training subset is required")
        if self.g < 1:
            raise ValueError("epoch length g must be >= 1")
        if self.method == "STATIC" and len(self.subset_ids) != 1:
            raise ValueError(f"STATIC selection takes exactly one subset, got {len(self.subset_ids)}")

    @property
    def k(self) -> int:
        return len(self.subset_ids)

    @property
    def adaptive(self) -> bool:
        return self.method in ("ASSS", "ARSS")


@dataclass
class SubsetState:
    weights: np.ndarray
    last_selected: np.ndarray  # epoch index of last selection, -1 if never
    epoch_index: int = 0
    active: int | None = None
    fitness_log: list[list[float]] = field(default_factory=list)


def adaptive_subset_weight(fitness_log: Sequence[Sequence[float]], g: int | None = None) -> float:
    """Mean population MSE over an epoch of ``g`` generations of ``M`` individuals.

    The mean is computed exactly over the rationals and rounded once, so the
    result is the correctly rounded mean and does not depend on order.
    """
    if not fitness_log or (g is not None and len(fitness_log) != g):
        raise ValueError(f"incomplete fitness log: {len(fitness_log)} generations, expected {g}")
    m = len(fitness_log[0])
    if m == 0 or any(len(row) != m for row in fitness_log):
        raise ValueError("fitness log rows must all hold the same non-zero population size")
    total = sum(map(Fraction, (v for row in fitness_log for v in row)), Fraction(0))
    return float(total / (m * len(fitness_log)))


def initial_state(cfg: SchedulerConfig, rng: np.random.Generator) -> SubsetState:
    if cfg.method == "ARSS":
        weights = rng.uniform(0.0, 1.0, cfg.k)
    else:
        weights = np.full(cfg.k, float(cfg.init_weight))
    return SubsetState(weights=weights, last_selected=np.full(cfg.k, -1, dtype=np.int64))


def reorder(state: SubsetState) -> list[int]:
    """Subsets by weight, hardest first.

    Equal weights fall back to least recently selected, then lowest index,
    so the head of this list is the adaptive choice.
    """
    k = len(state.weights)
    return sorted(range(k), key=lambda i: (-state.weights[i], state.last_selected[i], i))


def next_subset(state: SubsetState, cfg: SchedulerConfig, rng: np.random.Generator) -> int:
    """Choose the subset for the epoch starting now and advance the state."""
    e, k = state.epoch_index, cfg.k
    method = cfg.method
    if method == "STATIC":
        choice = 0
    elif method == "SSS" or (method == "ASSS" and e < k):
        choice = e % k
    elif method == "RSS" or (method == "ARSS" and e < k):
        choice = int(rng.integers(k))
    else:
        choice = reorder(state)[0]
    state.active = choice
    state.last_selected[choice] = e
    state.epoch_index = e + 1
    state.fitness_log = []
    return choice


def update_weight(state: SubsetState, active: int, fitness_log: Sequence[Sequence[float]],
                  g: int | None = None) -> float:
    """Set the weight of the subset just trained; others keep their stale weight."""
    w = adaptive_subset_weight(fitness_log, g)
    state.weights[active] = w
    return w


class SubsetScheduler:
    """Stateful wrapper used by the evolution loop.

    Draws randomness only from its own generator seeded by ``cfg.seed``.
    """

    def __init__(self, cfg: SchedulerConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.state = initial_state(cfg, self.rng)
        self.trace: list[tuple[int, int, tuple[float, ...]]] = []

    @property
    def active(self) -> int | None:
        return self.state.active

    def next_subset(self) -> int:
        weights = tuple(float(w) for w in self.state.weights)
        choice = next_subset(self.state, self.cfg, self.rng)
        self.trace.append((self.state.epoch_index, choice, weights))
        return choice

    def record_generation(self, fitnesses: Sequence[float]) -> None:
        self.state.fitness_log.append([float(f) for f in fitnesses])

    def end_epoch(self) -> float:
        """Fold the epoch's fitness log into the active subset's weight."""
        return update_weight(self.state, self.state.active, self.state.fitness_log)

    def set_weights(self, weights: Sequence[float]) -> None:
        """Overwrite every weight (``best_on_all`` mode)."""
        w = np.asarray(weights, dtype=float)
        if w.shape != self.state.weights.shape or np.any(w < 0):
            raise ValueError("need one non-negative weight per subset")
        self.state.weights = w.copy()

    def reorder(self) -> list[int]:
        return reorder(self.state)


def write_trace(path: str | Path, scheduler: SubsetScheduler) -> None:
    ids = scheduler.cfg.subset_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "chosen_subset"] + [f"w_{s}" for s in ids])
        for epoch, choice, weights in scheduler.trace:
            w.writerow([epoch, ids[choice]] + [repr(x) for x in weights])
