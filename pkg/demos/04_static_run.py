"""
Static training on one sample
=============================

A (mu, lambda) run on the fourth chronological sample, tested on the
fifth.  The history gives the best and mean MSE of every generation.
"""

import numpy as np

from ivgp.data import SurfaceConfig, build_partition, generate_synthetic, make_fitness_cases
from ivgp.gp.engine import fitness_mse, run_evolution
from ivgp.gp.operators import GpParams
from ivgp.gp.tree import to_infix
from ivgp.subset_selection import SchedulerConfig, SubsetScheduler

cases, _ = make_fitness_cases(generate_synthetic(SurfaceConfig(), 3000))
part = build_partition(cases)
train, test = part.ts_samples[3], part.ts_samples[4]

params = GpParams(mu=100, lam=200, generations_static=100)
sched = SubsetScheduler(SchedulerConfig("STATIC", 100, [train.name]))
result = run_evolution(params, sched, [train], test, np.random.default_rng(0))

for row in result.history[::20] + result.history[-1:]:
    print(f"gen {row.generation:4d}  best {row.best_mse:.3e}  mean {row.mean_mse:.3e}  depth {row.best_depth}")

best = result.best.tree
print("model:", best)
print("infix:", to_infix(best))
print("train MSE", fitness_mse(best, train), " test MSE", result.best_test_mse)
