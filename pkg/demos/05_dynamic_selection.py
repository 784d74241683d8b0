"""
Dynamic training-subset selection
=================================

The same engine, but the training subset changes every g generations.
All 18 training subsets (nine chronological samples and nine class
halves) are in play.  The adaptive selectors keep a weight per subset,
the mean population MSE of its last epoch, and go back to the hardest.
"""

import numpy as np

from ivgp.data import SurfaceConfig, build_partition, generate_synthetic, make_fitness_cases
from ivgp.evaluation import evaluate_model, execute_run, protocol_runs
from ivgp.gp.operators import GpParams

cases, _ = make_fitness_cases(generate_synthetic(SurfaceConfig(), 3000))
part = build_partition(cases)
params = GpParams(mu=60, lam=120, epoch_length=20)
enlarged = {s.name: s for s in part.ts_samples}

for method in ("RSS", "SSS", "ASSS", "ARSS"):
    spec = protocol_runs(part, "dynamic_global", [0], [method])[0]
    out = execute_run(spec, part, params, enlarged, generations=600)
    visits = [choice for _, choice, _ in out.result.scheduler.trace]
    ids = out.result.scheduler.cfg.subset_ids
    print(f"{spec.model_id}: mse_total {out.report.mse_total:.2e}  NFO {out.report.nfo_pct:.2f}%")
    print("   subsets visited:", " ".join(ids[v] for v in visits))

# the adaptive weights after the last epoch, hardest first
sched = out.result.scheduler
order = sched.reorder()
print("ARSS weights:", [(ids[i], f"{sched.state.weights[i]:.1e}") for i in order[:5]], "...")

# the fitness curve jumps when the subset changes
hist = out.result.history
for t in range(19, 101, 20):
    print(f"gen {hist[t].generation:3d} {hist[t].active_subset_id:>4}  best {hist[t].best_mse:.3e}")

print(evaluate_model(out.result.best.tree, enlarged, spec.model_id).per_subset[:3])
