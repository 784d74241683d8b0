"""Model metrics, the static/dynamic experiment protocols and the three
published closed-form volatility models.

Metrics are computed over an "enlarged" evaluation set, by default every
case of the partition.  ``mse_std`` is the standard deviation of the
per-case squared errors.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .data import CaseSet, FitnessCase, Partition
from .gp.engine import EvolutionResult, fitness_mse, run_evolution, squared_errors
from .gp.operators import GpParams
from .gp.tree import ExprTree, evaluate, parse_prefix
from .subset_selection import SchedulerConfig, SubsetScheduler

log = logging.getLogger(__name__)

NFO_THRESHOLD = 0.1

# Printed formulas rewritten over the GP primitive set (2x = x + x, powers
# as products) so they evaluate under the same protection rules.
REFERENCE_MODELS = {
    "M4S4": "(exp (sub (mul (pln (ncdf ck)) (psqrt (add (sub tau (add ck ck)) sk))) (cos ck)))",
    "MCAR": "(pdiv (mul tau (psqrt ck)) (mul (mul (pln (add sk tau)) (mul sk sk)) (add sk tau)))",
    "MGAR": "(psqrt (pdiv ck (add (mul (mul sk sk) (mul (mul sk sk) (mul sk sk)))"
            " (mul (mul (mul sk sk) (mul (mul sk sk) sk)) tau))))",
}

METHOD_CODES = {"RSS": "R", "SSS": "S", "ASSS": "AS", "ARSS": "AR"}
LEARNING_CODES = {"TS": "S", "MTM": "C", "GLOBAL": "G"}
PROTOCOLS = ("static_ts", "static_mtm", "dynamic_ts", "dynamic_mtm", "dynamic_global")


def reference_tree(model_id: str) -> ExprTree:
    try:
        return parse_prefix(REFERENCE_MODELS[model_id.upper()])
    except KeyError:
        raise ValueError(f"unknown reference model {model_id!r}; "
                         f"choose from {sorted(REFERENCE_MODELS)}") from None


def eval_reference(model_id: str, case):
    """Volatility forecast of a published model for a case, case set or
    ``(c_over_k, s_over_k, tau)`` triple."""
    tree = reference_tree(model_id)
    if isinstance(case, FitnessCase):
        return float(evaluate(tree, case.c_over_k, case.s_over_k, case.tau))
    if isinstance(case, CaseSet):
        return evaluate(tree, case.ck, case.sk, case.tau)
    ck, sk, tau = case
    out = evaluate(tree, ck, sk, tau)
    return float(out) if out.ndim == 0 else out


def as_predictor(model) -> ExprTree | Callable[[CaseSet], np.ndarray]:
    """Trees and callables pass through; strings are reference ids or prefix expressions."""
    if isinstance(model, str):
        return reference_tree(model) if model.upper() in REFERENCE_MODELS else parse_prefix(model)
    return model


# ----------------------------------------------------------------------------
# metrics

def _predict(predictor, dataset: CaseSet) -> np.ndarray:
    if isinstance(predictor, ExprTree):
        return evaluate(predictor, dataset.ck, dataset.sk, dataset.tau)
    return np.asarray(predictor(dataset), dtype=float)


def mse_total(predictor, dataset: CaseSet) -> tuple[float, float]:
    """(MSE, standard deviation of the squared errors) over ``dataset``."""
    predictor = as_predictor(predictor)
    if len(dataset) == 0:
        raise ValueError("MSE of an empty dataset is undefined")
    sq = squared_errors(predictor, dataset)
    return fitness_mse(predictor, dataset), float(np.std(sq))


def nfo_percentage(predictor, dataset: CaseSet, threshold: float = NFO_THRESHOLD) -> float:
    """Share of cases, in percent, whose absolute error is not below ``threshold``."""
    predictor = as_predictor(predictor)
    if len(dataset) == 0:
        raise ValueError("NFO of an empty dataset is undefined")
    abs_err = np.abs(dataset.sigma - _predict(predictor, dataset))
    return 100.0 * float(np.mean(abs_err >= threshold))


@dataclass
class MetricsReport:
    model_id: str
    mse_total: float
    mse_std: float
    nfo_pct: float
    per_subset: list[tuple[str, float, float]] = field(default_factory=list)
    dataset: str = "ALL"
    n_cases: int = 0
    kind: str = ""
    learning: str = ""
    method: str = ""
    seed: int | None = None
    test_mse: float | None = None
    expression: str = ""


def evaluate_model(predictor, sets: Mapping[str, CaseSet] | Sequence[CaseSet], model_id: str,
                   dataset_label: str = "ALL", threshold: float = NFO_THRESHOLD,
                   **extra) -> MetricsReport:
    """Metrics over the union of ``sets`` plus a per-set breakdown."""
    predictor = as_predictor(predictor)
    parts = list(sets.values()) if isinstance(sets, Mapping) else list(sets)
    union = CaseSet.concat(dataset_label, parts)
    mse, std = mse_total(predictor, union)
    per = [(p.name, fitness_mse(predictor, p), nfo_percentage(predictor, p, threshold))
           for p in parts if len(p)]
    expr = str(predictor) if isinstance(predictor, ExprTree) else ""
    return MetricsReport(model_id, mse, std, nfo_percentage(predictor, union, threshold), per,
                         dataset_label, len(union), expression=expr, **extra)


def select_best(reports: Sequence[MetricsReport]) -> list[MetricsReport]:
    """Rank by MSE Total, then by NFO%; all reports must share a dataset."""
    if not reports:
        return []
    labels = {(r.dataset, r.n_cases) for r in reports}
    if len(labels) > 1:
        raise ValueError(f"reports computed on different datasets: {sorted(labels)}")
    return sorted(reports, key=lambda r: (r.mse_total, r.nfo_pct))


# ----------------------------------------------------------------------------
# experiment protocols

@dataclass(frozen=True)
class RunSpec:
    kind: str        # "static" or "dynamic"
    learning: str    # "TS", "MTM" or "GLOBAL"
    method: str
    train: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    model_id: str


def protocol_runs(partition: Partition, protocol: str, seeds: Iterable[int],
                  methods: Sequence[str] = ("RSS", "SSS", "ASSS", "ARSS")) -> list[RunSpec]:
    """Training/test assignments of one protocol for every seed."""
    ts = [s.name for s in partition.ts_samples]
    train = [s.name for s in partition.mtm_train]
    test = [s.name for s in partition.mtm_test]
    runs = []
    for seed in seeds:
        if protocol == "static_ts":
            for i in range(len(ts) - 1):
                runs.append(RunSpec("static", "TS", "STATIC", (ts[i],), (ts[i + 1],), seed,
                                    f"M{i + 1}S{i + 1}"))
        elif protocol == "static_mtm":
            for tr, te in zip(train, test):
                n = tr[1:-1]
                runs.append(RunSpec("static", "MTM", "STATIC", (tr,), (te,), seed, f"M{n}C{n}"))
        elif protocol in ("dynamic_ts", "dynamic_mtm", "dynamic_global"):
            learning = protocol.split("_")[1].upper()
            if learning == "TS":
                tr_names, te_names = ts[:-1], ts[-1:]
            elif learning == "MTM":
                tr_names, te_names = train, test
            else:
                tr_names, te_names = ts[:-1] + train, ts[-1:] + test
            for method in methods:
                method = method.upper()
                if method == "STATIC":
                    raise ValueError("STATIC selection cannot drive a multi-subset protocol")
                runs.append(RunSpec("dynamic", learning, method, tuple(tr_names), tuple(te_names),
                                    seed, f"M{LEARNING_CODES[learning]}{METHOD_CODES[method]}"))
        else:
            raise ValueError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    return runs


def run_seeds(seed: int) -> tuple[np.random.Generator, int]:
    """Independent engine generator and scheduler seed derived from one run seed."""
    engine = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    sched_seed = int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])
    return engine, sched_seed


@dataclass
class RunOutcome:
    spec: RunSpec
    result: EvolutionResult
    report: MetricsReport


def execute_run(spec: RunSpec, partition: Partition, params: GpParams,
                eval_sets: Mapping[str, CaseSet] | None = None,
                generations: int | None = None, weight_mode: str = "eq4",
                on_generation=None, init_weight: float = 1.0) -> RunOutcome:
    sets = partition.named_sets()
    train = [sets[n] for n in spec.train]
    test = CaseSet.concat("+".join(spec.test), [sets[n] for n in spec.test])
    engine_rng, sched_seed = run_seeds(spec.seed)
    g = (generations or params.generations_static) if spec.kind == "static" else params.epoch_length
    cfg = SchedulerConfig(spec.method, g, list(spec.train), seed=sched_seed,
                          init_weight=init_weight, weight_mode=weight_mode)
    result = run_evolution(params, SubsetScheduler(cfg), train, test, engine_rng, generations,
                           on_generation)
    if eval_sets is None:
        eval_sets = {s.name: s for s in partition.ts_samples}
    report = evaluate_model(result.best.tree, eval_sets, spec.model_id, kind=spec.kind,
                            learning=spec.learning, method=spec.method, seed=spec.seed,
                            test_mse=result.best_test_mse)
    log.info("%s seed=%d mse_total=%.6g nfo=%.2f%%", spec.model_id, spec.seed,
             report.mse_total, report.nfo_pct)
    return RunOutcome(spec, result, report)


def _execute(args):
    return execute_run(*args)


def run_experiment_suite(partition: Partition, params: GpParams,
                         methods: Sequence[str] = ("RSS", "SSS", "ASSS", "ARSS"),
                         protocols: Sequence[str] = PROTOCOLS, n_seeds: int = 10,
                         base_seed: int = 0, eval_sets: Mapping[str, CaseSet] | None = None,
                         generations_static: int | None = None,
                         generations_dynamic: int | None = None,
                         weight_mode: str = "eq4", n_jobs: int = 1,
                         keep_outcomes: bool = False) -> list[MetricsReport] | list[RunOutcome]:
    """Run the selected static and dynamic protocols for ``n_seeds`` seeds.

    Seeds are shared across protocols, so static TS and MTM runs with the
    same seed start from the same initial population.  The per-run
    randomness is derived from the seed alone, so ``n_jobs > 1`` reproduces
    the sequential results exactly; output order is always spec order.
    """
    seeds = range(base_seed, base_seed + n_seeds)
    specs = [spec for proto in protocols for spec in protocol_runs(partition, proto, seeds, methods)]
    jobs = [(spec, partition, params, eval_sets,
             generations_static if spec.kind == "static" else generations_dynamic, weight_mode)
            for spec in specs]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            outcomes = list(pool.map(_execute, jobs))
    else:
        outcomes = [_execute(job) for job in jobs]
    return outcomes if keep_outcomes else [o.report for o in outcomes]


def best_of_seeds(reports: Sequence[MetricsReport]) -> list[MetricsReport]:
    """For each model slot keep the seed with the lowest test MSE."""
    best: dict[str, MetricsReport] = {}
    for r in reports:
        key = r.model_id
        score = r.test_mse if r.test_mse is not None else r.mse_total
        cur = best.get(key)
        if cur is None or score < (cur.test_mse if cur.test_mse is not None else cur.mse_total):
            best[key] = r
    return list(best.values())


def summarize(reports: Sequence[MetricsReport]) -> list[dict]:
    """Average MSE Total, squared-error std and NFO% per (selection, learning set)."""
    groups: dict[tuple[str, str], list[MetricsReport]] = {}
    for r in reports:
        groups.setdefault((r.kind, r.learning), []).append(r)
    rows = []
    for (kind, learning), rs in groups.items():
        rows.append({"selection": kind, "learning": learning, "n_models": len(rs),
                     "avg_mse_total": float(np.mean([r.mse_total for r in rs])),
                     "avg_mse_std": float(np.mean([r.mse_std for r in rs])),
                     "avg_nfo_pct": float(np.mean([r.nfo_pct for r in rs]))})
    return rows


# ----------------------------------------------------------------------------
# exports

REPORT_COLUMNS = ("model_id", "mse_total", "mse_std", "nfo_pct")


def write_reports_csv(path: str | Path, reports: Sequence[MetricsReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS + ("seed", "dataset"))
        for r in reports:
            w.writerow([r.model_id, repr(r.mse_total), repr(r.mse_std), repr(r.nfo_pct),
                        "" if r.seed is None else r.seed, r.dataset])


def write_reports_json(path: str | Path, reports: Sequence[MetricsReport]) -> None:
    Path(path).write_text(json.dumps([asdict(r) for r in reports], indent=1) + "\n")


def read_reports_json(path: str | Path) -> list[MetricsReport]:
    out = []
    for d in json.loads(Path(path).read_text()):
        d["per_subset"] = [tuple(p) for p in d["per_subset"]]
        out.append(MetricsReport(**d))
    return out


def write_summary_csv(path: str | Path, rows: Sequence[dict]) -> None:
    cols = ("selection", "learning", "n_models", "avg_mse_total", "avg_mse_std", "avg_nfo_pct")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
