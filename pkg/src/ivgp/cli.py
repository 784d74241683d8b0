"""Command-line driver: ``generate``, ``run``, ``evaluate`` and ``report``.

Configuration is a flat ``section.key = value`` text file.  Any key can be
overridden on the command line either as ``--section.key VALUE`` or as a
bare ``section.key=VALUE`` argument; ``--seed`` sets the master seed.  Every
command writes the fully resolved configuration into its output directory,
and that file can be passed back with ``--config`` to repeat the run.

Example::

    python3 -m ivgp generate --out data data.n=6670
    python3 -m ivgp run --data data --out runs/arss run.protocol=global scheduler.method=ARSS
    python3 -m ivgp evaluate --data data --out eval/mgar --model MGAR
    python3 -m ivgp report --out report runs/arss
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .data import (
    FilterConfig,
    SurfaceConfig,
    apply_filters,
    build_partition,
    generate_synthetic,
    read_partition,
    read_raw_records,
    rejection_summary,
    write_cases,
    write_manifest,
    write_raw_records,
    make_fitness_cases,
)
from .evaluation import (
    REFERENCE_MODELS,
    RunSpec,
    best_of_seeds,
    evaluate_model,
    execute_run,
    protocol_runs,
    read_reports_json,
    select_best,
    summarize,
    write_reports_csv,
    write_reports_json,
    write_summary_csv,
)
from .gp.engine import write_history
from .gp.operators import GpParams
from .gp.tree import parse_prefix
from .subset_selection import write_trace

log = logging.getLogger("ivgp")

CONFIG_NAME = "config.txt"
RUN_PROTOCOLS = ("static", "ts", "mtm", "global")


class UsageError(Exception):
    """Invalid command-line input; reported with exit status 2."""


def _section_defaults(prefix: str, obj, skip=()) -> dict:
    return {f"{prefix}.{f.name}": getattr(obj, f.name)
            for f in dataclasses.fields(obj) if f.name not in skip}


def default_config() -> dict:
    cfg = {"seed": 0}
    cfg.update({"data.n": 6670, "data.date_span": 240, "data.allow_negative_rate": False})
    cfg.update(_section_defaults("surface", SurfaceConfig(), skip=("seed",)))
    cfg.update(_section_defaults("filter", FilterConfig()))
    cfg.update(_section_defaults("gp", GpParams(), skip=("seed",)))
    cfg.update({"scheduler.method": "ARSS", "scheduler.init_weight": 1.0,
                "scheduler.weight_mode": "eq4"})
    cfg.update({"run.protocol": "global", "run.subset": "", "run.n_seeds": 10,
                "run.generations": 0, "run.dataset": "all", "run.nfo_threshold": 0.1})
    return cfg


def _coerce(key: str, text: str, like):
    text = text.strip()
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            parts = [p for p in text.replace("[", "").replace("]", "").split(",") if p.strip()]
            return tuple(type(v)(p) for v, p in zip(like, parts)) if len(parts) == len(like) \
                else _bad_tuple(key, text, like)
    except ValueError:
        raise UsageError(f"bad value for {key}: {text!r}") from None
    return text


def _bad_tuple(key, text, like):
    raise UsageError(f"{key} needs {len(like)} comma-separated values, got {text!r}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, base: dict | None = None) -> dict:
    cfg = dict(default_config() if base is None else base)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        apply_override(cfg, key, value)
    return cfg


def apply_override(cfg: dict, key: str, value: str) -> None:
    if key.startswith("version."):
        return  # provenance lines of a saved config
    if key not in cfg:
        raise UsageError(f"unknown config key {key!r}")
    cfg[key] = _coerce(key, value, cfg[key])


def config_text(cfg: dict) -> str:
    lines = [f"version.ivgp = {__version__}", f"version.numpy = {np.__version__}",
             f"version.scipy = {scipy.__version__}",
             f"version.python = {platform.python_version()}"]
    lines += [f"{k} = {_format(v)}" for k, v in sorted(cfg.items())]
    return "\n".join(lines) + "\n"


def write_config(out_dir: Path, cfg: dict) -> None:
    (out_dir / CONFIG_NAME).write_text(config_text(cfg))


def _section(cfg: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


def surface_config(cfg: dict) -> SurfaceConfig:
    return SurfaceConfig(seed=cfg["seed"], **_section(cfg, "surface"))


def filter_config(cfg: dict) -> FilterConfig:
    return FilterConfig(**_section(cfg, "filter"))


def gp_params(cfg: dict) -> GpParams:
    return GpParams(seed=cfg["seed"], **_section(cfg, "gp"))


def _checked(build, *args):
    try:
        return build(*args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ----------------------------------------------------------------------------
# commands

def cmd_generate(cfg: dict, out: Path) -> None:
    """Synthetic raw records, filtered fitness cases and the partition manifest."""
    if cfg["data.n"] <= 0:
        raise UsageError("data.n must be positive")
    surface = _checked(surface_config, cfg)
    filters = _checked(filter_config, cfg)
    records = _checked(generate_synthetic, surface, cfg["data.n"], cfg["data.date_span"])
    out.mkdir(parents=True, exist_ok=True)
    write_raw_records(out / "raw_records.csv", records)
    _build_dataset(cfg, out, records, filters)
    write_config(out, cfg)


def _build_dataset(cfg, out: Path, records, filters) -> None:
    kept, report = apply_filters(records, filters)
    cases, dropped = make_fitness_cases(kept, allow_negative_rate=cfg["data.allow_negative_rate"])
    if len(cases) < 10:
        raise UsageError(f"only {len(cases)} usable cases; need at least 10")
    partition = build_partition(cases)
    write_cases(out / "cases.csv", cases)
    write_manifest(out / "manifest.json", partition)
    with open(out / "filter_report.csv", "w") as fh:
        fh.write("reason,count\n")
        for reason, count in list(report.items()) + [("inversion_failed", dropped)]:
            fh.write(f"{reason},{count}\n")
    log.info("%s; kept %d cases", rejection_summary(report, filters), len(cases))


def cmd_ingest(cfg: dict, raw: Path, out: Path) -> None:
    """Filter and partition an existing raw-record file."""
    if not raw.exists():
        raise UsageError(f"raw record file {raw} not found")
    out.mkdir(parents=True, exist_ok=True)
    _build_dataset(cfg, out, read_raw_records(raw), _checked(filter_config, cfg))
    write_config(out, cfg)


def load_partition(data: Path):
    cases, manifest = data / "cases.csv", data / "manifest.json"
    if not cases.exists() or not manifest.exists():
        raise UsageError(f"{data} does not hold cases.csv and manifest.json; run generate first")
    return read_partition(cases, manifest)


def eval_sets(partition, spec: str) -> dict:
    sets = partition.named_sets()
    if spec.lower() == "all":
        return {s.name: s for s in partition.ts_samples}
    names = [n.strip().replace("_", "") for n in spec.split(",") if n.strip()]
    missing = [n for n in names if n not in sets]
    if missing or not names:
        raise UsageError(f"unknown evaluation subsets {missing or spec!r}")
    return {n: sets[n] for n in names}


def run_specs(cfg: dict, partition) -> list[RunSpec]:
    protocol = cfg["run.protocol"].lower()
    method = cfg["scheduler.method"].upper()
    seeds = range(cfg["seed"], cfg["seed"] + cfg["run.n_seeds"])
    if cfg["run.n_seeds"] < 1:
        raise UsageError("run.n_seeds must be >= 1")
    if protocol not in RUN_PROTOCOLS:
        raise UsageError(f"unknown protocol {protocol!r}; choose from {RUN_PROTOCOLS}")
    if protocol == "static":
        if method != "STATIC":
            raise UsageError(f"protocol static needs scheduler.method=STATIC, got {method}")
        subset = cfg["run.subset"].replace("_", "").upper()
        pool = protocol_runs(partition, "static_ts", [0]) + protocol_runs(partition, "static_mtm", [0])
        ts = [s.name for s in partition.ts_samples]
        if subset == ts[-1]:
            pool.append(RunSpec("static", "TS", "STATIC", (subset,), (), 0, f"M{len(ts)}S{len(ts)}"))
        match = [s for s in pool if s.train == (subset,)]
        if not match:
            raise UsageError(f"run.subset must name one training sample (e.g. S4 or C3L), got {subset!r}")
        return [dataclasses.replace(match[0], seed=s) for s in seeds]
    if method == "STATIC":
        n = {"ts": len(partition.ts_samples) - 1, "mtm": len(partition.mtm_train)}.get(
            protocol, len(partition.ts_samples) - 1 + len(partition.mtm_train))
        raise UsageError(f"STATIC selection takes one subset; protocol {protocol} has {n}")
    try:
        return protocol_runs(partition, f"dynamic_{protocol}", seeds, [method])
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid method {method!r}: {exc}") from None


def cmd_run(cfg: dict, data: Path, out: Path) -> list:
    partition = load_partition(data)
    params = _checked(gp_params, cfg)
    specs = run_specs(cfg, partition)
    sets = eval_sets(partition, cfg["run.dataset"])
    out.mkdir(parents=True, exist_ok=True)
    write_config(out, cfg)
    generations = cfg["run.generations"] or None
    reports = []
    for spec in specs:
        try:
            outcome = execute_run(spec, partition, params, sets, generations,
                                  cfg["scheduler.weight_mode"],
                                  init_weight=cfg["scheduler.init_weight"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        run_dir = out / f"seed_{spec.seed}"
        run_dir.mkdir(exist_ok=True)
        write_history(run_dir / "history.csv", outcome.result.history)
        write_trace(run_dir / "trace.csv", outcome.result.scheduler)
        (run_dir / "best_model.txt").write_text(str(outcome.result.best.tree) + "\n")
        write_reports_csv(run_dir / "metrics.csv", [outcome.report])
        write_reports_json(run_dir / "metrics.json", [outcome.report])
        reports.append(outcome.report)
    write_reports_csv(out / "metrics.csv", reports)
    write_reports_json(out / "metrics.json", reports)
    return reports


def _model_sources(source: str) -> list[tuple[str, object]]:
    """(model id, expression) pairs for a run directory, reference id or prefix string."""
    path = Path(source)
    if path.is_dir():
        files = [path / "best_model.txt"] if (path / "best_model.txt").exists() \
            else sorted(path.glob("seed_*/best_model.txt"))
        if not files:
            raise UsageError(f"no best_model.txt under {path}")
        out = []
        for f in files:
            model_id = f.parent.name
            meta = f.parent / "metrics.json"
            if meta.exists():
                r = read_reports_json(meta)[0]
                model_id = f"{r.model_id}-s{r.seed}"
            try:
                out.append((model_id, parse_prefix(f.read_text())))
            except ValueError as exc:
                raise UsageError(f"{f}: {exc}") from None
        return out
    if source.upper() in REFERENCE_MODELS:
        return [(source.upper(), source.upper())]
    if source.lstrip().startswith("("):
        try:
            return [("expr", parse_prefix(source))]
        except ValueError as exc:
            raise UsageError(f"cannot parse expression: {exc}") from None
    raise UsageError(f"unknown model {source!r}: give a run directory, one of "
                     f"{sorted(REFERENCE_MODELS)}, or a prefix expression")


def cmd_evaluate(cfg: dict, models: Sequence[str], data: Path, out: Path) -> list:
    sources = [m for src in models for m in _model_sources(src)]
    partition = load_partition(data)
    sets = eval_sets(partition, cfg["run.dataset"])
    label = "ALL" if cfg["run.dataset"].lower() == "all" else "+".join(sets)
    reports = [evaluate_model(model, sets, model_id, label, cfg["run.nfo_threshold"])
               for model_id, model in sources]
    out.mkdir(parents=True, exist_ok=True)
    write_config(out, cfg)
    write_reports_csv(out / "metrics.csv", reports)
    write_reports_json(out / "metrics.json", reports)
    with open(out / "per_subset.csv", "w") as fh:
        fh.write("model_id,subset,mse,nfo_pct\n")
        for r in reports:
            for name, mse, nfo in r.per_subset:
                fh.write(f"{r.model_id},{name},{mse!r},{nfo!r}\n")
    return reports


def cmd_report(inputs: Sequence[Path], out: Path) -> None:
    """Summary tables over the metrics of one or more run/evaluate directories."""
    reports = []
    for p in inputs:
        f = p / "metrics.json" if p.is_dir() else p
        if not f.exists():
            raise UsageError(f"no metrics.json in {p}")
        reports += read_reports_json(f)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(out / "summary.csv", summarize(reports))
    try:
        ranked = select_best(best_of_seeds(reports))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_reports_csv(out / "ranking.csv", ranked)


# ----------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ivgp", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", type=Path, help="key = value configuration file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        if data:
            sp.add_argument("--data", type=Path, required=True, help="dataset directory")
        sp.add_argument("overrides", nargs="*", metavar="KEY=VALUE")

    g = sub.add_parser("generate", help="synthetic dataset, or ingest a raw record file")
    common(g, data=False)
    g.add_argument("--raw", type=Path, help="ingest this raw record CSV instead of generating")
    common(sub.add_parser("run", help="evolve models under one protocol"))
    e = sub.add_parser("evaluate", help="metrics of evolved or reference models")
    e.add_argument("--model", action="append", required=True,
                   help="run directory, reference id (M4S4, MCAR, MGAR) or prefix expression")
    common(e)
    r = sub.add_parser("report", help="summary tables from run/evaluate outputs")
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("inputs", nargs="+", type=Path)
    return p


def normalize_argv(argv: Sequence[str]) -> list[str]:
    """Turn ``--section.key VALUE`` and ``--section.key=VALUE`` into ``section.key=VALUE``."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        key = tok[2:].split("=", 1)[0] if tok.startswith("--") else ""
        if "." in key or key in default_config():
            if "=" in tok:
                out.append(tok[2:])
            elif i + 1 < len(argv):
                out.append(f"{key}={argv[i + 1]}")
                i += 1
            else:
                raise UsageError(f"missing value for {tok}")
        else:
            out.append(tok)
        i += 1
    return out


def resolve_config(args) -> dict:
    cfg = default_config()
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config file {args.config} not found")
        cfg = parse_config_text(args.config.read_text(), cfg)
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"expected KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(cfg, key.strip(), value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        argv = normalize_argv(sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        parser.error(str(exc))
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cmd_report(args.inputs, args.out)
            return 0
        cfg = resolve_config(args)
        if args.command == "generate":
            if args.raw is not None:
                cmd_ingest(cfg, args.raw, args.out)
            else:
                cmd_generate(cfg, args.out)
        elif args.command == "run":
            cmd_run(cfg, args.data, args.out)
        else:
            cmd_evaluate(cfg, args.model, args.data, args.out)
    except UsageError as exc:
        parser.error(str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
