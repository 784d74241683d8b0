"""Option-quote ingest, exclusion filters, partitioning and synthetic data.

The raw layout mirrors an end-of-day option chain: one call quote per row
with its underlying spot and the risk-free rate of the day.  Records flow
through ``apply_filters`` -> ``make_fitness_cases`` -> ``build_partition``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .option_math import (
    DAYS_PER_YEAR,
    MarketQuote,
    NonConvergence,
    NoRoot,
    bs_call_price,
    implied_vol,
)

log = logging.getLogger(__name__)

RAW_COLUMNS = ("quote_date", "expiry_date", "strike", "bid", "ask", "spot", "rate")
CASE_COLUMNS = ("c_over_k", "s_over_k", "tau", "target_sigma")

# footnote cutoffs on S/K and on maturity in days
OTM_BELOW = 0.98
ITM_FROM = 1.03
ST_BELOW_DAYS = 60
LT_ABOVE_DAYS = 180

MONEYNESS_CLASSES = ("OTM", "ATM", "ITM")
TERM_CLASSES = ("ST", "MT", "LT")
MTM_CLASSES = tuple((m, t) for m in MONEYNESS_CLASSES for t in TERM_CLASSES)

FILTER_REASONS = ("short_maturity", "low_quote", "moneyness", "arbitrage")


@dataclass(frozen=True)
class RawQuoteRecord:
    quote_date: dt.date
    expiry_date: dt.date
    strike: float
    bid: float
    ask: float
    spot: float
    rate: float

    def __post_init__(self):
        if self.expiry_date <= self.quote_date:
            raise ValueError(f"expiry {self.expiry_date} not after quote date {self.quote_date}")
        if not (0 <= self.bid <= self.ask):
            raise ValueError(f"need 0 <= bid <= ask, got bid={self.bid} ask={self.ask}")

    @property
    def days(self) -> int:
        return (self.expiry_date - self.quote_date).days

    @property
    def tau(self) -> float:
        return self.days / DAYS_PER_YEAR

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    @property
    def moneyness(self) -> float:
        return self.spot / self.strike

    def to_quote(self) -> MarketQuote:
        return MarketQuote(spot=self.spot, strike=self.strike, call_price=self.mid,
                           rate=self.rate, maturity=self.tau)


@dataclass(frozen=True)
class FitnessCase:
    c_over_k: float
    s_over_k: float
    tau: float
    target_sigma: float
    quote_date: dt.date | None = None

    def __post_init__(self):
        values = (self.c_over_k, self.s_over_k, self.tau, self.target_sigma)
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ValueError(f"fitness case fields must be finite and positive: {self}")
        if self.target_sigma > 5.0:
            raise ValueError(f"target sigma {self.target_sigma} above 5")


@dataclass(frozen=True)
class CaseSet:
    """Column-oriented batch of fitness cases used for vectorised evaluation.

    ``rows`` are indices into the full chronological case list, which is what
    the partition manifest records.
    """

    name: str
    ck: np.ndarray
    sk: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    rows: np.ndarray

    def __len__(self) -> int:
        return len(self.sigma)

    @classmethod
    def from_cases(cls, name: str, cases: Sequence[FitnessCase],
                   rows: Iterable[int] | None = None) -> "CaseSet":
        rows = np.arange(len(cases)) if rows is None else np.asarray(list(rows), dtype=np.int64)
        col = lambda attr: np.array([getattr(c, attr) for c in cases], dtype=float)
        return cls(name, col("c_over_k"), col("s_over_k"), col("tau"), col("target_sigma"), rows)

    def take(self, name: str, idx) -> "CaseSet":
        idx = np.asarray(idx, dtype=np.int64)
        return CaseSet(name, self.ck[idx], self.sk[idx], self.tau[idx], self.sigma[idx],
                       self.rows[idx])

    @classmethod
    def concat(cls, name: str, parts: Sequence["CaseSet"]) -> "CaseSet":
        """Stack case sets; cases present in several parts are kept once per part."""
        cat = lambda attr: np.concatenate([getattr(p, attr) for p in parts])
        return cls(name, cat("ck"), cat("sk"), cat("tau"), cat("sigma"), cat("rows"))


@dataclass(frozen=True)
class FilterConfig:
    min_maturity_days: int = 10
    min_quote: float = 0.375
    moneyness_band: tuple[float, float] = (0.85, 1.15)
    enforce_arbitrage: bool = True

    def __post_init__(self):
        low, high = self.moneyness_band
        if not low < 1 < high:
            raise ValueError(f"moneyness band must straddle 1, got {self.moneyness_band}")
        if self.min_maturity_days < 0:
            raise ValueError("min_maturity_days must be >= 0")


@dataclass(frozen=True)
class SurfaceConfig:
    """Parameters of the synthetic implied-volatility surface

    ``sigma = base_vol + smile_coeff * ln(S/K)**2 + term_coeff * sqrt(tau)``
    """

    base_vol: float = 0.15
    smile_coeff: float = 0.5
    term_coeff: float = 0.05
    noise_sd: float = 0.0
    seed: int = 0
    spot0: float = 900.0
    rate: float = 0.012
    daily_vol: float = 0.01
    min_price: float = 0.375
    moneyness_range: tuple[float, float] = (0.85, 1.15)
    maturity_days: tuple[int, int] = (15, 365)

    def surface(self, s_over_k, tau):
        return self.base_vol + self.smile_coeff * np.log(s_over_k) ** 2 + self.term_coeff * np.sqrt(tau)


@dataclass
class Partition:
    ts_samples: list[CaseSet]
    mtm_train: list[CaseSet]
    mtm_test: list[CaseSet]
    mtm_labels: list[tuple[str, str]] = field(default_factory=list)
    empty_classes: list[tuple[str, str]] = field(default_factory=list)

    @property
    def all_cases(self) -> CaseSet:
        return CaseSet.concat("ALL", self.ts_samples)

    def named_sets(self) -> dict[str, CaseSet]:
        out = {s.name: s for s in self.ts_samples}
        out.update({s.name: s for s in self.mtm_train})
        out.update({s.name: s for s in self.mtm_test})
        return out

    def manifest(self) -> dict:
        """Sample id -> list of half-open ``[start, stop)`` row ranges."""
        return {name: _row_ranges(cs.rows) for name, cs in self.named_sets().items()}


def _row_ranges(rows) -> list[list[int]]:
    ranges: list[list[int]] = []
    for r in map(int, rows):
        if ranges and ranges[-1][1] == r:
            ranges[-1][1] = r + 1
        else:
            ranges.append([r, r + 1])
    return ranges


# ----------------------------------------------------------------------------
# filters and classification

def rejection_reason(rec: RawQuoteRecord, cfg: FilterConfig) -> str | None:
    """First failing exclusion filter for ``rec``, or None if it is kept."""
    if rec.days < cfg.min_maturity_days:
        return "short_maturity"
    if rec.mid < cfg.min_quote:
        return "low_quote"
    low, high = cfg.moneyness_band
    if not low <= rec.moneyness <= high:
        return "moneyness"
    if cfg.enforce_arbitrage and rec.mid < rec.spot - rec.strike * math.exp(-rec.rate * rec.tau):
        return "arbitrage"
    return None


def apply_filters(records: Iterable[RawQuoteRecord],
                  cfg: FilterConfig = FilterConfig()) -> tuple[list[RawQuoteRecord], dict[str, int]]:
    kept = []
    report = {reason: 0 for reason in FILTER_REASONS}
    for rec in records:
        reason = rejection_reason(rec, cfg)
        if reason is None:
            kept.append(rec)
        else:
            report[reason] += 1
    log.info("filters kept %d records, rejected %s", len(kept), report)
    return kept, report


def classify_values(s_over_k: float, days: float) -> tuple[str, str]:
    if s_over_k < OTM_BELOW:
        moneyness = "OTM"
    elif s_over_k < ITM_FROM:
        moneyness = "ATM"
    else:
        moneyness = "ITM"
    # tau*365 rarely lands on an exact integer, so compare on a rounded value
    days = round(days, 6)
    if days < ST_BELOW_DAYS:
        term = "ST"
    elif days <= LT_ABOVE_DAYS:
        term = "MT"
    else:
        term = "LT"
    return moneyness, term


def classify(item: FitnessCase | RawQuoteRecord) -> tuple[str, str]:
    if isinstance(item, RawQuoteRecord):
        return classify_values(item.moneyness, item.days)
    return classify_values(item.s_over_k, item.tau * DAYS_PER_YEAR)


def make_fitness_cases(records: Sequence[RawQuoteRecord], *, allow_negative_rate: bool = False
                       ) -> tuple[list[FitnessCase], int]:
    """Invert each record to its implied volatility; returns (cases, n_dropped).

    Records are ordered chronologically (stable on ties) before conversion.
    """
    cases = []
    dropped = 0
    for rec in sorted(records, key=lambda r: r.quote_date):
        try:
            sigma = implied_vol(rec.to_quote(), allow_negative_rate=allow_negative_rate)
            cases.append(FitnessCase(rec.mid / rec.strike, rec.moneyness, rec.tau, sigma,
                                     rec.quote_date))
        except (NoRoot, NonConvergence, ValueError) as exc:
            dropped += 1
            log.debug("dropping record %s: %s", rec, exc)
    if dropped:
        log.warning("%d records failed implied-vol inversion and were dropped", dropped)
    return cases, dropped


# ----------------------------------------------------------------------------
# partitioning

def split_sizes(n: int, k: int) -> list[int]:
    if k < 1 or k > n:
        raise ValueError(f"cannot split {n} cases into {k} samples")
    q, rem = divmod(n, k)
    return [q + 1 if i < rem else q for i in range(k)]


def split_time_series(cases: Sequence, k: int = 10) -> list[list]:
    out, start = [], 0
    for size in split_sizes(len(cases), k):
        out.append(list(cases[start:start + size]))
        start += size
    return out


def split_mtm(cases: Sequence[FitnessCase]) -> dict[tuple[str, str], tuple[list[int], list[int]]]:
    """Row indices of the train/test halves of each moneyness-maturity class.

    Within a class the chronologically first half (rounded up) trains.
    Empty classes are left out with a warning.
    """
    members: dict[tuple[str, str], list[int]] = {c: [] for c in MTM_CLASSES}
    for i, case in enumerate(cases):
        members[classify(case)].append(i)
    out = {}
    for label in MTM_CLASSES:
        idx = members[label]
        if not idx:
            log.warning("moneyness-maturity class %s is empty and is excluded", label)
            continue
        n_train = (len(idx) + 1) // 2
        out[label] = (idx[:n_train], idx[n_train:])
    return out


def build_partition(cases: Sequence[FitnessCase], k: int = 10) -> Partition:
    full = CaseSet.from_cases("ALL", cases)
    ts, start = [], 0
    for i, size in enumerate(split_sizes(len(cases), k)):
        ts.append(full.take(f"S{i + 1}", np.arange(start, start + size)))
        start += size
    mtm = split_mtm(cases)
    train, test, labels = [], [], []
    for i, label in enumerate(MTM_CLASSES):
        if label not in mtm:
            continue
        tr, te = mtm[label]
        train.append(full.take(f"C{i + 1}L", tr))
        test.append(full.take(f"C{i + 1}T", te))
        labels.append(label)
    empty = [c for c in MTM_CLASSES if c not in mtm]
    return Partition(ts, train, test, labels, empty)


# ----------------------------------------------------------------------------
# synthetic data

def generate_synthetic(cfg: SurfaceConfig, n: int, date_span: int = 240,
                       start: dt.date = dt.date(2003, 1, 2)) -> list[RawQuoteRecord]:
    """Call quotes priced off a known smile/term surface.

    Quote dates are the weekdays of ``date_span`` calendar days with the
    records spread evenly over them in chronological order; the spot follows
    a seeded lognormal walk.  Draws priced below ``cfg.min_price`` are redrawn
    so every record survives the default exclusion filters.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(cfg.seed)
    days = [start + dt.timedelta(d) for d in range(date_span)]
    days = [d for d in days if d.weekday() < 5]
    if not days:
        raise ValueError("date span contains no weekday")
    spots = cfg.spot0 * np.exp(np.cumsum(rng.normal(0.0, cfg.daily_vol, len(days))))

    lo_m, hi_m = cfg.moneyness_range
    lo_d, hi_d = cfg.maturity_days
    check = cfg.surface(np.array([lo_m, 1.0, hi_m]), np.array([lo_d, hi_d]).reshape(-1, 1) / DAYS_PER_YEAR)
    if check.min() <= 0.01 or check.max() >= 2.0:
        raise ValueError("volatility surface leaves (0.01, 2.0) on the generation grid")

    records = []
    for i in range(n):
        d = i * len(days) // n
        spot = float(spots[d])
        while True:
            m = float(rng.uniform(lo_m, hi_m))
            n_days = int(rng.integers(lo_d, hi_d + 1))
            tau = n_days / DAYS_PER_YEAR
            sigma = float(cfg.surface(m, tau))
            if cfg.noise_sd > 0:
                sigma = max(sigma + float(rng.normal(0.0, cfg.noise_sd)), 0.01)
            strike = spot / m
            price = bs_call_price(spot, strike, cfg.rate, tau, sigma).price
            if price >= cfg.min_price:
                break
        records.append(RawQuoteRecord(days[d], days[d] + dt.timedelta(n_days), strike,
                                      price, price, spot, cfg.rate))
    return records


# ----------------------------------------------------------------------------
# file formats

def write_raw_records(path: str | Path, records: Iterable[RawQuoteRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_COLUMNS)
        for r in records:
            w.writerow([r.quote_date.isoformat(), r.expiry_date.isoformat(),
                        repr(r.strike), repr(r.bid), repr(r.ask), repr(r.spot), repr(r.rate)])


def read_raw_records(path: str | Path) -> list[RawQuoteRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RAW_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [RawQuoteRecord(dt.date.fromisoformat(row["quote_date"]),
                               dt.date.fromisoformat(row["expiry_date"]),
                               float(row["strike"]), float(row["bid"]), float(row["ask"]),
                               float(row["spot"]), float(row["rate"]))
                for row in reader]


def write_cases(path: str | Path, cases: Iterable[FitnessCase]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CASE_COLUMNS)
        for c in cases:
            w.writerow([repr(c.c_over_k), repr(c.s_over_k), repr(c.tau), repr(c.target_sigma)])


def read_cases(path: str | Path) -> list[FitnessCase]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [FitnessCase(*(float(row[c]) for c in CASE_COLUMNS)) for row in reader]


def write_manifest(path: str | Path, partition: Partition) -> None:
    payload = {"n_cases": int(sum(len(s) for s in partition.ts_samples)),
               "samples": partition.manifest(),
               "mtm_labels": {tr.name: "-".join(lbl) for tr, lbl in
                              zip(partition.mtm_train, partition.mtm_labels)},
               "empty_classes": ["-".join(c) for c in partition.empty_classes]}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def read_partition(cases_path: str | Path, manifest_path: str | Path) -> Partition:
    """Rebuild a partition from a case file and its manifest."""
    full = CaseSet.from_cases("ALL", read_cases(cases_path))
    payload = json.loads(Path(manifest_path).read_text())
    sets = {}
    for name, ranges in payload["samples"].items():
        idx = np.concatenate([np.arange(a, b) for a, b in ranges]) if ranges else np.array([], int)
        sets[name] = full.take(name, idx)
    ts = [sets[n] for n in sorted((n for n in sets if n.startswith("S")), key=lambda s: int(s[1:]))]
    train_names = sorted((n for n in sets if n.endswith("L")), key=lambda s: int(s[1:-1]))
    labels = [tuple(payload["mtm_labels"][n].split("-")) for n in train_names]
    train = [sets[n] for n in train_names]
    test = [sets[n[:-1] + "T"] for n in train_names]
    empty = [tuple(c.split("-")) for c in payload.get("empty_classes", [])]
    return Partition(ts, train, test, labels, empty)


def rejection_summary(report: dict[str, int], cfg: FilterConfig) -> str:
    counts = Counter(report)
    return (f"short_maturity(<{cfg.min_maturity_days}d)={counts['short_maturity']} "
            f"low_quote(<{cfg.min_quote})={counts['low_quote']} "
            f"moneyness(outside {list(cfg.moneyness_band)})={counts['moneyness']} "
            f"arbitrage={counts['arbitrage']}")
