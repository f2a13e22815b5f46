"""Command-line front end: run sweeps, build leaderboards, correlate scores.

Usage::

    jointpred run --config sweep.json --output results/ --workers 4
    jointpred report results/records.csv --baseline mlp --output results/
    jointpred correlate testbed.csv real.csv --regime low --output corr/
    jointpred dataset check iris.csv --label-column species
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

from .agents import KINDS, AgentConfigError, AgentSpec, agent_id
from .agents.base import int_seed, rng_for
from .evaluator import (
    TRAIN_DATA,
    EvalRecord,
    TestbedSweepConfig,
    aggregate,
    evaluate_nll_real,
    run_sweep,
    sort_key,
)
from .generative import Dataset

log = logging.getLogger("jointpred")

RECORDS_HEADER = "# jointpred-records v1"
LEADERBOARD_HEADER = "# jointpred-leaderboard v1"
CORRELATION_HEADER = "# jointpred-correlation v1"
RECORD_COLUMNS = ("agent", "beta", "train_size", "tau", "kl_or_nll", "stderr", "count",
                  "seconds", "seed", "failed", "dataset")
LEADERBOARD_COLUMNS = ("agent", "dataset", "tau", "kl_or_nll", "stderr", "normalized", "cells")


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


class UsageError(ValueError):
    pass


class DatasetError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSource:
    path: str
    label_column: str
    name: str
    train_ratio: float = 0.8
    normalize: bool = True
    seed: int = 0
    train_sizes: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RealSettings:
    taus: tuple[int, ...] = (1, 10)
    num_test_samples: int = 1000
    num_models: int = 1000
    num_hyperplanes: int = 10
    coverage: bool = False


@dataclass(frozen=True)
class RunConfig:
    mode: str
    sweep: TestbedSweepConfig
    agents: tuple[AgentSpec, ...]
    baseline: str
    output: str = "results"
    workers: int = 1
    datasets: tuple[DatasetSource, ...] = ()
    real: RealSettings = field(default_factory=RealSettings)


_TOP_KEYS = {"mode", "seed", "workers", "output", "baseline", "sweep", "agents", "datasets", "real"}
_SWEEP_INTS = ("num_problems", "num_test_samples", "num_models", "input_dim", "num_classes", "switch_tau")
_SWEEP_LISTS = ("temperatures", "train_sizes", "taus")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_keys(obj: dict, allowed, path: str, errors: list):
    for key in obj:
        if key not in allowed:
            errors.append(f"{path}{key}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _parse_sweep(raw, seed, errors) -> TestbedSweepConfig | None:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        errors.append("sweep: must be an object")
        return None
    names = {f.name for f in fields(TestbedSweepConfig)} - {"seed"}
    _check_keys(raw, names, "sweep.", errors)
    kwargs: dict[str, Any] = {"seed": seed}
    n_before = len(errors)
    for key in _SWEEP_INTS:
        if key in raw:
            v = raw[key]
            low = 2 if key == "num_classes" else 1
            if not _is_int(v) or v < low:
                errors.append(f"sweep.{key}: must be an integer >= {low}, got {v!r}")
            kwargs[key] = v
    if "num_hyperplanes" in raw:
        v = raw["num_hyperplanes"]
        if not _is_int(v) or v < 0:
            errors.append(f"sweep.num_hyperplanes: must be an integer >= 0, got {v!r}")
        kwargs["num_hyperplanes"] = v
    for key in _SWEEP_LISTS:
        if key in raw:
            v = raw[key]
            positive = _is_num if key == "temperatures" else _is_int
            if not isinstance(v, list) or not v or not all(positive(x) and x > 0 for x in v):
                kind = "positive numbers" if key == "temperatures" else "positive integers"
                errors.append(f"sweep.{key}: must be a nonempty list of {kind}, got {v!r}")
            else:
                kwargs[key] = tuple(v)
    if len(errors) > n_before:
        return None
    try:
        return TestbedSweepConfig(**{k: v for k, v in kwargs.items() if k in names | {"seed"}})
    except ValueError as exc:
        errors.append(f"sweep: {exc}")
        return None


def _expand_agent(raw, i, errors) -> list[AgentSpec]:
    path = f"agents[{i}]"
    if not isinstance(raw, dict):
        errors.append(f"{path}: must be an object")
        return []
    _check_keys(raw, {"kind", "hyperparameters", "grid", "seed", "name"}, f"{path}.", errors)
    kind = raw.get("kind")
    if kind is None:
        errors.append(f"{path}.kind: missing (supported kinds: {', '.join(KINDS)})")
        return []
    if kind not in KINDS:
        errors.append(f"{path}.kind: unknown agent kind {kind!r}; supported kinds: {', '.join(KINDS)}")
        return []
    base = raw.get("hyperparameters", {})
    grid = raw.get("grid", {})
    seed = raw.get("seed", 0)
    name = raw.get("name")
    ok = True
    if not isinstance(base, dict):
        errors.append(f"{path}.hyperparameters: must be an object")
        ok = False
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        errors.append(f"{path}.grid: must map names to nonempty lists")
        ok = False
    if not _is_int(seed) or seed < 0:
        errors.append(f"{path}.seed: must be a nonnegative integer")
        ok = False
    if name is not None and not isinstance(name, str):
        errors.append(f"{path}.name: must be a string")
        ok = False
    if not ok:
        return []
    keys = sorted(grid)
    specs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        hp = {**base, **point}
        label = name
        if name and point:
            label = name + "[" + ",".join(f"{k}={v}" for k, v in sorted(point.items())) + "]"
        try:
            specs.append(AgentSpec(kind, hp, seed, label))
        except AgentConfigError as exc:
            errors.append(f"{path}.hyperparameters: {exc}")
            return []
    return specs


def _parse_datasets(raw, base_dir, errors) -> tuple[DatasetSource, ...]:
    if not isinstance(raw, list) or not raw:
        errors.append("datasets: real mode needs a nonempty list of datasets")
        return ()
    out = []
    allowed = {"path", "label_column", "name", "train_ratio", "normalize", "seed", "train_sizes"}
    for i, d in enumerate(raw):
        path = f"datasets[{i}]"
        if not isinstance(d, dict):
            errors.append(f"{path}: must be an object")
            continue
        _check_keys(d, allowed, f"{path}.", errors)
        n_before = len(errors)
        for key in ("path", "label_column"):
            if not isinstance(d.get(key), str):
                errors.append(f"{path}.{key}: missing or not a string")
        file = d.get("path")
        if isinstance(file, str):
            file = file if os.path.isabs(file) else os.path.join(base_dir, file)
            if not os.path.isfile(file):
                errors.append(f"{path}.path: file not found: {file}")
        ratio = d.get("train_ratio", 0.8)
        if not _is_num(ratio) or not 0 < ratio < 1:
            errors.append(f"{path}.train_ratio: must lie in (0, 1)")
        if not isinstance(d.get("normalize", True), bool):
            errors.append(f"{path}.normalize: must be true or false")
        if not _is_int(d.get("seed", 0)) or d.get("seed", 0) < 0:
            errors.append(f"{path}.seed: must be a nonnegative integer")
        sizes = d.get("train_sizes")
        if sizes is not None and (not isinstance(sizes, list) or not sizes
                                  or not all(_is_int(s) and s >= 1 for s in sizes)):
            errors.append(f"{path}.train_sizes: must be a nonempty list of positive integers")
        if len(errors) > n_before:
            continue
        name = d.get("name") or os.path.splitext(os.path.basename(file))[0]
        out.append(DatasetSource(file, d["label_column"], str(name), float(ratio),
                                 d.get("normalize", True), d.get("seed", 0),
                                 tuple(sizes) if sizes else None))
    return tuple(out)


def _parse_real(raw, errors) -> RealSettings:
    if raw is None:
        return RealSettings()
    if not isinstance(raw, dict):
        errors.append("real: must be an object")
        return RealSettings()
    _check_keys(raw, {f.name for f in fields(RealSettings)}, "real.", errors)
    kwargs = {}
    if "taus" in raw:
        v = raw["taus"]
        if not isinstance(v, list) or not v or not all(_is_int(x) and x >= 1 for x in v):
            errors.append(f"real.taus: must be a nonempty list of positive integers, got {v!r}")
        else:
            kwargs["taus"] = tuple(v)
    for key, low in (("num_test_samples", 1), ("num_models", 1), ("num_hyperplanes", 0)):
        if key in raw:
            if not _is_int(raw[key]) or raw[key] < low:
                errors.append(f"real.{key}: must be an integer >= {low}, got {raw[key]!r}")
            else:
                kwargs[key] = raw[key]
    if "coverage" in raw:
        if not isinstance(raw["coverage"], bool):
            errors.append("real.coverage: must be true or false")
        else:
            kwargs["coverage"] = raw["coverage"]
    return RealSettings(**kwargs)


def config_from_dict(raw: dict, base_dir: str = ".") -> RunConfig:
    """Validate a decoded config; raise :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level: must be a JSON object"])
    _check_keys(raw, _TOP_KEYS, "", errors)
    mode = raw.get("mode", "testbed")
    if mode not in ("testbed", "real"):
        errors.append(f"mode: must be 'testbed' or 'real', got {mode!r}")
    seed = raw.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 2**64:
        errors.append(f"seed: must be an unsigned 64-bit integer, got {seed!r}")
        seed = 0
    workers = raw.get("workers", 1)
    if not _is_int(workers) or workers < 1:
        errors.append(f"workers: must be a positive integer, got {workers!r}")
    output = raw.get("output", "results")
    if not isinstance(output, str):
        errors.append("output: must be a string")
    sweep = _parse_sweep(raw.get("sweep"), seed, errors)
    agents_raw = raw.get("agents")
    specs: list[AgentSpec] = []
    if not isinstance(agents_raw, list) or not agents_raw:
        errors.append("agents: must be a nonempty list")
    else:
        for i, a in enumerate(agents_raw):
            specs.extend(_expand_agent(a, i, errors))
    ids = [s.id for s in specs]
    dupes = sorted({x for x in ids if ids.count(x) > 1})
    if dupes:
        errors.append(f"agents: duplicate agent ids {dupes}; give them distinct names")
    baseline = raw.get("baseline")
    if baseline is None and specs:
        baseline = "mlp" if "mlp" in ids else ids[0]
    elif specs and baseline not in ids:
        errors.append(f"baseline: {baseline!r} is not one of the agent ids {ids}")
    datasets: tuple[DatasetSource, ...] = ()
    if mode == "real":
        datasets = _parse_datasets(raw.get("datasets"), base_dir, errors)
    real = _parse_real(raw.get("real"), errors)
    if errors:
        raise ConfigError(errors)
    return RunConfig(mode, sweep, tuple(specs), baseline, output, workers, datasets, real)


def parse_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"{path}: file not found"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))


# -- datasets --------------------------------------------------------------------

def _label_index(values: list[str]) -> dict[str, int]:
    uniq = sorted(set(values))
    try:
        numeric = sorted(uniq, key=float)
    except ValueError:
        return {v: i for i, v in enumerate(uniq)}
    return {v: i for i, v in enumerate(numeric)}


def read_csv_table(path: str, label_column: str) -> tuple[np.ndarray, np.ndarray, list[str], list[str]]:
    """Features, integer labels, feature names and class names from a headed CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DatasetError(f"{path}: no column named {label_column!r} (columns: {', '.join(header)})")
    li = header.index(label_column)
    feature_names = [h for j, h in enumerate(header) if j != li]
    x, labels = [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        feats = []
        for j, cell in enumerate(row):
            if j == li:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(f"{path}: row {r}, column {header[j]!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DatasetError(f"{path}: row {r}, column {header[j]!r}: non-finite value {cell!r}")
            feats.append(v)
        x.append(feats)
        labels.append(row[li].strip())
    if not x:
        raise DatasetError(f"{path}: no data rows")
    index = _label_index(labels)
    y = np.array([index[v] for v in labels], dtype=np.int64)
    return np.array(x, dtype=np.float64).reshape(len(x), -1), y, feature_names, list(index)


def load_csv_dataset(path: str, label_column: str, normalize: bool = True,
                     train_ratio: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Shuffled train/test split of a CSV, standardised with train statistics."""
    if not 0 < train_ratio < 1:
        raise ValueError("train_ratio must lie in (0, 1)")
    x, y, _, _ = read_csv_table(path, label_column)
    n = len(y)
    n_train = int(round(train_ratio * n))
    if not 1 <= n_train < n:
        raise DatasetError(f"{path}: {n} rows cannot be split with ratio {train_ratio}")
    perm = rng_for(seed).permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    if normalize:
        mean = x[tr].mean(axis=0)
        sd = x[tr].std(axis=0)
        sd[sd == 0] = 1.0
        x = (x - mean) / sd
    return Dataset(x[tr], y[tr]), Dataset(x[te], y[te])


# -- record files ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(header_line: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(header_line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def records_to_csv(records: Sequence[EvalRecord]) -> str:
    return _write_csv(RECORDS_HEADER, RECORD_COLUMNS, (asdict(r) for r in sorted(records, key=sort_key)))


def _read_csv(text: str, header_line: str, what: str) -> list[dict[str, str]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != header_line:
        raise UsageError(f"not a {what} file (expected first line {header_line!r})")
    return list(csv.DictReader(lines[1:]))


def records_from_csv(text: str) -> list[EvalRecord]:
    out = []
    for row in _read_csv(text, RECORDS_HEADER, "records"):
        out.append(EvalRecord(
            agent=row["agent"],
            beta=float(row["beta"]) if row["beta"] else None,
            train_size=int(row["train_size"]) if row["train_size"] else None,
            tau=int(row["tau"]),
            kl_or_nll=float(row["kl_or_nll"]),
            stderr=float(row["stderr"]),
            count=int(row["count"]),
            seconds=float(row["seconds"]),
            seed=int(row["seed"]),
            failed=row["failed"] == "1",
            dataset=row.get("dataset", ""),
        ))
    return out


def read_records(path: str) -> list[EvalRecord]:
    with open(path) as fh:
        return records_from_csv(fh.read())


# -- leaderboard --------------------------------------------------------------------

@dataclass(frozen=True)
class LeaderboardRow:
    agent: str
    dataset: str
    tau: int
    kl_or_nll: float
    stderr: float
    normalized: float
    cells: int


def leaderboard(records: Sequence[EvalRecord], baseline: str) -> list[LeaderboardRow]:
    """Per-(agent, dataset, tau) aggregates normalised by the baseline agent's."""
    cells = [r for r in records if not r.is_aggregate]
    aggs = aggregate(cells)
    counts: dict[tuple, int] = {}
    for r in cells:
        if not r.failed:
            key = (r.agent, r.dataset, r.tau)
            counts[key] = counts.get(key, 0) + 1
    base = {(r.dataset, r.tau): r.kl_or_nll for r in aggs if r.agent == baseline}
    if not base:
        known = sorted({r.agent for r in records})
        raise UsageError(f"baseline agent {baseline!r} has no results; agents present: {known}")
    rows = []
    for r in aggs:
        ref = base.get((r.dataset, r.tau))
        norm = r.kl_or_nll / ref if ref not in (None, 0.0) else float("nan")
        rows.append(LeaderboardRow(r.agent, r.dataset, r.tau, r.kl_or_nll, r.stderr, norm,
                                   counts[(r.agent, r.dataset, r.tau)]))
    return sorted(rows, key=lambda x: (x.dataset, x.tau, x.agent))


def _json_safe(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def emit_report(records: Sequence[EvalRecord], baseline: str) -> tuple[str, str]:
    """Leaderboard as (CSV text, JSON text); both depend only on the records."""
    rows = leaderboard(records, baseline)
    text = _write_csv(LEADERBOARD_HEADER, LEADERBOARD_COLUMNS, (asdict(r) for r in rows))
    doc = {
        "format": "jointpred-leaderboard",
        "version": 1,
        "baseline": baseline,
        "rows": [{k: _json_safe(v) for k, v in asdict(r).items()} for r in rows],
    }
    return text, json.dumps(doc, indent=2, sort_keys=True) + "\n"


def leaderboard_from_csv(text: str) -> list[LeaderboardRow]:
    return [
        LeaderboardRow(row["agent"], row["dataset"], int(row["tau"]), float(row["kl_or_nll"]),
                       float(row["stderr"]), float(row["normalized"]), int(row["cells"]))
        for row in _read_csv(text, LEADERBOARD_HEADER, "leaderboard")
    ]


# -- correlation --------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationReport:
    family: str
    regime: str
    tau: int
    pairs: int
    r: float
    lower: float
    upper: float
    valid_resamples: int


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return float("nan")
    return float(np.clip((dx @ dy) / denom, -1.0, 1.0))


def bootstrap_pearson(x, y, n_bootstrap: int = 1000, level: float = 0.90, seed: int = 0):
    """Point estimate and percentile bounds; resamples with undefined r are skipped."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    rs = []
    for _ in range(n_bootstrap):
        idx = rng.integers(0, len(x), len(x))
        r = pearson(x[idx], y[idx])
        if not math.isnan(r):
            rs.append(r)
    tail = 100 * (1 - level) / 2
    if rs:
        lo, hi = np.percentile(rs, [tail, 100 - tail])
    else:
        lo = hi = float("nan")
    return pearson(x, y), float(lo), float(hi), len(rs)


def agent_family(agent: str) -> str:
    return agent.split("[", 1)[0]


def _regime_scores(records, regime: str, low_max: int) -> dict[tuple[str, int], float]:
    cells = [r for r in records if not r.is_aggregate and not r.failed and r.train_size is not None]
    if regime == "low":
        cells = [r for r in cells if r.train_size <= low_max]
    elif regime == "high":
        top: dict[str, int] = {}
        for r in cells:
            top[r.dataset] = max(top.get(r.dataset, 0), r.train_size)
        cells = [r for r in cells if r.train_size == top[r.dataset]]
    elif regime != "all":
        raise UsageError(f"regime must be low, high or all, not {regime!r}")
    groups: dict[tuple[str, int], list[float]] = {}
    for r in cells:
        groups.setdefault((r.agent, r.tau), []).append(r.kl_or_nll)
    return {k: float(np.mean(v)) for k, v in groups.items()}


def correlation_report(testbed: Sequence[EvalRecord], real: Sequence[EvalRecord],
                       n_bootstrap: int = 1000, seed: int = 0, regime: str = "all",
                       low_max: int = 10, level: float = 0.90) -> list[CorrelationReport]:
    """Pearson r per agent family between testbed KL and real-data NLL.

    Each hyperparameter setting (agent id) is one pair; scores are means over
    the cells that fall in the requested data regime.
    """
    a = _regime_scores(testbed, regime, low_max)
    b = _regime_scores(real, regime, low_max)
    missing = sorted(set(a) ^ set(b))
    if missing:
        names = ", ".join(f"{agent} (tau={tau})" for agent, tau in missing)
        raise UsageError(f"unmatched agent keys between testbed and real records: {names}")
    families: dict[tuple[str, int], list[str]] = {}
    for agent, tau in sorted(a):
        families.setdefault((agent_family(agent), tau), []).append(agent)
    out = []
    for (family, tau), agents in sorted(families.items()):
        if len(agents) < 3:
            raise UsageError(f"{family} at tau={tau} has {len(agents)} settings; need at least 3 pairs")
        x = [a[(g, tau)] for g in agents]
        y = [b[(g, tau)] for g in agents]
        r, lo, hi, valid = bootstrap_pearson(x, y, n_bootstrap, level, int_seed(seed, tau))
        out.append(CorrelationReport(family, regime, tau, len(agents), r, lo, hi, valid))
    return out


def correlation_to_csv(reports: Sequence[CorrelationReport]) -> str:
    cols = tuple(f.name for f in fields(CorrelationReport))
    return _write_csv(CORRELATION_HEADER, cols, (asdict(r) for r in reports))


# -- running ------------------------------------------------------------------------

def _real_task(args):
    spec, source, train, test, k, tau, real, seed, switch_tau = args
    try:
        return evaluate_nll_real(
            spec, train, test, tau, real.num_test_samples, real.num_models, real.num_hyperplanes,
            seed, num_classes=k, coverage=real.coverage, switch_tau=switch_tau,
            dataset_name=source.name,
        )
    except Exception as exc:
        log.error("%s on %s (T=%d, tau=%d) failed: %s", agent_id(spec), source.name, len(train), tau, exc)
        return EvalRecord(agent_id(spec), None, len(train), tau, float("nan"), float("nan"), 0,
                          0.0, seed, failed=True, dataset=source.name)


def run_real(config: RunConfig, progress=None) -> list[EvalRecord]:
    tasks = []
    for source in config.datasets:
        train, test = load_csv_dataset(source.path, source.label_column, source.normalize,
                                       source.train_ratio, source.seed)
        k = int(max(train.labels.max(), test.labels.max())) + 1
        subsets = [train]
        for n in source.train_sizes or ():
            if n > len(train):
                raise UsageError(f"{source.name}: train size {n} exceeds the {len(train)} training rows")
            if n != len(train):
                idx = rng_for(config.sweep.seed, TRAIN_DATA, n).permutation(len(train))[:n]
                subsets.append(train.subset(idx))
        if source.train_sizes and len(train) not in source.train_sizes:
            subsets = subsets[1:]
        for spec in config.agents:
            for sub in subsets:
                for tau in config.real.taus:
                    tasks.append((spec, source, sub, test, k, tau, config.real,
                                  config.sweep.seed, config.sweep.switch_tau))
    records = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = pool.map(_real_task, tasks)
            for r in results:
                records.append(r)
                if progress:
                    progress(r)
    else:
        for t in tasks:
            r = _real_task(t)
            records.append(r)
            if progress:
                progress(r)
    return sorted(records + aggregate(records), key=sort_key)


def _log_record(r: EvalRecord):
    where = f"beta={r.beta} T={r.train_size}" if r.beta is not None else f"{r.dataset} T={r.train_size}"
    status = "FAILED" if r.failed else f"{r.kl_or_nll:.4f} +- {r.stderr:.4f}"
    log.info("%s %s tau=%d %s (%.1fs)", r.agent, where, r.tau, status, r.seconds)


def execute(config: RunConfig, output: str) -> list[EvalRecord]:
    os.makedirs(output, exist_ok=True)
    if config.mode == "testbed":
        records = run_sweep(config.sweep, config.agents, config.workers, progress=_log_record)
    else:
        records = run_real(config, progress=_log_record)
    _write(os.path.join(output, "records.csv"), records_to_csv(records))
    csv_text, json_text = emit_report(records, config.baseline)
    _write(os.path.join(output, "leaderboard.csv"), csv_text)
    _write(os.path.join(output, "leaderboard.json"), json_text)
    return records


def _write(path: str, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


# -- argument parsing -----------------------------------------------------------------

def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jointpred", description="Evaluate joint predictive distributions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log one line per evaluated cell")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a sweep from a JSON config")
    run.add_argument("--config", required=True, metavar="PATH")
    run.add_argument("--output", metavar="DIR", help="overrides the config's output directory")
    run.add_argument("--workers", type=_positive, metavar="N")
    run.add_argument("--seed", type=_u64, metavar="U64", help="overrides the config's master seed")
    run.add_argument("--baseline", metavar="AGENT_ID")

    rep = sub.add_parser("report", help="records CSV -> leaderboard CSV and JSON")
    rep.add_argument("records", metavar="RECORDS_CSV")
    rep.add_argument("--baseline", required=True, metavar="AGENT_ID")
    rep.add_argument("--output", metavar="DIR", help="write files here instead of printing the CSV")

    cor = sub.add_parser("correlate", help="correlate testbed KL with real-data NLL per agent family")
    cor.add_argument("testbed", metavar="TESTBED_CSV")
    cor.add_argument("real", metavar="REAL_CSV")
    cor.add_argument("--regime", choices=("low", "high", "all"), default="all")
    cor.add_argument("--low-max", type=_positive, default=10, metavar="T",
                     help="largest training size counted as low data (default 10)")
    cor.add_argument("--n-bootstrap", type=_positive, default=1000)
    cor.add_argument("--seed", type=_u64, default=0, metavar="U64")
    cor.add_argument("--output", metavar="DIR")

    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    chk = ds_sub.add_parser("check", help="validate a CSV dataset and summarise it")
    chk.add_argument("path")
    chk.add_argument("--label-column", required=True)
    chk.add_argument("--train-ratio", type=float, default=0.8)
    chk.add_argument("--seed", type=_u64, default=0, metavar="U64")
    return p


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{args.config}: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None
    if isinstance(raw, dict):
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.workers is not None:
            raw["workers"] = args.workers
        if args.baseline is not None:
            raw["baseline"] = args.baseline
    config = config_from_dict(raw, os.path.dirname(os.path.abspath(args.config)))
    output = args.output or config.output
    records = execute(config, output)
    failed = sum(r.failed for r in records)
    print(f"wrote {len(records)} records to {output}" + (f" ({failed} failed)" if failed else ""))
    return 1 if failed else 0


def _cmd_report(args) -> int:
    records = read_records(args.records)
    csv_text, json_text = emit_report(records, args.baseline)
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        _write(os.path.join(args.output, "leaderboard.csv"), csv_text)
        _write(os.path.join(args.output, "leaderboard.json"), json_text)
    else:
        sys.stdout.write(csv_text)
    return 0


def _cmd_correlate(args) -> int:
    reports = correlation_report(read_records(args.testbed), read_records(args.real), args.n_bootstrap,
                                 args.seed, args.regime, args.low_max)
    text = correlation_to_csv(reports)
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        _write(os.path.join(args.output, "correlation.csv"), text)
        doc = [{k: _json_safe(v) for k, v in asdict(r).items()} for r in reports]
        _write(os.path.join(args.output, "correlation.json"), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for r in reports:
        print(f"{r.family:16s} tau={r.tau:<4d} {r.regime:4s} r={r.r:+.3f} ({r.lower:+.3f}, {r.upper:+.3f}) n={r.pairs}")
    return 0


def _cmd_dataset(args) -> int:
    x, y, names, classes = read_csv_table(args.path, args.label_column)
    train, test = load_csv_dataset(args.path, args.label_column, True, args.train_ratio, args.seed)
    print(f"{args.path}: {len(y)} rows, {len(names)} features, {len(classes)} classes")
    print(f"classes: {', '.join(f'{c}={np.sum(y == i)}' for i, c in enumerate(classes))}")
    print(f"split: {len(train)} train / {len(test)} test (ratio {args.train_ratio}, seed {args.seed})")
    constant = [n for n, s in zip(names, x.std(axis=0)) if s == 0]
    if constant:
        print(f"constant columns: {', '.join(constant)}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "report": _cmd_report, "correlate": _cmd_correlate,
                "dataset": _cmd_dataset}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
