"""Benchmark harness: config resolution, CSV ingest, runs and result files."""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import corruption as cor
from .algorithms import ALGORITHMS, get_algorithm
from .core import BiqualityDataset, WeightedLogisticRegression, validate_dataset
from .modelsel import MetricReport, evaluate, kfold_splits, make_biquality_cv

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "algorithm",
    "seed",
    "fold",
    "accuracy",
    "balanced_accuracy",
    "log_loss",
    "n_test",
    "wall_time",
    "config_hash",
    "error",
)

CORRUPTION_DEFAULTS = {
    "none": {},
    "label_noise": {"noise_ratio": 0.3, "noise_matrix": None},
    "instance_dependent_label_noise": {"noise_ratio": 0.3, "noise_matrix": None},
    "feature_dependent_label_noise": {"noise_ratio": 0.3, "budget_sd": 0.1},
    "weak_labels": {},
    "imbalance": {"target_distribution": None, "mode": "undersample"},
    "sampling_bias": {"shift": 1.0, "scale": 1.0, "size_fraction": 0.5},
}

# per-purpose offsets mixed into SeedSequence so streams never collide
_SPLIT, _CORRUPT, _FOLDS = 0, 1, 2


# ------------------------------------------------------------------ config


def _seed(seed, purpose):
    return np.random.SeedSequence([int(seed), purpose])


def resolve_config(raw, base_dir=None):
    """Fill defaults, validate and expand the algorithm grid.

    The returned dictionary is what gets hashed, so two configs that only
    differ in omitted defaults share a hash.
    """
    raw = copy.deepcopy(raw or {})
    data = raw.get("dataset") or {}
    if "path" not in data:
        raise ValueError("dataset.path is required")
    path = Path(data["path"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    has_fraction = data.get("trusted_fraction") is not None
    has_column = data.get("quality_column") is not None
    if has_fraction == has_column:
        raise ValueError("set exactly one of dataset.trusted_fraction and dataset.quality_column")
    if has_fraction and not 0 < float(data["trusted_fraction"]) < 1:
        raise ValueError("trusted_fraction must lie in (0, 1)")
    if "label_column" not in data:
        raise ValueError("dataset.label_column is required")

    corr = dict(raw.get("corruption") or {"type": "none"})
    kind = corr.pop("type", "none")
    if kind not in CORRUPTION_DEFAULTS:
        raise ValueError(
            "unknown corruption type %r; choose from %s" % (kind, ", ".join(CORRUPTION_DEFAULTS))
        )
    unknown = set(corr) - set(CORRUPTION_DEFAULTS[kind])
    if unknown:
        raise ValueError("unknown %s parameters: %s" % (kind, sorted(unknown)))
    if kind == "weak_labels" and has_column:
        raise ValueError("weak_labels builds its own trusted subset; use trusted_fraction")
    corr = {"type": kind, **CORRUPTION_DEFAULTS[kind], **corr}

    algorithms = raw.get("algorithms") or []
    if not algorithms:
        raise ValueError("at least one algorithm is required")
    variants = []
    for entry in algorithms:
        if isinstance(entry, str):
            entry = {"name": entry}
        name = entry["name"]
        get_algorithm(name)
        params = entry.get("params") or {}
        keys = sorted(params)
        grids = [v if isinstance(v, list) else [v] for v in (params[k] for k in keys)]
        for combo in itertools.product(*grids):
            p = dict(zip(keys, combo))
            label = name if not p else "%s[%s]" % (name, ",".join("%s=%s" % kv for kv in p.items()))
            variants.append({"label": label, "name": name, "params": p})
    labels = [v["label"] for v in variants]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate algorithm variants")

    seeds = [int(s) for s in raw.get("seeds", [0])]
    folds = int(raw.get("cv_folds", 3))
    if folds < 2:
        raise ValueError("cv_folds must be at least 2")
    return {
        "dataset": {
            "path": str(path),
            "label_column": data["label_column"],
            "quality_column": data.get("quality_column"),
            "trusted_fraction": float(data["trusted_fraction"]) if has_fraction else None,
            "sha256": _file_digest(path),
        },
        "corruption": corr,
        "algorithms": variants,
        "seeds": seeds,
        "cv_folds": folds,
    }


def load_config(path, seed_override=None):
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if seed_override is not None:
        raw["seeds"] = list(seed_override)
    return resolve_config(raw, base_dir=path.parent)


def config_hash(config):
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _file_digest(path):
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except FileNotFoundError:
        raise ValueError("dataset file not found: %s" % path) from None


# ------------------------------------------------------------------ ingest


def ingest_csv(path, label_column, quality_column=None):
    """Read a headed CSV into a :class:`BiqualityDataset`.

    Every column other than the label and quality columns must be numeric.
    Labels are factorized in order of first appearance; the mapping is kept
    in ``class_names``. Without a quality column every sample is trusted.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("%s is empty" % path)
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise ValueError("%s has no data rows" % path)
    for col in (label_column, quality_column):
        if col is not None and col not in header:
            raise ValueError("column %r not found in %s" % (col, path))
    label_at = header.index(label_column)
    quality_at = header.index(quality_column) if quality_column is not None else None
    feature_at = [i for i in range(len(header)) if i not in (label_at, quality_at)]

    X = np.empty((len(body), len(feature_at)))
    names, labels, quality = [], [], []
    lookup = {}
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError("row %d has %d cells, expected %d" % (r, len(row), len(header)))
        for j, i in enumerate(feature_at):
            try:
                X[r - 2, j] = float(row[i])
            except ValueError:
                raise ValueError(
                    "non-numeric feature cell %r in column %r, row %d" % (row[i], header[i], r)
                ) from None
        lab = row[label_at]
        if lab not in lookup:
            lookup[lab] = len(names)
            names.append(lab)
        labels.append(lookup[lab])
        if quality_at is not None:
            cell = row[quality_at].strip()
            if cell not in ("0", "1", "0.0", "1.0"):
                raise ValueError("sample_quality must be 0 or 1 (got %r at row %d)" % (cell, r))
            quality.append(int(float(cell)))
    if quality_at is None:
        quality = np.ones(len(body), dtype=int)
    ds = BiqualityDataset(X, np.array(labels), np.array(quality), n_classes=len(names), class_names=names)
    ds.feature_names = [header[i] for i in feature_at]
    return validate_dataset(ds)


def write_dataset_csv(ds, path, label_column="label"):
    names = getattr(ds, "feature_names", None) or ["x%d" % j for j in range(ds.features.shape[1])]
    classes = ds.class_names or [str(k) for k in range(ds.n_classes)]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow([*names, label_column, "sample_quality"])
        for x, y, q in zip(ds.features, ds.labels, ds.sample_quality):
            out.writerow([*(format(v, ".17g") for v in x), classes[y], int(q)])


# ----------------------------------------------------- dataset assembly


def _stratified_quality(y, n_classes, fraction, seed):
    rng = np.random.default_rng(_seed(seed, _SPLIT))
    counts = cor._stratified_counts(y, n_classes, int(round(fraction * len(y))))
    quality = np.zeros(len(y), dtype=int)
    for k in range(n_classes):
        if counts[k]:
            quality[rng.choice(np.flatnonzero(y == k), counts[k], replace=False)] = 1
    return quality


def build_biquality(clean, config, seed):
    """Apply the configured split and corruption for one seed.

    Label corruptions act on the untrusted labels; ``imbalance`` and
    ``sampling_bias`` subsample the untrusted rows.
    """
    data, corr = config["dataset"], config["corruption"]
    kind = corr["type"]
    K = clean.n_classes
    cseed = _seed(seed, _CORRUPT)
    X, y = clean.features, clean.labels

    if kind == "weak_labels":
        out = cor.make_weak_labels(X, y, data["trusted_fraction"], seed=cseed, n_classes=K)
        return _carry(out, clean)

    if data["trusted_fraction"] is not None:
        quality = _stratified_quality(y, K, data["trusted_fraction"], seed)
    else:
        quality = clean.sample_quality.copy()
    u = np.flatnonzero(quality == 0)
    labels = y.copy()
    keep = np.arange(len(y))

    if kind == "label_noise":
        M = corr["noise_matrix"]
        if M is None:
            M = cor.uniform_noise_matrix(K, corr["noise_ratio"])
        labels[u], _ = cor.make_label_noise(y[u], M, seed=cseed)
    elif kind == "instance_dependent_label_noise":
        model = WeightedLogisticRegression().fit(X, y, n_classes=K)
        p = cor.uncertainty_noise_probability(X[u], y[u], model, corr["noise_ratio"])
        labels[u], _ = cor.make_instance_dependent_label_noise(
            y[u], p, corr["noise_matrix"], seed=cseed, n_classes=K
        )
    elif kind == "feature_dependent_label_noise":
        labels[u], _ = cor.make_feature_dependent_label_noise(
            X[u], y[u], corr["noise_ratio"], seed=cseed, n_classes=K, budget_sd=corr["budget_sd"]
        )
    elif kind == "imbalance":
        target = corr["target_distribution"]
        if target is None:
            raise ValueError("imbalance needs target_distribution")
        picked = cor.make_imbalance(y[u], target, corr["mode"], seed=cseed)
        keep = np.concatenate([np.flatnonzero(quality == 1), u[picked]])
    elif kind == "sampling_bias":
        size = int(round(corr["size_fraction"] * len(u)))
        picked = cor.make_sampling_bias(X[u], corr["shift"], corr["scale"], size, seed=cseed)
        keep = np.concatenate([np.flatnonzero(quality == 1), np.sort(u[picked])])

    out = BiqualityDataset(X[keep], labels[keep], quality[keep], n_classes=K)
    return _carry(out, clean)


def _carry(ds, clean):
    ds.class_names = clean.class_names
    ds.feature_names = getattr(clean, "feature_names", None)
    return validate_dataset(ds)


# --------------------------------------------------------------- running


@dataclass
class ResultRow:
    algorithm: str
    seed: int
    fold: int
    metrics: MetricReport | None
    wall_time: float
    config_hash: str
    error: str = ""

    def as_dict(self):
        m = self.metrics.as_dict() if self.metrics else dict.fromkeys(
            ("accuracy", "balanced_accuracy", "log_loss", "n_test")
        )
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "fold": self.fold,
            **m,
            "wall_time": self.wall_time,
            "config_hash": self.config_hash,
            "error": self.error,
        }


@dataclass
class BenchmarkResult:
    rows: list
    summary: list = field(default_factory=list)


def _run_cell(variant, seed, fold, ds, split, digest):
    start = time.perf_counter()
    try:
        fit = ALGORITHMS[variant["name"]]
        model = fit(ds.subset(split.train_indices), **variant["params"])
        metrics = evaluate(model, ds, split.test_indices)
        error = ""
    except Exception as exc:  # recorded per row, the run goes on
        log.warning("%s seed=%d fold=%d failed: %s", variant["label"], seed, fold, exc)
        metrics, error = None, "%s: %s" % (type(exc).__name__, exc)
    return ResultRow(variant["label"], seed, fold, metrics, time.perf_counter() - start, digest, error)


def run_benchmark(config, jobs=1):
    """Run every (algorithm, seed, fold) cell of a resolved config.

    Rows come back ordered by algorithm (config order), seed, then fold,
    whatever the number of worker threads.
    """
    digest = config_hash(config)
    data = config["dataset"]
    clean = ingest_csv(data["path"], data["label_column"], data["quality_column"])

    cells = []
    for seed in config["seeds"]:
        ds = build_biquality(clean, config, seed)
        fold_seed = _seed(seed, _FOLDS)
        base = kfold_splits(ds.n_samples, config["cv_folds"], fold_seed, labels=ds.labels)
        splits = make_biquality_cv(base, ds.sample_quality)
        for variant in config["algorithms"]:
            for fold, split in enumerate(splits):
                cells.append((variant, seed, fold, ds, split, digest))

    if jobs and jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            rows = list(pool.map(lambda c: _run_cell(*c), cells))
    else:
        rows = [_run_cell(*c) for c in cells]
    order = {v["label"]: i for i, v in enumerate(config["algorithms"])}
    rows.sort(key=lambda r: (order[r.algorithm], r.seed, r.fold))
    return BenchmarkResult(rows, summarize(rows))


def summarize(rows):
    """Mean and sample standard deviation per algorithm over successful rows."""
    out = []
    for name in dict.fromkeys(r.algorithm for r in rows):
        ok = [r.metrics for r in rows if r.algorithm == name and r.metrics is not None]
        entry = {"algorithm": name, "n_rows": len(ok), "n_errors": sum(
            1 for r in rows if r.algorithm == name and r.metrics is None)}
        for key in ("accuracy", "balanced_accuracy", "log_loss"):
            vals = np.array([getattr(m, key) for m in ok])
            entry[key + "_mean"] = float(vals.mean()) if len(vals) else float("nan")
            entry[key + "_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(entry)
    return out


# ---------------------------------------------------------------- output


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".17g")
    return "" if value is None else str(value)


def _json_value(value):
    if value is None:
        return "null"
    if isinstance(value, float):
        if not np.isfinite(value):
            return "null"
        return format(value, ".17g")
    return json.dumps(value)


def emit_results(rows, fmt, path):
    """Write result rows as CSV or JSON with a fixed key order.

    Floats carry 17 significant digits so values round-trip exactly.
    """
    if not rows:
        raise ValueError("no rows to write")
    if len({r.config_hash for r in rows}) > 1:
        raise ValueError("mixed config_hash")
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    records = [r.as_dict() for r in rows]
    _write_records(records, RESULT_COLUMNS, fmt, path)


def _write_records(records, columns, fmt, path):
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise ValueError("cannot write %s: %s" % (path, exc)) from None
    with fh:
        if fmt == "csv":
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(columns)
            for rec in records:
                out.writerow([_fmt(rec[c]) for c in columns])
        else:
            items = [
                "{" + ", ".join("%s: %s" % (json.dumps(c), _json_value(rec[c])) for c in columns) + "}"
                for rec in records
            ]
            fh.write("[\n  " + ",\n  ".join(items) + "\n]\n")


def emit_summary(summary, fmt, path):
    columns = tuple(summary[0])
    _write_records(summary, columns, fmt, path)


def read_results(path, fmt):
    """Parse a result file written by :func:`emit_results` back into dicts."""
    with open(path, newline="") as fh:
        if fmt == "json":
            return json.load(fh)
        return list(csv.DictReader(fh))
