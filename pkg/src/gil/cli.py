"""Experiment runner.

    gil run CONFIG [--out-dir DIR] [--seed-override 0,1,2]
    gil correlate DIR

The config is an INI file: ``[dataset]``, ``[mask]``, ``[output]`` and one
``[run NAME]`` section per training setup (see README for every key).
Exit codes: 0 ok, 1 some run failed, 2 bad config or inputs (nothing written).
"""

import argparse
import configparser
import csv
import dataclasses
import io
import json
import os
import platform
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .datasets import (
    ConfigError,
    DataLoadError,
    SyntheticSpec,
    load_csv,
    load_mnist_idx,
    split,
    synthetic_mnar,
    synthetic_sequences,
)
from .metrics import UndefinedMetric, pearson
from .missingness import MaskSpec, apply_mask, missing_rate
from .models import save_checkpoint
from .rl import TrainingDiverged
from .training import InputWeightedModel, TrainConfig, train

SCHEMA_VERSION = 1
THREADS_ENV = "GIL_THREADS"

METRICS_COLUMNS = ["run", "variant", "imputer", "seed", "iteration", "train_loss", "loss",
                   "accuracy", "auc", "average_precision", "wall_clock"]
SUMMARY_COLUMNS = ["row_type", "run", "variant", "imputer", "seed", "n_seeds", "missing_rate",
                   "accuracy", "accuracy_std", "auc", "auc_std", "average_precision",
                   "average_precision_std", "imputation_mse", "imputation_mse_std",
                   "best_iteration", "wall_clock", "status"]
AGGREGATED = ["accuracy", "auc", "average_precision", "imputation_mse"]

DATASET_KEYS = {
    "csv": {"path", "label_column", "missing_tokens", "standardize"},
    "mnist_idx": {"images", "labels", "limit"},
    "synthetic_mnar": {"n", "d", "mask_signal", "value_signal", "offset", "seed"},
    "synthetic_sequences": {"n", "d", "min_len", "max_len", "mask_signal", "value_signal",
                            "offset", "seed"},
}
SPLIT_KEYS = {"kind", "test_fraction", "split_seed", "train_size", "test_size", "placeholder"}
MASK_KEYS = {"mechanism", "rate", "seed", "observable_rows", "steepness", "q"}
OUTPUT_KEYS = {"dir", "checkpoints"}


# ------------------------------------------------------------------ config


def _line_of(text, section, key=None):
    """1-based line of ``[section]`` (or of ``key`` inside it) for diagnostics."""
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return no
        elif current == section and key is not None:
            name = line.split("=", 1)[0].split(":", 1)[0].strip()
            if name == key:
                return no
    return None


class ConfigProblem(ConfigError):
    def __init__(self, msg, text=None, section=None, key=None):
        line = _line_of(text, section, key) if text and section else None
        super().__init__(f"line {line}: {msg}" if line else msg)


def _parse_value(raw, default, name):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(p) for p in parts)
    if default is None:  # optional string
        return None if raw.lower() in ("", "none") else raw
    return raw


def _seed_list(raw):
    seeds = [int(s) for s in raw.replace(",", " ").split()]
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


def load_experiment(path, seed_override=None, out_dir=None):
    """Parse and validate a config; raises ConfigError with a line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    base = path.parent

    if not parser.has_section("dataset"):
        raise ConfigError("missing [dataset] section")
    ds_sec = dict(parser["dataset"])
    kind = ds_sec.get("kind")
    if kind not in DATASET_KEYS:
        raise ConfigProblem(f"unknown dataset kind {kind!r}", text, "dataset", "kind")
    for key in ds_sec:
        if key not in DATASET_KEYS[kind] | SPLIT_KEYS:
            raise ConfigProblem(f"unknown key {key!r} for dataset kind {kind}", text, "dataset", key)

    mask_sec = dict(parser["mask"]) if parser.has_section("mask") else {}
    for key in mask_sec:
        if key not in MASK_KEYS:
            raise ConfigProblem(f"unknown key {key!r} in [mask]", text, "mask", key)
    out_sec = dict(parser["output"]) if parser.has_section("output") else {}
    for key in out_sec:
        if key not in OUTPUT_KEYS:
            raise ConfigProblem(f"unknown key {key!r} in [output]", text, "output", key)

    fields = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    runs = []
    for section in parser.sections():
        if section in ("dataset", "mask", "output"):
            continue
        if not section.startswith("run "):
            raise ConfigProblem(f"unknown section [{section}]", text, section)
        name = section[4:].strip()
        if not name:
            raise ConfigProblem("run section needs a name", text, section)
        values = dict(parser[section])
        if "variant" not in values:
            raise ConfigProblem(f"run {name!r} does not name a variant", text, section)
        try:
            seeds = _seed_list(values.pop("seeds", "0"))
        except ValueError as exc:
            raise ConfigProblem(f"seeds: {exc}", text, section, "seeds") from None
        kwargs = {}
        for key, raw in values.items():
            if key not in fields or key == "seed":
                raise ConfigProblem(f"unknown run key {key!r}", text, section, key)
            try:
                kwargs[key] = _parse_value(raw, fields[key], key)
            except ValueError as exc:
                raise ConfigProblem(str(exc), text, section, key) from None
        try:
            cfg = TrainConfig(**kwargs).validate()
        except ConfigError as exc:
            raise ConfigProblem(str(exc), text, section) from None
        if seed_override:
            seeds = list(seed_override)
        runs.append({"name": name, "config": cfg, "seeds": seeds})
    if not runs:
        raise ConfigError("config defines no [run NAME] sections")
    if len({r["name"] for r in runs}) != len(runs):
        raise ConfigError("duplicate run names")

    try:
        mask = MaskSpec(
            mask_sec.get("mechanism", "none"),
            float(mask_sec.get("rate", 0.0)),
            int(mask_sec.get("seed", 0)),
            {k: float(mask_sec[k]) for k in ("observable_rows", "steepness", "q") if k in mask_sec},
        )
    except ValueError as exc:
        raise ConfigProblem(str(exc), text, "mask") from None

    out = Path(out_dir) if out_dir else base / out_sec.get("dir", "results")
    checkpoints = out_sec.get("checkpoints", "false").strip().lower() in ("1", "true", "yes", "on")
    return {
        "path": path,
        "text": text,
        "base": base,
        "dataset": ds_sec,
        "mask": mask,
        "runs": runs,
        "out_dir": out,
        "checkpoints": checkpoints,
        "echo": {s: dict(parser[s]) for s in parser.sections()},
    }


# ----------------------------------------------------------------- dataset


def load_dataset(spec, base):
    kind = spec["kind"]
    placeholder = float(spec.get("placeholder", 0.0))
    try:
        if kind == "csv":
            tokens = tuple(t.strip() for t in spec.get("missing_tokens", ",NaN,NA").split(","))
            ds = load_csv(base / spec["path"], spec["label_column"], tokens, placeholder,
                          spec.get("standardize", "false").lower() in ("1", "true", "yes"))
        elif kind == "mnist_idx":
            limit = int(spec["limit"]) if "limit" in spec else None
            ds = load_mnist_idx(base / spec["images"], base / spec["labels"], limit, placeholder)
        elif kind == "synthetic_mnar":
            kw = {k: (int if k in ("n", "d", "seed") else float)(v)
                  for k, v in spec.items() if k in DATASET_KEYS[kind]}
            ds = synthetic_mnar(SyntheticSpec(**kw))
            ds = dataclasses.replace(ds, placeholder=placeholder)
        else:
            kw = {k: (int if k in ("n", "d", "seed", "min_len", "max_len") else float)(v)
                  for k, v in spec.items() if k in DATASET_KEYS[kind]}
            ds = synthetic_sequences(**kw)
            ds = dataclasses.replace(ds, placeholder=placeholder)
    except KeyError as exc:
        raise ConfigError(f"dataset kind {kind} needs key {exc.args[0]!r}") from None
    except (OSError, ValueError) as exc:
        if isinstance(exc, DataLoadError):
            raise
        raise DataLoadError(str(exc)) from None
    return ds


def split_dataset(ds, spec):
    if "train_size" in spec:
        n_train = int(spec["train_size"])
        n_test = int(spec.get("test_size", len(ds) - n_train))
        if n_train < 1 or n_test < 1 or n_train + n_test > len(ds):
            raise ConfigError(f"train_size/test_size do not fit {len(ds)} samples")
        return ds.subset(np.arange(n_train)), ds.subset(np.arange(n_train, n_train + n_test))
    return split(ds, float(spec.get("test_fraction", 0.25)), int(spec.get("split_seed", 0)))


# ------------------------------------------------------------------ running


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_one(exp, base_ds, run, seed):
    cfg = dataclasses.replace(run["config"], seed=seed)
    mask = dataclasses.replace(exp["mask"], seed=exp["mask"].seed + seed)
    masked = apply_mask(base_ds, mask)
    train_ds, eval_ds = split_dataset(masked, exp["dataset"])
    result = {"run": run["name"], "variant": cfg.variant,
              "imputer": cfg.imputer if cfg.variant == "baseline" else "",
              "seed": seed, "mask_seed": mask.seed, "missing_rate": missing_rate(train_ds),
              "status": "ok", "error": None, "report": None, "model": None}
    try:
        model, _, report = train(train_ds, eval_ds, cfg)
        result["report"], result["model"] = report, model
    except TrainingDiverged as exc:
        result["status"], result["error"] = "failed", str(exc)
        result["report"] = getattr(exc, "report", None)
    except (ValueError, FloatingPointError) as exc:
        result["status"], result["error"] = "failed", f"{type(exc).__name__}: {exc}"
    return result


def _metrics_rows(res):
    rep = res["report"]
    if rep is None:
        return []
    rows = []
    for (it, ev), elapsed in zip(rep.evals, rep.eval_times):
        rows.append([res["run"], res["variant"], res["imputer"], res["seed"], it,
                     rep.train_loss[it - 1], ev.loss, ev.accuracy, ev.auc,
                     ev.average_precision, round(elapsed, 3)])
    return rows


def _summary_rows(results, runs):
    rows = []
    for res in results:
        rep = res["report"]
        final = rep.final if rep is not None and res["status"] == "ok" else None
        row = dict.fromkeys(SUMMARY_COLUMNS)
        row.update(row_type="run", run=res["run"], variant=res["variant"], imputer=res["imputer"],
                   seed=res["seed"], n_seeds=1, missing_rate=res["missing_rate"],
                   status=res["status"])
        if final is not None:
            row.update(accuracy=final.accuracy, auc=final.auc,
                       average_precision=final.average_precision,
                       imputation_mse=rep.imputation_mse, best_iteration=rep.best_iteration,
                       wall_clock=round(rep.wall_clock, 3))
        rows.append(row)
    for run in runs:
        mine = [r for r in rows if r["run"] == run["name"] and r["status"] == "ok"]
        agg = dict.fromkeys(SUMMARY_COLUMNS)
        agg.update(row_type="aggregate", run=run["name"], variant=run["config"].variant,
                   imputer=run["config"].imputer if run["config"].variant == "baseline" else "",
                   n_seeds=len(mine),
                   status="ok" if len(mine) == len(run["seeds"]) else "partial")
        if mine:
            agg["missing_rate"] = float(np.mean([r["missing_rate"] for r in mine]))
        for col in AGGREGATED:
            vals = [r[col] for r in mine if r[col] is not None]
            if vals:
                agg[col] = float(np.mean(vals))
                # spread is only meaningful over two or more seeds
                if len(vals) >= 2:
                    agg[col + "_std"] = float(np.std(vals, ddof=1))
        rows.append(agg)
    return [[row[c] for c in SUMMARY_COLUMNS] for row in rows]


def _csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write_atomic(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _thread_count():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def run_experiment(exp):
    """Run every (run, seed) pair; returns the exit code."""
    base_ds = load_dataset(exp["dataset"], exp["base"])
    # surface split and compatibility problems before anything is written
    split_dataset(base_ds, exp["dataset"])
    for run in exp["runs"]:
        cfg = run["config"]
        if cfg.variant == "gil_d" and base_ds.num_classes != 2:
            raise ConfigError(f"run {run['name']!r}: gil_d needs binary labels")
        if cfg.imputer == "carry_forward" and cfg.variant == "baseline" and not base_ds.is_sequence:
            raise ConfigError(f"run {run['name']!r}: carry-forward imputation needs sequence data")
    jobs = [(run, seed) for run in exp["runs"] for seed in run["seeds"]]
    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda job: _run_one(exp, base_ds, *job), jobs))
    else:
        results = [_run_one(exp, base_ds, *job) for job in jobs]

    out = exp["out_dir"]
    metrics = [row for res in results for row in _metrics_rows(res)]
    _write_atomic(out / "metrics.csv", _csv_text(METRICS_COLUMNS, metrics))
    _write_atomic(out / "summary.csv", _csv_text(SUMMARY_COLUMNS, _summary_rows(results, exp["runs"])))
    if exp["checkpoints"]:
        for res in results:
            if res["model"] is not None:
                _save_model(res["model"], out / "checkpoints" / f"{res['run']}_seed{res['seed']}")
    report = {
        "schema_version": SCHEMA_VERSION,
        "config_path": str(exp["path"]),
        "config": exp["echo"],
        "config_text": exp["text"],
        "mask": dataclasses.asdict(exp["mask"]),
        "runs": [
            {
                "run": res["run"], "variant": res["variant"], "imputer": res["imputer"],
                "seed": res["seed"], "mask_seed": res["mask_seed"],
                "train_config": dataclasses.asdict(dataclasses.replace(
                    next(r["config"] for r in exp["runs"] if r["name"] == res["run"]),
                    seed=res["seed"])),
                "missing_rate": res["missing_rate"], "status": res["status"], "error": res["error"],
                "final": dataclasses.asdict(res["report"].final)
                if res["report"] is not None and res["report"].final is not None else None,
                "best_iteration": res["report"].best_iteration if res["report"] else None,
                "imputation_mse": res["report"].imputation_mse if res["report"] else None,
            }
            for res in results
        ],
        "versions": {"gil": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    _write_atomic(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    failed = [r for r in results if r["status"] != "ok"]
    for r in failed:
        print(f"run {r['run']} seed {r['seed']} failed: {r['error']}", file=sys.stderr)
    return 1 if failed else 0


def _save_model(model, stem):
    stem.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(model, InputWeightedModel):
        save_checkpoint(model.model, stem.with_suffix(".model.ckpt"))
        save_checkpoint(model.weighting, stem.with_suffix(".weighting.ckpt"))
    else:
        save_checkpoint(model, stem.with_suffix(".ckpt"))


# -------------------------------------------------------------- correlate


def correlation_points(results_dir):
    """(imputation_mse, accuracy, source) for every successful baseline run row."""
    points = []
    for path in sorted(Path(results_dir).rglob("summary.csv")):
        with path.open(newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                if (row["row_type"] == "run" and row["variant"] == "baseline"
                        and row["status"] == "ok" and row["imputation_mse"] and row["accuracy"]):
                    points.append((float(row["imputation_mse"]), float(row["accuracy"]),
                                   f"{row['run']}:{row['seed']}"))
    return points


def correlate(results_dir):
    points = correlation_points(results_dir)
    if len(points) < 3:
        raise UndefinedMetric(f"need at least 3 baseline runs with imputation MSE, found {len(points)}")
    xs, ys = [p[0] for p in points], [p[1] for p in points]
    r, p = pearson(xs, ys)
    out = Path(results_dir)
    _write_atomic(out / "correlation.csv",
                  _csv_text(["x", "y", "n", "r", "p_value"],
                            [["imputation_mse", "accuracy", len(points), r, p]]))
    _write_atomic(out / "correlation_points.csv",
                  _csv_text(["source", "imputation_mse", "accuracy"],
                            [[s, x, y] for x, y, s in points]))
    return r, p, len(points)


# -------------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(prog="gil", description="Train on data with missing values.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run every experiment in a config file")
    run_p.add_argument("config")
    run_p.add_argument("--out-dir", help="override [output] dir")
    run_p.add_argument("--seed-override", help="comma-separated seeds replacing every run's seeds")
    cor_p = sub.add_parser("correlate", help="imputation MSE vs accuracy over baseline runs")
    cor_p.add_argument("results_dir")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "correlate":
        try:
            r, p, n = correlate(args.results_dir)
        except UndefinedMetric as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"n={n} r={r:.6f} p={p:.6g}")
        return 0
    try:
        seeds = _seed_list(args.seed_override) if args.seed_override else None
        exp = load_experiment(args.config, seeds, args.out_dir)
        return run_experiment(exp)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
