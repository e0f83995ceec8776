"""CSV/JSON writers for sample sets, per-epoch and per-step metrics, and configs.

Metrics CSV layout (UTF-8, LF line endings, header row first):

* training: ``epoch, loss, lr, wall_time``
* filtering: ``step, epochs, final_loss, cov_trace, wall_time, mean_0 .. mean_{d-1}``
* convergence: ``n, replicates_ok, replicates_failed, probe_std``
"""
import csv
import json
from pathlib import Path

import numpy as np

TRAIN_COLUMNS = ("epoch", "loss", "lr", "wall_time")
FILTER_COLUMNS = ("step", "epochs", "final_loss", "cov_trace", "wall_time")
CONVERGENCE_COLUMNS = ("n", "replicates_ok", "replicates_failed", "probe_std")
CONFIG_SECTIONS = ("problem", "architecture", "training", "output")


class ConfigError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, columns, rows):
    """Write ``rows`` (mappings keyed by column) with a fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def read_csv(path):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


def write_train_metrics(path, losses, lr=None, lr_decay=1.0, wall_times=None):
    rows = []
    for e, loss in enumerate(losses):
        rows.append({"epoch": e + 1, "loss": loss,
                     "lr": None if lr is None else lr * lr_decay ** e,
                     "wall_time": None if wall_times is None else wall_times[e]})
    return write_csv(path, TRAIN_COLUMNS, rows)


def write_filter_metrics(path, metrics_list):
    if not metrics_list:
        raise ValueError("no filter steps to write")
    d = np.asarray(metrics_list[0]["mean"]).shape[0]
    mean_cols = tuple(f"mean_{i}" for i in range(d))
    rows = []
    for m in metrics_list:
        r = {c: m.get(c) for c in FILTER_COLUMNS}
        r.update({c: float(v) for c, v in zip(mean_cols, m["mean"])})
        rows.append(r)
    return write_csv(path, FILTER_COLUMNS + mean_cols, rows)


def write_samples(path, sample_set, extra=None):
    """Samples as CSV (one row per sample) plus ``<name>.json`` provenance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    X = sample_set.samples
    cols = [f"x{i}" for i in range(X.shape[1])]
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in X:
            w.writerow([repr(float(v)) for v in row])
    meta = {**sample_set.provenance(), **(extra or {})}
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, default=_json_default), encoding="utf-8")
    return path, side


def read_samples(path):
    header, rows = read_csv(path)
    X = np.array([[float(v) for v in r] for r in rows], dtype=np.float64).reshape(len(rows), len(header))
    side = Path(path).with_suffix(".json")
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return X, meta


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, default=_json_default), encoding="utf-8")
    return path


def load_config(path):
    """Read a JSON run config; every section is optional but unknown ones are rejected."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(cfg)


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    out = {}
    for s in CONFIG_SECTIONS:
        sec = cfg.get(s, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"config section {s!r} must be an object")
        out[s] = dict(sec)
    return out


def write_experiment_bundle(directory, exp, name="experiment"):
    """``<name>.json`` with parameters and seed, ``<name>_truth.csv`` and ``<name>_observations.csv``."""
    directory = Path(directory)
    d = exp.truth.shape[1]
    truth_rows = [{"t": t, **{f"x{i}": v for i, v in enumerate(x)}} for t, x in zip(exp.times, exp.truth)]
    write_csv(directory / f"{name}_truth.csv", ("t",) + tuple(f"x{i}" for i in range(d)), truth_rows)
    m = exp.observations.shape[1]
    obs_rows = [{"t": t, **{f"y{i}": v for i, v in enumerate(y)}} for t, y in zip(exp.times[1:], exp.observations)]
    write_csv(directory / f"{name}_observations.csv", ("t",) + tuple(f"y{i}" for i in range(m)), obs_rows)
    meta = {"params": exp.params, "seed": exp.seed, "init_mean": exp.init_mean, "init_std": exp.init_std,
            "n_observations": int(exp.observations.shape[0])}
    return write_json(directory / f"{name}.json", meta)
