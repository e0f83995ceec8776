import json

import numpy as np
import pytest

from hint.io import (CONVERGENCE_COLUMNS, FILTER_COLUMNS, TRAIN_COLUMNS, ConfigError, load_config, read_csv,
                     read_samples, validate_config, write_csv, write_experiment_bundle, write_filter_metrics,
                     write_samples, write_train_metrics)
from hint.models import make_clv_experiment
from hint.posterior import PosteriorSampleSet


def test_train_metrics_layout(tmp_path):
    path = write_train_metrics(tmp_path / "train.csv", [1.5, 1.25, 1.0], lr=0.01, lr_decay=0.5, wall_times=[1, 2, 3])
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    header, rows = read_csv(path)
    assert tuple(header) == TRAIN_COLUMNS
    assert [r[0] for r in rows] == ["1", "2", "3"]
    assert float(rows[2][2]) == pytest.approx(0.0025)
    assert float(rows[1][1]) == 1.25


def test_filter_metrics_layout(tmp_path):
    metrics = [{"step": 1, "epochs": 10, "final_loss": 0.5, "cov_trace": 0.2, "wall_time": 1.0,
                "mean": np.array([1.0, 2.0])}]
    header, rows = read_csv(write_filter_metrics(tmp_path / "f.csv", metrics))
    assert tuple(header) == FILTER_COLUMNS + ("mean_0", "mean_1")
    assert rows[0][-1] == "2.0"
    with pytest.raises(ValueError):
        write_filter_metrics(tmp_path / "g.csv", [])


def test_floats_round_trip(tmp_path):
    v = 0.1 + 0.2
    _, rows = read_csv(write_csv(tmp_path / "x.csv", ("a",), [{"a": v}]))
    assert float(rows[0][0]) == v


def test_samples_with_sidecar(tmp_path, rng):
    X = rng.standard_normal((20, 3))
    s = PosteriorSampleSet(X, "case3", y=np.array([0.5]), checkpoint_id="abcd")
    path, side = write_samples(tmp_path / "s.csv", s, extra={"seed": 3})
    Y, meta = read_samples(path)
    np.testing.assert_array_equal(X, Y)
    assert meta["case"] == "case3" and meta["checkpoint_id"] == "abcd" and meta["seed"] == 3
    assert side.suffix == ".json"


def test_config_validation(tmp_path):
    cfg = validate_config({"problem": {"kind": "linear-gaussian"}})
    assert cfg["training"] == {} and cfg["problem"]["kind"] == "linear-gaussian"
    with pytest.raises(ConfigError):
        validate_config({"bogus": {}})
    with pytest.raises(ConfigError):
        validate_config({"training": 3})
    with pytest.raises(ConfigError):
        validate_config([1, 2])
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    p.write_text(json.dumps({"architecture": {"n_layers": 2}}))
    assert load_config(p)["architecture"] == {"n_layers": 2}


def test_experiment_bundle(tmp_path):
    exp = make_clv_experiment(np.random.default_rng(0))
    exp.seed = 0
    write_experiment_bundle(tmp_path, exp, "clv")
    meta = json.loads((tmp_path / "clv.json").read_text())
    assert meta["params"]["model"] == "clv" and meta["n_observations"] == 10
    header, rows = read_csv(tmp_path / "clv_truth.csv")
    assert header == ["t", "x0", "x1", "x2", "x3"] and len(rows) == 11
    header, rows = read_csv(tmp_path / "clv_observations.csv")
    assert header == ["t", "y0", "y1", "y2"] and len(rows) == 10
    assert float(rows[0][1]) == exp.observations[0, 0]


def test_convergence_columns():
    assert CONVERGENCE_COLUMNS == ("n", "replicates_ok", "replicates_failed", "probe_std")
