import numpy as np
import pandas as pd
import pytest

from src.core import persistence
from src.core.learner import build_model_spec, init_model


def test_metrics_columns_name_servers_from_one():
    assert persistence.metrics_columns(2) == [
        "round", "algorithm", "simulated_time_s", "accuracy", "loss", "cloud_round", "acc_es1", "acc_es2",
    ]


def test_csv_appender_writes_header_first(tmp_path):
    path = tmp_path / "rows.csv"
    appender = persistence.CsvAppender(path, ["round", "es"])
    assert path.read_text().strip() == "round,es"
    appender.append([])
    appender.append([{"round": 0, "es": 1}, {"round": 0, "es": 2}])
    appender.append([{"es": 3, "round": 1}])
    frame = pd.read_csv(path)
    assert frame.values.tolist() == [[0, 1], [0, 2], [1, 3]]


def test_json_is_canonical_and_hashed(tmp_path):
    a = persistence.write_json(tmp_path / "a.json", {"b": 1, "a": [1, 2]})
    b = persistence.write_json(tmp_path / "b.json", {"a": [1, 2], "b": 1})
    assert a == b
    assert persistence.read_json(tmp_path / "a.json") == {"a": [1, 2], "b": 1}


def test_checkpoint_round_trip(tmp_path):
    model = init_model(build_model_spec("mlp", 6, 3, hidden_units=5), seed=2)
    path = persistence.write_checkpoint(tmp_path, 4, 1, model)
    assert path.name == "round_00004_es2.bin"
    restored = persistence.read_checkpoint(path)
    assert restored.spec == model.spec
    np.testing.assert_array_equal(restored.vector, model.vector)
    meta = persistence.read_json(path.with_suffix(".json"))
    assert meta["sha256"] == model.checksum()


def test_tampered_checkpoint_is_rejected(tmp_path):
    model = init_model(build_model_spec("logistic", 6, 3), seed=2)
    path = persistence.write_checkpoint(tmp_path, 0, 0, model)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        persistence.read_checkpoint(path)


def test_run_discovery(make_config, tmp_path):
    from src.core.experiment import run_experiment

    run_experiment(make_config(training={"rounds": 2}), run_dir=tmp_path / "runs" / "one")
    run_experiment(make_config(training={"rounds": 2}, algorithm="hfl"), run_dir=tmp_path / "runs" / "two")
    found = persistence.list_run_dirs(tmp_path)
    assert found == [tmp_path / "runs" / "one", tmp_path / "runs" / "two"]
    run = persistence.load_run(found[1])
    assert run.algorithm == "hfl"
    assert run.topology["num_servers"] == 3
    assert len(run.timings) == 2 * 3
    assert persistence.list_collections(tmp_path) == []
    assert persistence.list_run_dirs(tmp_path / "missing") == []


def test_collections_are_found_by_their_tables(tmp_path):
    sweep_dir = tmp_path / "sweep"
    sweep_dir.mkdir()
    persistence.write_frame(sweep_dir / persistence.SWEEP_FILE, pd.DataFrame({"kappa": ["1"]}))
    assert persistence.list_collections(tmp_path) == [sweep_dir]
