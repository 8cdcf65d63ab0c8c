"""Long MNIST runs; enable with ``pytest -m slow`` once the IDX files are in place."""

import dataclasses

import numpy as np
import pandas as pd
import pytest

from src.config.experiment import apply_overrides, parse_config
from src.core.experiment import compare_algorithms, run_experiment, sweep_kappa
from tests.conftest import CONFIG_DIR

pytestmark = pytest.mark.slow

RANKING_TARGET = 0.80


@pytest.fixture
def desk_config(mnist_dir):
    cfg = parse_config(CONFIG_DIR / "mnist_desk.toml")
    return dataclasses.replace(cfg, dataset=dataclasses.replace(cfg.dataset, data_dir=str(mnist_dir)))


def test_relays_beat_isolated_cells_without_cloud(desk_config):
    fedoc = run_experiment(apply_overrides(desk_config, algorithm="fedoc_fastest", kappa="inf"), write=False)
    hfl = run_experiment(apply_overrides(desk_config, algorithm="hfl", kappa="inf"), write=False)
    assert fedoc.final_accuracy > hfl.final_accuracy + 0.05


def test_cloud_rounds_help_hierarchical_baseline(desk_config):
    isolated = run_experiment(apply_overrides(desk_config, algorithm="hfl", kappa="inf"), write=False)
    synced = run_experiment(apply_overrides(desk_config, algorithm="hfl", kappa="10"), write=False)
    assert synced.final_accuracy > isolated.final_accuracy
    assert synced.simulated_time > isolated.simulated_time


def test_fastest_selection_is_not_slower_than_fixed(desk_config):
    fastest = run_experiment(apply_overrides(desk_config, algorithm="fedoc_fastest"), write=False)
    fixed = run_experiment(apply_overrides(desk_config, algorithm="fedoc_fixed"), write=False)
    assert fastest.simulated_time <= fixed.simulated_time * 1.01


def test_kappa_sweep_has_an_interior_optimum(desk_config, tmp_path):
    training = dataclasses.replace(desk_config.training, rounds=2000)
    cfg = dataclasses.replace(desk_config, training=training)
    frame = sweep_kappa(cfg, tmp_path, kappas=[1, 10, 50, 250, np.inf], algorithm="hfl", repeats=1)
    times = frame["time_to_target_s"].astype(float).fillna(np.inf).to_numpy()
    best = int(np.argmin(times))
    assert np.isfinite(times[best])
    assert 0 < best < len(times) - 1
    cloud_free = frame.iloc[-1]
    assert cloud_free["status"] == "timeout" or times[-1] >= 2 * times[best]


def _time_to(curve: pd.DataFrame, target: float) -> float:
    hit = curve[curve["accuracy"] >= target]
    return float(hit["simulated_time_s"].iloc[0]) if len(hit) else np.inf


def test_algorithm_ranking_without_cloud(desk_config, tmp_path):
    cfg = apply_overrides(desk_config, kappa="inf")
    curves = compare_algorithms(cfg, tmp_path, repeats=3)
    wins = 0
    finals = {}
    for repeat, runs in curves.groupby("repeat"):
        times = {name: _time_to(curve, RANKING_TARGET) for name, curve in runs.groupby("algorithm")}
        others = [t for name, t in times.items() if name not in ("fedoc_fastest", "hfl")]
        fedoc = times["fedoc_fastest"]
        if np.isfinite(fedoc) and fedoc <= 0.8 * times["hfl"] and all(fedoc <= t for t in others):
            wins += 1
        for name, curve in runs.groupby("algorithm"):
            finals.setdefault(name, []).append(float(curve["accuracy"].dropna().iloc[-1]))
    assert wins >= 2

    mean = {name: float(np.mean(values)) for name, values in finals.items()}
    band = 0.01
    assert mean["fedoc_fastest"] >= mean["fedoc_fixed"] - band
    assert mean["fedoc_fixed"] >= max(mean["fleocd"], mean["fedmes"]) - band
    assert min(mean["fleocd"], mean["fedmes"]) >= mean["hfl"] - band
