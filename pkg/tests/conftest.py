"""Shared fixtures: small synthetic configs, chain topologies and scalar-model helpers"""

import copy
from pathlib import Path

import numpy as np
import pytest

from src.config import settings
from src.config.experiment import TopologySpec, config_from_dict
from src.core.datagen import MNIST_FILES
from src.core.topology import build_topology

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SMALL_CONFIG = {
    "eval_interval": 2,
    "topology": {"num_servers": 3, "num_clients": 12, "overlap_sizes": [2, 2]},
    "dataset": {"source": "synthetic", "num_classes": 4, "dim": 8, "per_class": 60},
    "partition": {"classes_per_client": 2, "classes_per_cell": 3},
    "training": {"rounds": 6, "epochs": 2, "batch_size": 10, "learning_rate": 0.1},
    "seeds": {"base": 3},
}


def merge(base: dict, overrides: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def scalar(value: float) -> np.ndarray:
    return np.array([float(value)])


@pytest.fixture
def small_config_dict():
    return copy.deepcopy(SMALL_CONFIG)


@pytest.fixture
def make_config():
    """Build a validated config from SMALL_CONFIG plus nested overrides."""

    def factory(**overrides):
        return config_from_dict(merge(SMALL_CONFIG, overrides))

    return factory


@pytest.fixture
def make_topology():
    def factory(num_servers=3, num_clients=12, overlap_sizes=(2, 2), seed=0, **kwargs):
        spec = TopologySpec(
            num_servers=num_servers,
            num_clients=num_clients,
            overlap_sizes=list(overlap_sizes),
            **kwargs,
        )
        return build_topology(spec, rng_seed=seed)

    return factory


@pytest.fixture
def mnist_dir():
    """Directory holding the four MNIST IDX files; skips the test when absent."""
    data_dir = settings.DATA_DIR
    for split in MNIST_FILES.values():
        for stem in split:
            if not ((data_dir / stem).exists() or (data_dir / f"{stem}.gz").exists()):
                pytest.skip(f"MNIST file {stem} not found in {data_dir}")
    return data_dir
