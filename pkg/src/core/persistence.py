"""Run artifacts: CSV traces, JSON documents, model checkpoints.

All writers are deterministic (sorted JSON keys, fixed column order, pandas float
formatting), so a rerun with the same manifest yields byte-identical files.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.config.experiment import git_blob_hash
from src.core.learner import ModelParams, ModelSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.csv"
TIMINGS_FILE = "timings.csv"
SELECTIONS_FILE = "selections.csv"
TOPOLOGY_FILE = "topology.json"
PARTITION_FILE = "partition.json"
TRAJECTORY_FILE = "trajectories.npz"
SWEEP_FILE = "sweep.csv"
COMPARISON_FILE = "comparison.csv"
SUMMARY_FILE = "summary.csv"
BOUND_REPORT_FILE = "bound_report.json"
CHECKPOINT_DIR = "checkpoints"

TIMING_COLUMNS = ["round", "es", "t_cast", "t_comp", "t_upload", "t_relay", "t_edge", "cumulative_time"]
SELECTION_COLUMNS = ["round", "client", "es"]


def metrics_columns(num_servers: int) -> List[str]:
    base = ["round", "algorithm", "simulated_time_s", "accuracy", "loss", "cloud_round"]
    return base + [f"acc_es{l + 1}" for l in range(num_servers)]


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: PathLike, obj: Any) -> str:
    """Write a JSON document and return its git blob hash."""
    text = dumps_json(obj)
    Path(path).write_text(text, encoding="utf-8")
    return git_blob_hash(text.encode("utf-8"))


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


class CsvAppender:
    """Append rows to a CSV with a fixed header, one pandas write per batch.

    The header is written on creation so a run that stops at round 0 still leaves a
    well-formed file.
    """

    def __init__(self, path: PathLike, columns: Sequence[str]):
        self.path = Path(path)
        self.columns = list(columns)
        pd.DataFrame(columns=self.columns).to_csv(self.path, index=False)

    def append(self, rows: Sequence[Dict[str, Any]]) -> None:
        if not rows:
            return
        frame = pd.DataFrame(list(rows), columns=self.columns)
        frame.to_csv(self.path, mode="a", header=False, index=False)


def timing_rows(trace) -> List[Dict[str, Any]]:
    return [
        {
            "round": trace.round,
            "es": t.es + 1,
            "t_cast": t.t_cast,
            "t_comp": t.t_comp,
            "t_upload": t.t_upload,
            "t_relay": t.t_relay,
            "t_edge": t.t_edge,
            "cumulative_time": trace.simulated_time,
        }
        for t in trace.timings
    ]


def selection_rows(trace) -> List[Dict[str, Any]]:
    return [
        {"round": trace.round, "client": k, "es": l + 1}
        for k, l in sorted(trace.selections.choices.items())
    ]


def metrics_row(trace, num_servers: int) -> Dict[str, Any]:
    row = {
        "round": trace.round,
        "algorithm": trace.algorithm,
        "simulated_time_s": trace.simulated_time,
        "accuracy": trace.accuracy,
        "loss": trace.loss,
        "cloud_round": int(trace.cloud),
    }
    for l in range(num_servers):
        row[f"acc_es{l + 1}"] = trace.es_accuracy[l] if trace.es_accuracy else None
    return row


def write_checkpoint(run_dir: PathLike, round_index: int, server: int, model: ModelParams) -> Path:
    """Store one server model as little-endian float64 with a JSON sidecar."""
    folder = Path(run_dir) / CHECKPOINT_DIR
    folder.mkdir(parents=True, exist_ok=True)
    stem = folder / f"round_{round_index:05d}_es{server + 1}"
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(model.vector.astype("<f8").tobytes())
    write_json(stem.with_suffix(".json"), {
        "round": round_index,
        "es": server + 1,
        "model": model.spec.to_dict(),
        "num_params": model.num_params,
        "sha256": model.checksum(),
    })
    return bin_path


def read_checkpoint(bin_path: PathLike) -> ModelParams:
    bin_path = Path(bin_path)
    meta = read_json(bin_path.with_suffix(".json"))
    info = meta["model"]
    spec = ModelSpec(info["kind"], int(info["input_dim"]), int(info["num_classes"]), tuple(info["hidden"]))
    vector = np.frombuffer(bin_path.read_bytes(), dtype="<f8").astype(np.float64)
    model = ModelParams(spec, vector)
    if model.checksum() != meta["sha256"]:
        raise ValueError(f"checkpoint {bin_path} does not match its recorded checksum")
    return model


def write_trajectories(run_dir: PathLike, es_models: np.ndarray, client_models: np.ndarray) -> Path:
    """Full trajectory dump: ES models (R+1, L, P) and trained client models (R, K, P)."""
    path = Path(run_dir) / TRAJECTORY_FILE
    np.savez_compressed(path, es_models=es_models, client_models=client_models)
    return path


@dataclass
class RunArtifacts:
    run_dir: Path
    manifest: Dict[str, Any]
    metrics: pd.DataFrame
    timings: Optional[pd.DataFrame]
    selections: Optional[pd.DataFrame]
    topology: Optional[Dict[str, Any]]

    @property
    def algorithm(self) -> str:
        return self.manifest.get("algorithm", "")


def _optional_csv(path: Path) -> Optional[pd.DataFrame]:
    return pd.read_csv(path) if path.exists() else None


def load_run(run_dir: PathLike) -> RunArtifacts:
    """Read the artifacts of one run directory."""
    run_dir = Path(run_dir)
    topology_path = run_dir / TOPOLOGY_FILE
    return RunArtifacts(
        run_dir=run_dir,
        manifest=read_json(run_dir / MANIFEST_FILE),
        metrics=pd.read_csv(run_dir / METRICS_FILE),
        timings=_optional_csv(run_dir / TIMINGS_FILE),
        selections=_optional_csv(run_dir / SELECTIONS_FILE),
        topology=read_json(topology_path) if topology_path.exists() else None,
    )


def list_run_dirs(root: PathLike) -> List[Path]:
    """Every directory under ``root`` holding a manifest, sorted by path."""
    root = Path(root)
    if not root.exists():
        return []
    return sorted(p.parent for p in root.rglob(MANIFEST_FILE))


def list_collections(root: PathLike) -> List[Path]:
    """Directories holding a kappa sweep or an algorithm comparison."""
    root = Path(root)
    if not root.exists():
        return []
    found = {p.parent for name in (SWEEP_FILE, COMPARISON_FILE) for p in root.rglob(name)}
    return sorted(found)


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False)
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path
