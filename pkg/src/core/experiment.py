"""Experiment orchestration: single runs, kappa sweeps and algorithm comparisons.

A run is fully determined by its config: every random stream (topology, data,
partition, channel, training, init) is seeded from ``cfg.seeds``, and repeated
experiments derive their base seed from the experiment index.
"""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src import __version__
from src.config import settings
from src.config.experiment import (
    ExperimentConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
    derive_seed,
    format_kappa,
)
from src.core import persistence
from src.core.channel import ChannelParams, sample_compute_times, sample_gains
from src.core.datagen import Dataset, PartitionPlan, load_datasets, partition_noniid
from src.core.errors import TopologyError
from src.core.learner import (
    LrSchedule,
    ModelParams,
    build_model_spec,
    evaluate,
    init_model,
    local_sgd,
)
from src.core.protocol import ROUND_ENGINES, RoundContext, RoundTrace, initial_state
from src.core.topology import Topology, build_topology, topology_to_dict, validate_topology

logger = logging.getLogger(__name__)

COMPARED_ALGORITHMS = ("fedoc_fastest", "fedoc_fixed", "hfl", "fedmes", "fleocd")


@dataclass
class RunResult:
    config: ExperimentConfig
    traces: List[RoundTrace]
    final_models: List[ModelParams]
    topology: Topology
    plan: PartitionPlan
    seeds: Dict[str, int]
    stop_reason: str
    run_dir: Optional[Path] = None
    es_trajectory: Optional[np.ndarray] = None
    client_trajectory: Optional[np.ndarray] = None

    @property
    def evaluated(self) -> List[RoundTrace]:
        return [t for t in self.traces if t.accuracy is not None]

    @property
    def final_accuracy(self) -> Optional[float]:
        evaluated = self.evaluated
        return evaluated[-1].accuracy if evaluated else None

    @property
    def simulated_time(self) -> float:
        return self.traces[-1].simulated_time if self.traces else 0.0

    def time_to_target(self, target: float) -> Optional[float]:
        return time_to_target(self.traces, target)

    def metrics_frame(self) -> pd.DataFrame:
        L = self.topology.num_servers
        rows = [persistence.metrics_row(t, L) for t in self.evaluated]
        return pd.DataFrame(rows, columns=persistence.metrics_columns(L))


def time_to_target(traces: Sequence[RoundTrace], target: float) -> Optional[float]:
    """Simulated time of the first evaluated round at or above ``target``."""
    for trace in traces:
        if trace.accuracy is not None and trace.accuracy >= target:
            return trace.simulated_time
    return None


def _make_trainer(cfg: ExperimentConfig, train: Dataset, plan: PartitionPlan, spec, training_seed: int):
    t = cfg.training
    sched = LrSchedule(t.schedule, t.learning_rate, t.lr_decay, local_steps=t.epochs)
    shards = [(train.features[idx], train.labels[idx]) for idx in plan.client_indices]
    batch_size = None if t.full_batch else t.batch_size

    def trainer(k: int, vector: np.ndarray, r: int) -> np.ndarray:
        X, y = shards[k]
        trained = local_sgd(
            ModelParams(spec, vector), X, y, t.epochs, batch_size, sched,
            round_number=r + 1, seed=[training_seed, r, k], iteration_mode=t.iteration_mode,
        )
        return trained.vector

    return trainer


def _evaluate_servers(spec, models: Sequence[np.ndarray], test: Dataset) -> Tuple[float, float, Tuple[float, ...]]:
    """Mean per-server accuracy and loss; identical models are scored once."""
    scored: Dict[bytes, Tuple[float, float]] = {}
    accuracies, losses = [], []
    for vector in models:
        key = vector.tobytes()
        if key not in scored:
            scored[key] = evaluate(ModelParams(spec, vector), test.features, test.labels)
        acc, loss = scored[key]
        accuracies.append(acc)
        losses.append(loss)
    return float(np.mean(accuracies)), float(np.mean(losses)), tuple(accuracies)


def build_manifest(cfg: ExperimentConfig, seeds: Dict[str, int], model_spec, topology_hash: str,
                   stop_reason: Optional[str], rounds_completed: int, simulated_time: float) -> Dict[str, Any]:
    return {
        "version": __version__,
        "algorithm": cfg.algorithm,
        "kappa": format_kappa(cfg.kappa),
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seeds": seeds,
        "topology_hash": topology_hash,
        "model": model_spec.to_dict(),
        "num_params": model_spec.num_params,
        "stop_reason": stop_reason,
        "rounds_completed": rounds_completed,
        "simulated_time_s": simulated_time,
    }


def run_experiment(cfg: ExperimentConfig, run_dir: Optional[Path] = None, write: bool = True) -> RunResult:
    """Run R rounds of the configured algorithm.

    Test accuracy is evaluated every ``eval_interval`` rounds and after the last
    round. The run stops early once ``training.target_accuracy`` is reached or
    ``training.time_budget_s`` simulated seconds have passed.

    Args:
        cfg: Validated experiment config
        run_dir: Artifact directory; defaults to ``cfg.output_dir`` or OUTPUT_DIR/<algorithm>
        write: Whether to write artifacts at all

    Returns:
        RunResult with traces, final per-server models and the run context
    """
    seeds = cfg.seeds.resolve()
    train, test = load_datasets(cfg, seeds["data"])
    topo = build_topology(cfg.topology, seeds["topology"])
    violations = validate_topology(topo)
    if violations:
        raise TopologyError("; ".join(f"{v.invariant}: {v.detail}" for v in violations))
    plan = partition_noniid(
        train, topo,
        cfg.partition.classes_per_client, cfg.partition.classes_per_cell, seeds["partition"],
        samples_per_client=cfg.partition.samples_per_client,
        size_skew=cfg.partition.size_skew,
        oc_class_source=cfg.partition.oc_class_source,
    )
    spec = build_model_spec(cfg.model_kind, train.dim, cfg.num_classes, cfg.training.hidden_units)
    m0 = init_model(spec, seeds["init"])
    params = ChannelParams.from_spec(cfg.channel, spec.num_params)
    gains = sample_gains(topo, params, seeds["channel"])
    compute_times = sample_compute_times(topo.num_clients, params, derive_seed(seeds["channel"], "compute"))

    client_log: List[np.ndarray] = []
    ctx = RoundContext(
        topology=topo,
        sample_counts=plan.sample_counts.astype(np.float64),
        home_cells=plan.home_cells,
        trainer=_make_trainer(cfg, train, plan, spec, seeds["training"]),
        kappa=cfg.effective_kappa,
        epochs=cfg.training.epochs,
        gains=gains,
        compute_times=compute_times,
        channel=params,
        observer=(
            (lambda r, trained: client_log.append(np.stack([trained[k] for k in sorted(trained)])))
            if cfg.record_trajectories else None
        ),
    )
    engine = ROUND_ENGINES[cfg.algorithm]

    if write:
        run_dir = Path(run_dir or cfg.output_dir or settings.OUTPUT_DIR / cfg.algorithm)
        run_dir.mkdir(parents=True, exist_ok=True)
        topology_hash = persistence.write_json(run_dir / persistence.TOPOLOGY_FILE, topology_to_dict(topo))
        persistence.write_json(run_dir / persistence.PARTITION_FILE, plan.to_dict())
        persistence.write_json(
            run_dir / persistence.MANIFEST_FILE,
            build_manifest(cfg, seeds, spec, topology_hash, None, 0, 0.0),
        )
        metrics_csv = persistence.CsvAppender(
            run_dir / persistence.METRICS_FILE, persistence.metrics_columns(topo.num_servers)
        )
        timings_csv = persistence.CsvAppender(run_dir / persistence.TIMINGS_FILE, persistence.TIMING_COLUMNS)
        selections_csv = persistence.CsvAppender(run_dir / persistence.SELECTIONS_FILE, persistence.SELECTION_COLUMNS)

    logger.info(
        "Starting %s: L=%d K=%d kappa=%s R=%d (%d parameters)",
        cfg.algorithm, topo.num_servers, topo.num_clients, format_kappa(cfg.kappa),
        cfg.training.rounds, spec.num_params,
    )
    state = initial_state(topo, m0.vector, ctx.sample_counts)
    es_log = [np.stack(state.models)] if cfg.record_trajectories else []
    traces: List[RoundTrace] = []
    target = cfg.training.target_accuracy
    budget = cfg.training.time_budget_s
    stop_reason = "rounds"
    R = cfg.training.rounds
    for r in range(R):
        if cfg.channel.resample_per_round and r > 0:
            ctx.gains = sample_gains(topo, params, derive_seed(seeds["channel"], "round", r))
        state, trace = engine(state, ctx, r)
        out_of_time = budget is not None and trace.simulated_time >= budget
        if (r + 1) % cfg.eval_interval == 0 or r == R - 1 or out_of_time:
            accuracy, loss, per_es = _evaluate_servers(spec, state.models, test)
            trace = dataclasses.replace(trace, accuracy=accuracy, loss=loss, es_accuracy=per_es)
            logger.info(
                "Round %d | t=%.1f s | accuracy %.4f | loss %.4f%s",
                r, trace.simulated_time, accuracy, loss, " | cloud" if trace.cloud else "",
            )
        logger.debug("Round %d timings: %s", r, trace.timings)
        traces.append(trace)
        if cfg.record_trajectories:
            es_log.append(np.stack(state.models))
        if write:
            if trace.accuracy is not None:
                metrics_csv.append([persistence.metrics_row(trace, topo.num_servers)])
            timings_csv.append(persistence.timing_rows(trace))
            selections_csv.append(persistence.selection_rows(trace))
            if cfg.checkpoint_interval and ((r + 1) % cfg.checkpoint_interval == 0 or r == R - 1):
                for l, vector in enumerate(state.models):
                    persistence.write_checkpoint(run_dir, r, l, ModelParams(spec, vector))
        if target is not None and trace.accuracy is not None and trace.accuracy >= target:
            stop_reason = "target"
            logger.info("Target accuracy %.3f reached at %.1f simulated seconds", target, trace.simulated_time)
            break
        if out_of_time:
            stop_reason = "timeout"
            logger.warning("Time budget of %.1f simulated seconds exhausted at round %d", budget, r)
            break

    result = RunResult(
        config=cfg,
        traces=traces,
        final_models=[ModelParams(spec, v) for v in state.models],
        topology=topo,
        plan=plan,
        seeds=seeds,
        stop_reason=stop_reason,
        run_dir=run_dir if write else None,
        es_trajectory=np.stack(es_log) if cfg.record_trajectories else None,
        client_trajectory=(
            np.stack(client_log) if client_log
            else np.empty((0, topo.num_clients, spec.num_params)) if cfg.record_trajectories else None
        ),
    )
    if write:
        if cfg.record_trajectories:
            persistence.write_trajectories(run_dir, result.es_trajectory, result.client_trajectory)
        persistence.write_json(
            run_dir / persistence.MANIFEST_FILE,
            build_manifest(cfg, seeds, spec, topology_hash, stop_reason, len(traces), result.simulated_time),
        )
        logger.info("Run finished (%s); artifacts in %s", stop_reason, run_dir)
    return result


def repeat_config(cfg: ExperimentConfig, repeat: int, repeats: int) -> ExperimentConfig:
    """Config of the ``repeat``-th experiment; a single repeat keeps the base seed."""
    if repeats <= 1:
        return cfg
    seeds = dataclasses.replace(cfg.seeds, base=derive_seed(cfg.seeds.base, "repeat", repeat))
    return dataclasses.replace(cfg, seeds=seeds)


def _run_job(job: Tuple[Dict[str, Any], str]) -> Dict[str, Any]:
    """Worker entry point; takes a plain config mapping so it pickles cleanly."""
    cfg_dict, run_dir = job
    cfg = config_from_dict(cfg_dict)
    result = run_experiment(cfg, run_dir=Path(run_dir))
    target = cfg.training.target_accuracy
    reached = result.time_to_target(target) if target is not None else None
    return {
        "algorithm": cfg.algorithm,
        "kappa": format_kappa(cfg.kappa),
        "seed": cfg.seeds.base,
        "run_dir": run_dir,
        "time_to_target_s": reached,
        "status": "reached" if reached is not None else ("timeout" if result.stop_reason == "timeout" else "not_reached"),
        "final_accuracy": result.final_accuracy,
        "rounds_completed": len(result.traces),
        "simulated_time_s": result.simulated_time,
    }


def _run_jobs(jobs: List[Tuple[Dict[str, Any], str]], workers: int) -> List[Dict[str, Any]]:
    if workers <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def sweep_kappa(
    cfg: ExperimentConfig,
    out_dir: Path,
    kappas: Optional[Sequence[Any]] = None,
    algorithm: Optional[str] = None,
    repeats: Optional[int] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Time-to-target accuracy for each cloud interval.

    Every run stops at the sweep target or the simulated time budget; runs that
    hit the budget are reported with status "timeout".

    Returns:
        One row per (kappa, repeat), also written to ``sweep.csv``
    """
    sweep = cfg.sweep
    kappas = list(kappas if kappas is not None else sweep.kappas)
    algorithm = algorithm or sweep.algorithm
    repeats = repeats or sweep.repeats
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for kappa in kappas:
        for i in range(repeats):
            run_cfg = repeat_config(cfg, i, repeats)
            training = dataclasses.replace(
                run_cfg.training, target_accuracy=sweep.target_accuracy, time_budget_s=sweep.time_budget_s
            )
            run_cfg = dataclasses.replace(run_cfg, algorithm=algorithm, kappa=kappa, training=training)
            run_dir = out_dir / f"kappa_{format_kappa(kappa)}" / f"repeat_{i}"
            run_cfg = dataclasses.replace(run_cfg, output_dir=str(run_dir))
            jobs.append((config_to_dict(run_cfg), str(run_dir)))
    logger.info("Sweeping kappa over %s for %s (%d runs)", [format_kappa(k) for k in kappas], algorithm, len(jobs))
    rows = _run_jobs(jobs, workers or sweep.workers)
    for i, row in enumerate(rows):
        row["repeat"] = i % repeats
    frame = pd.DataFrame(rows, columns=[
        "algorithm", "kappa", "repeat", "seed", "time_to_target_s", "status",
        "final_accuracy", "rounds_completed", "simulated_time_s", "run_dir",
    ])
    persistence.write_frame(out_dir / persistence.SWEEP_FILE, frame)
    return frame


def compare_algorithms(
    cfg: ExperimentConfig,
    out_dir: Path,
    algorithms: Sequence[str] = COMPARED_ALGORITHMS,
    repeats: Optional[int] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Run every algorithm on shared seeds and join their accuracy-vs-time curves.

    Returns:
        Long-format frame (algorithm, repeat, round, simulated_time_s, accuracy, loss),
        also written to ``comparison.csv``; per-run summaries go to ``summary.csv``
    """
    repeats = repeats or cfg.sweep.repeats
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i in range(repeats):
        for algorithm in algorithms:
            run_dir = out_dir / algorithm / f"repeat_{i}"
            run_cfg = dataclasses.replace(repeat_config(cfg, i, repeats), algorithm=algorithm, output_dir=str(run_dir))
            jobs.append((config_to_dict(run_cfg), str(run_dir)))
    logger.info("Comparing %s over %d repeat(s)", ", ".join(algorithms), repeats)
    summaries = _run_jobs(jobs, workers or cfg.sweep.workers)

    curves = []
    for i, summary in enumerate(summaries):
        summary["repeat"] = i // len(algorithms)
        metrics = pd.read_csv(Path(summary["run_dir"]) / persistence.METRICS_FILE)
        metrics = metrics[["round", "simulated_time_s", "accuracy", "loss"]].copy()
        metrics.insert(0, "repeat", summary["repeat"])
        metrics.insert(0, "algorithm", summary["algorithm"])
        curves.append(metrics)
    frame = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame(
        columns=["algorithm", "repeat", "round", "simulated_time_s", "accuracy", "loss"]
    )
    persistence.write_frame(out_dir / persistence.COMPARISON_FILE, frame)
    persistence.write_frame(out_dir / persistence.SUMMARY_FILE, pd.DataFrame(summaries, columns=[
        "algorithm", "repeat", "seed", "time_to_target_s", "status",
        "final_accuracy", "rounds_completed", "simulated_time_s", "run_dir",
    ]))
    return frame
