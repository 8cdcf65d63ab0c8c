"""Experiment configuration: nested dataclasses, TOML parsing and validation.

Every field default mirrors the simulation parameters in ``settings``. A config file
only needs to name what differs from those defaults. Unknown keys are rejected and
every problem is reported with its dotted field path.
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import toml

from src.config import settings
from src.core.errors import ConfigError

ALGORITHMS = ("fedoc_fastest", "fedoc_fixed", "hfl", "fedmes", "fleocd", "fedavg")
SCHEDULES = ("exponential", "theoretical", "constant")
MODELS = ("auto", "logistic", "mlp")
DATASETS = ("synthetic", "mnist")
ROC_POLICIES = ("random", "central")
OC_CLASS_SOURCES = ("home", "union")
LOG_BASES = ("log2", "ln")
RELAY_GAIN_MODES = ("shared", "split")
SEED_STREAMS = ("topology", "data", "partition", "channel", "training", "init")

# Fields holding a cloud aggregation interval: a positive integer or "inf"
_KAPPA_FIELDS = {"kappa", "kappas"}


@dataclass
class TopologySpec:
    num_servers: int = settings.DEFAULT_NUM_SERVERS
    num_clients: int = settings.DEFAULT_NUM_CLIENTS
    overlap_sizes: List[int] = field(default_factory=lambda: list(settings.DEFAULT_OVERLAP_SIZES))
    local_sizes: Optional[List[int]] = None
    balance: bool = True
    cell_radius_m: float = settings.DEFAULT_CELL_RADIUS_M
    overlap_fraction: float = settings.DEFAULT_OVERLAP_FRACTION
    roc_policy: str = settings.DEFAULT_ROC_POLICY


@dataclass
class DatasetSpec:
    source: str = settings.DEFAULT_DATASET
    data_dir: Optional[str] = None
    subset_size: int = settings.DEFAULT_MNIST_SUBSET
    full: bool = False
    test_subset_size: Optional[int] = None
    num_classes: int = settings.DEFAULT_SYNTHETIC_CLASSES
    dim: int = settings.DEFAULT_SYNTHETIC_DIM
    per_class: int = settings.DEFAULT_SYNTHETIC_PER_CLASS
    spread: float = settings.DEFAULT_SYNTHETIC_SPREAD
    test_fraction: float = settings.DEFAULT_TEST_FRACTION


@dataclass
class PartitionSpec:
    classes_per_client: int = settings.DEFAULT_CLASSES_PER_CLIENT
    classes_per_cell: int = settings.DEFAULT_CLASSES_PER_CELL
    samples_per_client: Optional[int] = None
    size_skew: float = 0.0
    oc_class_source: str = "union"


@dataclass
class TrainingSpec:
    model: str = "auto"
    hidden_units: int = settings.DEFAULT_HIDDEN_UNITS
    epochs: int = settings.DEFAULT_EPOCHS
    rounds: int = settings.DEFAULT_ROUNDS
    batch_size: int = settings.DEFAULT_BATCH_SIZE
    full_batch: bool = False
    iteration_mode: bool = False
    schedule: str = "exponential"
    learning_rate: float = settings.DEFAULT_LEARNING_RATE
    lr_decay: float = settings.DEFAULT_LR_DECAY
    target_accuracy: Optional[float] = None
    time_budget_s: Optional[float] = None


@dataclass
class ChannelSpec:
    bandwidth_hz: float = settings.DEFAULT_BANDWIDTH_HZ
    client_power_w: float = settings.DEFAULT_CLIENT_POWER_W
    es_power_w: float = settings.DEFAULT_ES_POWER_W
    noise_psd_dbm_hz: float = settings.DEFAULT_NOISE_PSD_DBM_HZ
    pathloss_intercept_db: float = settings.PATHLOSS_INTERCEPT_DB
    pathloss_slope_db: float = settings.PATHLOSS_SLOPE_DB
    rayleigh_variance: float = 1.0
    rayleigh_floor: float = settings.RAYLEIGH_POWER_FLOOR
    cloud_ratio: float = settings.DEFAULT_CLOUD_RATIO
    compute_time_range: List[float] = field(
        default_factory=lambda: list(settings.DEFAULT_COMPUTE_TIME_RANGE)
    )
    bits_per_parameter: int = settings.BITS_PER_PARAMETER
    log_base: str = "log2"
    relay_gain: str = "shared"
    resample_per_round: bool = False


@dataclass
class SeedSpec:
    base: int = 0
    topology: Optional[int] = None
    data: Optional[int] = None
    partition: Optional[int] = None
    channel: Optional[int] = None
    training: Optional[int] = None
    init: Optional[int] = None

    def resolve(self) -> Dict[str, int]:
        """Explicit seeds win; the rest are derived from ``base`` per stream."""
        resolved = {}
        for stream in SEED_STREAMS:
            explicit = getattr(self, stream)
            resolved[stream] = explicit if explicit is not None else derive_seed(self.base, stream)
        return resolved


@dataclass
class SweepSpec:
    algorithm: str = "hfl"
    kappas: List[Union[int, float]] = field(
        default_factory=lambda: [parse_kappa(k) for k in settings.DEFAULT_KAPPA_GRID]
    )
    target_accuracy: float = settings.DEFAULT_TARGET_ACCURACY
    time_budget_s: float = settings.DEFAULT_TIME_BUDGET_S
    repeats: int = 1
    workers: int = 1


@dataclass
class AnalysisSpec:
    lipschitz_safety: float = settings.DEFAULT_LIPSCHITZ_SAFETY
    lipschitz_floor: float = settings.DEFAULT_LIPSCHITZ_FLOOR


@dataclass
class ExperimentConfig:
    algorithm: str = "fedoc_fastest"
    kappa: Union[int, float] = math.inf
    eval_interval: int = settings.DEFAULT_EVAL_INTERVAL
    checkpoint_interval: int = 0
    output_dir: Optional[str] = None
    record_trajectories: bool = False
    topology: TopologySpec = field(default_factory=TopologySpec)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    seeds: SeedSpec = field(default_factory=SeedSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)

    @property
    def effective_kappa(self) -> int:
        """Cloud interval in rounds; cloud-free runs map to R + 1."""
        return effective_kappa(self.kappa, self.training.rounds)

    @property
    def num_classes(self) -> int:
        return 10 if self.dataset.source == "mnist" else self.dataset.num_classes

    @property
    def model_kind(self) -> str:
        if self.training.model != "auto":
            return self.training.model
        return "mlp" if self.dataset.source == "mnist" else "logistic"


SECTIONS = {
    "topology": TopologySpec,
    "dataset": DatasetSpec,
    "partition": PartitionSpec,
    "training": TrainingSpec,
    "channel": ChannelSpec,
    "seeds": SeedSpec,
    "sweep": SweepSpec,
    "analysis": AnalysisSpec,
}


def derive_seed(base: int, *labels: Any) -> int:
    """Derive an independent 63-bit seed from a base seed and labels.

    Args:
        base: Base seed
        *labels: Stream name, experiment index, ...

    Returns:
        Non-negative integer seed
    """
    key = ":".join([str(int(base))] + [str(label) for label in labels]).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") & (2**63 - 1)


def parse_kappa(value: Any) -> Union[int, float]:
    """Map a kappa value to a positive int, or ``math.inf`` for cloud-free mode."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity"):
            return math.inf
        try:
            value = int(text)
        except ValueError:
            raise ValueError(f"kappa must be a positive integer or 'inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"kappa must be a positive integer or 'inf', got {value!r}")
    if value == math.inf:
        return math.inf
    if float(value).is_integer() and value >= 1:
        return int(value)
    raise ValueError(f"kappa must be a positive integer or 'inf', got {value!r}")


def format_kappa(kappa: Union[int, float]) -> str:
    return "inf" if kappa == math.inf else str(int(kappa))


def effective_kappa(kappa: Union[int, float], rounds: int) -> int:
    return rounds + 1 if kappa == math.inf else int(kappa)


def _coerce(value: Any, hint: Any, path: str, problems: List[Tuple[str, str]]) -> Any:
    origin = get_origin(hint)
    if origin is Union:
        options = [arg for arg in get_args(hint) if arg is not type(None)]
        return _coerce(value, options[0], path, problems)
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            problems.append((path, f"expected a list, got {type(value).__name__}"))
            return None
        (item_hint,) = get_args(hint)
        return [_coerce(v, item_hint, f"{path}[{i}]", problems) for i, v in enumerate(value)]
    if hint is bool:
        if not isinstance(value, bool):
            problems.append((path, f"expected a boolean, got {value!r}"))
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append((path, f"expected an integer, got {value!r}"))
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append((path, f"expected a number, got {value!r}"))
            return value
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            problems.append((path, f"expected a string, got {value!r}"))
        return value
    return value


def _coerce_kappa(value: Any, path: str, problems: List[Tuple[str, str]]) -> Any:
    if isinstance(value, list):
        return [_coerce_kappa(v, f"{path}[{i}]", problems) for i, v in enumerate(value)]
    try:
        return parse_kappa(value)
    except ValueError as exc:
        problems.append((path, str(exc)))
        return value


def _build(cls: type, data: Dict[str, Any], prefix: str, problems: List[Tuple[str, str]]) -> Any:
    hints = get_type_hints(cls)
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in hints:
            problems.append((path, "unknown key"))
        elif key in SECTIONS and not prefix:
            if not isinstance(value, dict):
                problems.append((path, "expected a table"))
            else:
                kwargs[key] = _build(SECTIONS[key], value, key, problems)
        elif key in _KAPPA_FIELDS:
            kwargs[key] = _coerce_kappa(value, path, problems)
        else:
            kwargs[key] = _coerce(value, hints[key], path, problems)
    return cls(**kwargs)


def validate_config(cfg: ExperimentConfig) -> List[Tuple[str, str]]:
    """Check cross-field constraints.

    Returns:
        List of (field path, message); empty when the config is valid
    """
    problems: List[Tuple[str, str]] = []

    def check(condition: bool, path: str, message: str) -> None:
        if not condition:
            problems.append((path, message))

    check(cfg.algorithm in ALGORITHMS, "algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    check(cfg.eval_interval >= 1, "eval_interval", "must be >= 1")
    check(cfg.checkpoint_interval >= 0, "checkpoint_interval", "must be >= 0")

    topo = cfg.topology
    check(topo.num_servers >= 1, "topology.num_servers", "must be >= 1")
    check(topo.num_clients >= 1, "topology.num_clients", "must be >= 1")
    check(
        len(topo.overlap_sizes) == max(topo.num_servers - 1, 0),
        "topology.overlap_sizes",
        f"needs one entry per adjacent pair ({max(topo.num_servers - 1, 0)})",
    )
    check(all(v >= 0 for v in topo.overlap_sizes), "topology.overlap_sizes", "must be >= 0")
    if topo.local_sizes is not None:
        check(len(topo.local_sizes) == topo.num_servers, "topology.local_sizes", "needs one entry per server")
        check(all(u >= 0 for u in topo.local_sizes), "topology.local_sizes", "must be >= 0")
    check(topo.cell_radius_m > 0, "topology.cell_radius_m", "must be > 0")
    check(topo.overlap_fraction < 0.5, "topology.overlap_fraction", "must be < 0.5 (no three-way overlaps)")
    check(topo.roc_policy in ROC_POLICIES, "topology.roc_policy", f"must be one of {', '.join(ROC_POLICIES)}")
    if cfg.algorithm == "fedavg":
        check(topo.num_servers == 1, "algorithm", "fedavg requires topology.num_servers = 1")

    data = cfg.dataset
    check(data.source in DATASETS, "dataset.source", f"must be one of {', '.join(DATASETS)}")
    check(data.subset_size >= 1, "dataset.subset_size", "must be >= 1")
    check(data.num_classes >= 2, "dataset.num_classes", "must be >= 2")
    check(data.dim >= 1, "dataset.dim", "must be >= 1")
    check(data.per_class >= 1, "dataset.per_class", "must be >= 1")
    check(data.spread >= 0, "dataset.spread", "must be >= 0")
    check(0.0 < data.test_fraction < 1.0, "dataset.test_fraction", "must be in (0, 1)")

    part = cfg.partition
    check(part.classes_per_client >= 1, "partition.classes_per_client", "must be >= 1")
    check(
        part.classes_per_client <= part.classes_per_cell,
        "partition.classes_per_client",
        "must be <= partition.classes_per_cell",
    )
    check(
        part.classes_per_cell <= cfg.num_classes,
        "partition.classes_per_cell",
        f"must be <= the number of classes ({cfg.num_classes})",
    )
    check(part.size_skew >= 0, "partition.size_skew", "must be >= 0")
    check(
        part.oc_class_source in OC_CLASS_SOURCES,
        "partition.oc_class_source",
        f"must be one of {', '.join(OC_CLASS_SOURCES)}",
    )

    train = cfg.training
    check(train.model in MODELS, "training.model", f"must be one of {', '.join(MODELS)}")
    check(train.hidden_units >= 1, "training.hidden_units", "must be >= 1")
    check(train.epochs >= 1, "training.epochs", "must be >= 1")
    check(train.rounds >= 0, "training.rounds", "must be >= 0")
    check(train.batch_size >= 1, "training.batch_size", "must be >= 1")
    check(train.schedule in SCHEDULES, "training.schedule", f"must be one of {', '.join(SCHEDULES)}")
    check(train.learning_rate > 0, "training.learning_rate", "must be > 0")
    check(0 < train.lr_decay <= 1, "training.lr_decay", "must be in (0, 1]")
    if train.schedule == "theoretical":
        check(train.epochs >= 2, "training.epochs", "theoretical schedule needs epochs >= 2")
    if train.target_accuracy is not None:
        check(0 < train.target_accuracy <= 1, "training.target_accuracy", "must be in (0, 1]")
    if train.time_budget_s is not None:
        check(train.time_budget_s > 0, "training.time_budget_s", "must be > 0")

    chan = cfg.channel
    for name in ("bandwidth_hz", "client_power_w", "es_power_w", "rayleigh_variance", "rayleigh_floor", "cloud_ratio"):
        check(getattr(chan, name) > 0, f"channel.{name}", "must be > 0")
    check(chan.bits_per_parameter >= 1, "channel.bits_per_parameter", "must be >= 1")
    check(
        len(chan.compute_time_range) == 2
        and 0 < chan.compute_time_range[0] <= chan.compute_time_range[-1],
        "channel.compute_time_range",
        "must be [low, high] with 0 < low <= high",
    )
    check(chan.log_base in LOG_BASES, "channel.log_base", f"must be one of {', '.join(LOG_BASES)}")
    check(chan.relay_gain in RELAY_GAIN_MODES, "channel.relay_gain", f"must be one of {', '.join(RELAY_GAIN_MODES)}")

    sweep = cfg.sweep
    check(sweep.algorithm in ALGORITHMS, "sweep.algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    check(len(sweep.kappas) >= 1, "sweep.kappas", "must not be empty")
    check(0 < sweep.target_accuracy <= 1, "sweep.target_accuracy", "must be in (0, 1]")
    check(sweep.time_budget_s > 0, "sweep.time_budget_s", "must be > 0")
    check(sweep.repeats >= 1, "sweep.repeats", "must be >= 1")
    check(sweep.workers >= 1, "sweep.workers", "must be >= 1")

    check(cfg.analysis.lipschitz_safety >= 1, "analysis.lipschitz_safety", "must be >= 1")
    check(cfg.analysis.lipschitz_floor > 0, "analysis.lipschitz_floor", "must be > 0")
    return problems


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate a config from a parsed mapping.

    Raises:
        ConfigError: Unknown keys, type errors or constraint violations
    """
    problems: List[Tuple[str, str]] = []
    cfg = _build(ExperimentConfig, data, "", problems)
    if problems:
        raise ConfigError(problems)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load a TOML config, or replay the config embedded in a run manifest (.json).

    Args:
        path: Config or manifest file

    Returns:
        Validated ExperimentConfig with defaults filled in
    """
    path = Path(path)
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        return config_from_dict(manifest.get("config", manifest))
    try:
        data = toml.load(path)
    except toml.TomlDecodeError as exc:
        raise ConfigError([(str(path), f"malformed TOML: {exc}")])
    return config_from_dict(data)


def _strip(value: Any, key: str = "") -> Any:
    if isinstance(value, dict):
        return {k: _strip(v, k) for k, v in value.items() if v is not None}
    if key in _KAPPA_FIELDS:
        if isinstance(value, list):
            return [format_kappa(v) for v in value]
        return format_kappa(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Plain mapping of the config; kappa written as "inf" when cloud-free, None omitted."""
    return _strip(dataclasses.asdict(cfg))


def dump_config(cfg: ExperimentConfig) -> str:
    return toml.dumps(config_to_dict(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    """Git blob-style SHA-1 of the canonical JSON form of the config."""
    payload = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return git_blob_hash(payload)


def git_blob_hash(payload: bytes) -> str:
    header = f"blob {len(payload)}\0".encode("utf-8")
    return hashlib.sha1(header + payload).hexdigest()


def apply_overrides(
    cfg: ExperimentConfig,
    algorithm: Optional[str] = None,
    kappa: Optional[Any] = None,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    desk_scale: bool = False,
    record_trajectories: bool = False,
) -> ExperimentConfig:
    """Return a copy of ``cfg`` with command-line overrides applied and re-validated."""
    problems: List[Tuple[str, str]] = []
    cfg = dataclasses.replace(
        cfg,
        topology=dataclasses.replace(cfg.topology),
        dataset=dataclasses.replace(cfg.dataset),
        training=dataclasses.replace(cfg.training),
        seeds=dataclasses.replace(cfg.seeds),
    )
    if algorithm is not None:
        cfg.algorithm = algorithm
    if kappa is not None:
        cfg.kappa = _coerce_kappa(kappa, "kappa", problems)
    if seed is not None:
        cfg.seeds.base = seed
    if output_dir is not None:
        cfg.output_dir = str(output_dir)
    if record_trajectories:
        cfg.record_trajectories = True
    if desk_scale:
        cfg.dataset.full = False
        cfg.dataset.subset_size = min(cfg.dataset.subset_size, settings.DESK_SCALE_SAMPLES)
        cfg.dataset.test_subset_size = min(
            cfg.dataset.test_subset_size or settings.DESK_SCALE_TEST_SAMPLES,
            settings.DESK_SCALE_TEST_SAMPLES,
        )
        cfg.training.rounds = min(cfg.training.rounds, settings.DESK_SCALE_ROUNDS)
    problems.extend(validate_config(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg
