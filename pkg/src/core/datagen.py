"""Datasets and the two-level (cell, client) non-IID partition.

Labels are 0..C-1 internally. The IDX reader follows the published MNIST format:
a big-endian header (magic, counts, dims) followed by unsigned bytes.
"""

import gzip
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.datasets import make_blobs
from sklearn.model_selection import train_test_split

from src.config import settings
from src.core.errors import DatasetError, DatasetFormatError, PartitionError
from src.core.topology import LC, ROC, Topology, relay_attachment

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) == 0:
            raise DatasetError(f"{self.name}: features must be a non-empty N x d matrix")
        if len(self.labels) != len(self.features):
            raise DatasetError(f"{self.name}: {len(self.labels)} labels for {len(self.features)} rows")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DatasetError(f"{self.name}: labels outside [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError(f"{self.name}: non-finite feature values")

    @property
    def num_samples(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: Sequence[int], name: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.num_classes, name or self.name)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _read_bytes(path: Union[str, Path]) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw: bytes, count: int, path) -> Tuple[int, ...]:
    if len(raw) < 4 * count:
        raise DatasetFormatError(f"{path}: truncated header")
    return tuple(int(v) for v in np.frombuffer(raw[: 4 * count], dtype=">u4"))


def read_idx_images(path: Union[str, Path]) -> np.ndarray:
    """Read an IDX image file into an (n, rows, cols) uint8 array."""
    raw = _read_bytes(path)
    (magic,) = _header(raw, 1, path)
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    _, n, rows, cols = _header(raw, 4, path)
    expected = 16 + n * rows * cols
    if len(raw) < expected:
        raise DatasetFormatError(f"{path}: truncated, {len(raw)} bytes for {n} images of {rows}x{cols}")
    return np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows, cols)


def read_idx_labels(path: Union[str, Path]) -> np.ndarray:
    raw = _read_bytes(path)
    (magic,) = _header(raw, 1, path)
    if magic != IDX_LABELS_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    _, n = _header(raw, 2, path)
    if len(raw) < 8 + n:
        raise DatasetFormatError(f"{path}: truncated, {len(raw)} bytes for {n} labels")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8)


def write_idx_images(path: Union[str, Path], images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    header = np.array([IDX_IMAGES_MAGIC, n, rows, cols], dtype=">u4").tobytes()
    with open(path, "wb") as f:
        f.write(header + images.tobytes())


def write_idx_labels(path: Union[str, Path], labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    header = np.array([IDX_LABELS_MAGIC, len(labels)], dtype=">u4").tobytes()
    with open(path, "wb") as f:
        f.write(header + labels.tobytes())


def load_mnist_idx(images_path: Union[str, Path], labels_path: Union[str, Path], name: str = "mnist") -> Dataset:
    """Load an MNIST-style IDX image/label pair.

    Args:
        images_path: IDX3 image file (optionally gzip-compressed)
        labels_path: IDX1 label file

    Returns:
        Dataset with pixel features scaled to [0, 1] and C = 10

    Raises:
        DatasetFormatError: Bad magic, truncated file or image/label count mismatch
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DatasetFormatError(f"{len(images)} images but {len(labels)} labels")
    features = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), 10, name)


def find_mnist_files(data_dir: Union[str, Path], split: str) -> Tuple[Path, Path]:
    """Locate the standard MNIST file pair, plain or .gz."""
    data_dir = Path(data_dir)
    found = []
    for stem in MNIST_FILES[split]:
        for candidate in (data_dir / stem, data_dir / f"{stem}.gz"):
            if candidate.exists():
                found.append(candidate)
                break
        else:
            raise FileNotFoundError(f"MNIST file {stem} not found in {data_dir}")
    return found[0], found[1]


def make_synthetic(num_classes: int, dim: int, per_class: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs with one mean per class on the unit sphere.

    When C <= d the means form a random orthonormal frame so classes stay well
    separated; otherwise they are independent uniform directions.
    """
    if num_classes < 2 or dim < 1 or per_class < 1:
        raise ValueError("make_synthetic needs C >= 2, d >= 1 and per_class >= 1")
    rng = np.random.default_rng(seed)
    if num_classes <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        centers = q[:, :num_classes].T
    else:
        centers = rng.standard_normal((num_classes, dim))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    features, labels = make_blobs(
        n_samples=[per_class] * num_classes,
        n_features=dim,
        centers=centers,
        cluster_std=spread,
        random_state=seed % (2**32),
    )
    return Dataset(features.astype(np.float64), labels.astype(np.int64), num_classes, "synthetic")


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    train_idx, test_idx = train_test_split(
        np.arange(ds.num_samples),
        test_size=test_fraction,
        stratify=ds.labels,
        random_state=seed % (2**32),
    )
    return ds.subset(np.sort(train_idx), f"{ds.name}-train"), ds.subset(np.sort(test_idx), f"{ds.name}-test")


def stratified_subsample(ds: Dataset, size: int, seed: int) -> Dataset:
    """Class-stratified subset of ``size`` samples (the whole set if it is smaller)."""
    if size >= ds.num_samples:
        return ds
    keep, _ = train_test_split(
        np.arange(ds.num_samples),
        train_size=size,
        stratify=ds.labels,
        random_state=seed % (2**32),
    )
    return ds.subset(np.sort(keep))


@dataclass(frozen=True)
class PartitionPlan:
    client_indices: Tuple[np.ndarray, ...]
    client_counts: np.ndarray  # K x C samples per class
    home_cells: Tuple[int, ...]
    cell_allowances: Tuple[Tuple[int, ...], ...]
    client_classes: Tuple[Tuple[int, ...], ...]
    num_cells: int

    @property
    def num_clients(self) -> int:
        return len(self.client_indices)

    @property
    def num_classes(self) -> int:
        return self.client_counts.shape[1]

    @property
    def sample_counts(self) -> np.ndarray:
        return self.client_counts.sum(axis=1)

    @property
    def client_histograms(self) -> np.ndarray:
        return self.client_counts / self.sample_counts[:, None]

    def cell_members(self, cell: int) -> Tuple[int, ...]:
        return tuple(k for k, home in enumerate(self.home_cells) if home == cell)

    @property
    def cell_counts(self) -> np.ndarray:
        counts = np.zeros((self.num_cells, self.num_classes), dtype=np.int64)
        for k, home in enumerate(self.home_cells):
            counts[home] += self.client_counts[k]
        return counts

    @property
    def cell_sizes(self) -> np.ndarray:
        return self.cell_counts.sum(axis=1)

    @property
    def cell_histograms(self) -> np.ndarray:
        counts = self.cell_counts
        totals = counts.sum(axis=1, keepdims=True)
        return np.divide(counts, totals, out=np.zeros(counts.shape), where=totals > 0)

    @property
    def global_histogram(self) -> np.ndarray:
        totals = self.client_counts.sum(axis=0)
        return totals / totals.sum()

    def client_heterogeneity(self) -> np.ndarray:
        """sum_i |P_k(i) - P_cell(i)| per client, against the client's home cell."""
        cells = self.cell_histograms[list(self.home_cells)]
        return np.abs(self.client_histograms - cells).sum(axis=1)

    def cell_heterogeneity(self) -> np.ndarray:
        """sum_i |P_cell(i) - P_global(i)| per cell."""
        return np.abs(self.cell_histograms - self.global_histogram[None, :]).sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "num_cells": self.num_cells,
            "home_cells": list(self.home_cells),
            "cell_allowances": [list(a) for a in self.cell_allowances],
            "client_classes": [list(c) for c in self.client_classes],
            "client_counts": self.client_counts.tolist(),
            "client_indices": [idx.tolist() for idx in self.client_indices],
            "heterogeneity": self.client_heterogeneity().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PartitionPlan":
        return cls(
            client_indices=tuple(np.asarray(idx, dtype=np.int64) for idx in data["client_indices"]),
            client_counts=np.asarray(data["client_counts"], dtype=np.int64),
            home_cells=tuple(data["home_cells"]),
            cell_allowances=tuple(tuple(a) for a in data["cell_allowances"]),
            client_classes=tuple(tuple(c) for c in data["client_classes"]),
            num_cells=int(data["num_cells"]),
        )


def _home_cells(topo: Topology, rng: np.random.Generator) -> List[int]:
    homes = []
    for k in range(topo.num_clients):
        role = topo.role(k)
        if role.kind == LC:
            homes.append(role.index)
        elif role.kind == ROC:
            homes.append(relay_attachment(role.index, topo.num_servers))
        else:
            homes.append(role.index + int(rng.integers(2)))
    return homes


def _client_sizes(base: int, num_clients: int, skew: float, minimum: int, rng) -> np.ndarray:
    if skew <= 0:
        return np.full(num_clients, base, dtype=np.int64)
    weights = rng.lognormal(mean=0.0, sigma=skew, size=num_clients)
    sizes = np.floor(base * num_clients * weights / weights.sum()).astype(np.int64)
    return np.maximum(sizes, minimum)


def _fit_class_supply(demand: np.ndarray, available: np.ndarray) -> np.ndarray:
    """Shrink over-subscribed class columns to the supply, keeping every chosen slot at one sample or more."""
    fitted = demand.copy()
    for c in range(demand.shape[1]):
        column = fitted[:, c]
        slots = column > 0
        total = int(column.sum())
        if total <= available[c]:
            continue
        if int(slots.sum()) > available[c]:
            raise PartitionError(f"class {c} has {int(available[c])} samples for {int(slots.sum())} client slots")
        scaled = np.where(slots, np.maximum(np.floor(column * available[c] / total), 1), 0).astype(np.int64)
        # largest shards give up the rounding excess
        for _ in range(int(scaled.sum()) - int(available[c])):
            scaled[int(np.argmax(scaled))] -= 1
        fitted[:, c] = scaled
    return fitted


def partition_noniid(
    ds: Dataset,
    topo: Topology,
    classes_per_client: int,
    classes_per_cell: int,
    seed: int,
    samples_per_client: Optional[int] = None,
    size_skew: float = 0.0,
    oc_class_source: str = "union",
) -> PartitionPlan:
    """Split a dataset across the clients of a topology with cell- and client-level skew.

    Every cell draws a class allowance of ``classes_per_cell`` classes; every client
    draws ``classes_per_client`` classes. Local clients draw from their home cell's
    allowance; overlap clients draw from both covering cells unless
    ``oc_class_source="home"`` restricts them to the home cell.
    Each client takes an equal share per class, and shards are equal-sized unless
    ``size_skew`` asks for lognormal size variation.

    Args:
        ds: Training data
        topo: Chain topology (home cells come from it)
        classes_per_client: Classes held by each client
        classes_per_cell: Classes available in each cell
        seed: Partition seed
        samples_per_client: Target shard size; defaults to N // K
        size_skew: Lognormal sigma for shard sizes, 0 for equal shards
        oc_class_source: "home" or "union"

    Returns:
        PartitionPlan with disjoint index lists and class histograms

    Raises:
        PartitionError: The class budget cannot cover the demand
    """
    C = ds.num_classes
    K = topo.num_clients
    if not 1 <= classes_per_client <= classes_per_cell <= C:
        raise PartitionError(
            f"need 1 <= classes_per_client ({classes_per_client}) <= classes_per_cell "
            f"({classes_per_cell}) <= C ({C})"
        )
    rng = np.random.default_rng(seed)
    allowances = tuple(
        tuple(sorted(int(c) for c in rng.choice(C, size=classes_per_cell, replace=False)))
        for _ in range(topo.num_servers)
    )
    homes = _home_cells(topo, rng)

    client_classes = []
    for k in range(K):
        allowed = set(allowances[homes[k]])
        if oc_class_source == "union" and topo.role(k).kind != LC:
            for l in topo.covering_servers(k):
                allowed.update(allowances[l])
        allowed = sorted(allowed)
        chosen = rng.choice(allowed, size=classes_per_client, replace=False)
        client_classes.append(tuple(sorted(int(c) for c in chosen)))

    base = samples_per_client if samples_per_client is not None else ds.num_samples // K
    sizes = _client_sizes(base, K, size_skew, classes_per_client, rng)
    demand = np.zeros((K, C), dtype=np.int64)
    for k, classes in enumerate(client_classes):
        share, extra = divmod(int(sizes[k]), classes_per_client)
        for j, c in enumerate(classes):
            demand[k, c] = share + (1 if j < extra else 0)

    available = ds.class_counts()
    requested = demand.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(requested > 0, available / np.maximum(requested, 1), np.inf)
    scale = min(1.0, float(ratios.min()))
    if scale < 1.0:
        if size_skew <= 0:
            # equal shards: one common per-class quota
            per_slot = int(min(
                available[c] // max(int((demand[:, c] > 0).sum()), 1) for c in range(C) if requested[c] > 0
            ))
            demand = np.where(demand > 0, min(per_slot, base // classes_per_client), 0)
        else:
            demand = _fit_class_supply(demand, available)
        logger.warning("Not enough samples for the requested shard size; shards shrunk to %s", demand.sum(axis=1).min())
    if (demand.sum(axis=1) == 0).any() or ((demand > 0).sum(axis=1) < classes_per_client).any():
        raise PartitionError("cell class budget cannot cover client demand with the available samples")

    pools = {c: rng.permutation(np.flatnonzero(ds.labels == c)) for c in range(C)}
    cursor = {c: 0 for c in range(C)}
    indices = []
    for k in range(K):
        picked = []
        for c in np.flatnonzero(demand[k]):
            take = int(demand[k, c])
            picked.append(pools[c][cursor[c]:cursor[c] + take])
            cursor[c] += take
        indices.append(np.sort(np.concatenate(picked)).astype(np.int64))

    plan = PartitionPlan(
        client_indices=tuple(indices),
        client_counts=demand,
        home_cells=tuple(homes),
        cell_allowances=allowances,
        client_classes=tuple(client_classes),
        num_cells=topo.num_servers,
    )
    logger.info(
        "Partitioned %d samples over %d clients (%d classes/client, %d classes/cell)",
        int(plan.sample_counts.sum()), K, classes_per_client, classes_per_cell,
    )
    return plan


def load_datasets(cfg, data_seed: int) -> Tuple[Dataset, Dataset]:
    """Build the (train, test) pair described by the dataset section of a config."""
    spec = cfg.dataset
    if spec.source == "mnist":
        data_dir = Path(spec.data_dir) if spec.data_dir else settings.DATA_DIR
        train = load_mnist_idx(*find_mnist_files(data_dir, "train"), name="mnist-train")
        test = load_mnist_idx(*find_mnist_files(data_dir, "test"), name="mnist-test")
        if not spec.full:
            train = stratified_subsample(train, spec.subset_size, data_seed)
        if spec.test_subset_size is not None:
            test = stratified_subsample(test, spec.test_subset_size, data_seed + 1)
        return train, test
    full = make_synthetic(spec.num_classes, spec.dim, spec.per_class, spec.spread, data_seed)
    return stratified_split(full, spec.test_fraction, data_seed)
