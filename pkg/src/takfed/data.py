"""Dataset synthesis, ratio splitting, Dirichlet partitioning, holdouts.

The Dirichlet partition recipe is pinned exactly so an independent
implementation can replicate it from this description alone:

1. For each class c = 0..C-1 in order:
   a. gather the indices with label c and shuffle them with one
      ``rng.permutation`` call;
   b. draw client proportions ``p = rng.dirichlet(alpha * ones(n_clients))``;
   c. cut the shuffled indices at ``(cumsum(p)[:-1] * len(idx)).astype(int)``
      (truncation) and append piece k to client k's shard.
2. Sort every shard ascending.
3. While any shard is empty: take the empty shard with the lowest client id,
   move the last (largest) index out of the currently largest shard
   (ties broken by lowest shard id) into it, keeping both sorted.

Step 3 keeps every client trainable; steps 1-2 are the standard per-class
proportional assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"feature rows {self.features.shape[0]} != label count {self.labels.shape[0]}"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(
                f"labels must lie in [0, {self.class_count}), got "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.class_count)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass
class UnlabeledDataset:
    features: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"features must be a nonempty 2-D matrix, got {self.features.shape}")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-blob multiclass data, a desk-scale stand-in for image sets."""

    class_count: int
    input_dim: int
    samples_per_class: int
    cluster_spread: float = 1.0
    class_center_scale: float = 1.0

    def __post_init__(self) -> None:
        if min(self.class_count, self.input_dim, self.samples_per_class) < 1:
            raise ConfigError(f"synthetic spec counts must be positive: {self}")
        if self.cluster_spread <= 0 or self.class_center_scale <= 0:
            raise ConfigError(f"synthetic spec scales must be positive: {self}")


@dataclass
class PartitionPlan:
    """One index list per client; disjoint and jointly complete."""

    shards: list[np.ndarray]

    def sizes(self) -> list[int]:
        return [len(s) for s in self.shards]


def generate_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> LabeledDataset:
    """Per-class center ~ U(+-class_center_scale)^dim, samples ~ N(center, spread^2 I)."""
    centers = rng.uniform(
        -spec.class_center_scale, spec.class_center_scale, size=(spec.class_count, spec.input_dim)
    )
    blocks = []
    for c in range(spec.class_count):
        noise = rng.normal(0.0, spec.cluster_spread, size=(spec.samples_per_class, spec.input_dim))
        blocks.append(centers[c] + noise)
    features = np.concatenate(blocks, axis=0)
    labels = np.repeat(np.arange(spec.class_count), spec.samples_per_class)
    return LabeledDataset(features, labels, spec.class_count)


def generate_public(
    spec: SyntheticSpec, rng: np.random.Generator, center_shift: float = 0.25
) -> UnlabeledDataset:
    """Fresh draw from ``spec`` with each class center perturbed by U(+-center_shift).

    Models a public dataset that resembles, but does not equal, the private
    distribution. Labels are discarded.
    """
    centers = rng.uniform(
        -spec.class_center_scale, spec.class_center_scale, size=(spec.class_count, spec.input_dim)
    )
    centers = centers + rng.uniform(-center_shift, center_shift, size=centers.shape)
    blocks = []
    for c in range(spec.class_count):
        noise = rng.normal(0.0, spec.cluster_spread, size=(spec.samples_per_class, spec.input_dim))
        blocks.append(centers[c] + noise)
    return UnlabeledDataset(np.concatenate(blocks, axis=0))


def largest_remainder_sizes(total: int, ratios: list[float]) -> list[int]:
    """Integer part sizes summing exactly to ``total``, shares = normalized ratios.

    Fractional leftovers go to the parts with the largest remainders, ties by
    lowest part index.
    """
    if not ratios or any(r <= 0 for r in ratios):
        raise ConfigError(f"ratios must be a nonempty list of positive reals, got {ratios}")
    shares = np.asarray(ratios, dtype=np.float64)
    shares = shares / shares.sum() * total
    base = np.floor(shares).astype(int)
    leftover = total - int(base.sum())
    # argsort is stable, so equal remainders resolve by index order
    order = np.argsort(-(shares - base), kind="stable")
    for i in order[:leftover]:
        base[i] += 1
    return base.tolist()


def ratio_split(
    ds: LabeledDataset, ratios: list[float], rng: np.random.Generator
) -> list[LabeledDataset]:
    """Random disjoint split with largest-remainder part sizes."""
    sizes = largest_remainder_sizes(len(ds), ratios)
    if len(ratios) > len(ds):
        raise ConfigError(f"cannot split {len(ds)} samples into {len(ratios)} parts")
    perm = rng.permutation(len(ds))
    parts = []
    off = 0
    for sz in sizes:
        parts.append(ds.subset(np.sort(perm[off : off + sz])))
        off += sz
    return parts


def dirichlet_partition(
    ds: LabeledDataset, alpha: float, n_clients: int, rng: np.random.Generator
) -> PartitionPlan:
    """Non-IID client partition via per-class Dir(alpha) proportions.

    See the module docstring for the exact recipe. Lower alpha concentrates
    each class on fewer clients (higher heterogeneity).
    """
    if alpha <= 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if n_clients < 1:
        raise ConfigError(f"n_clients must be >= 1, got {n_clients}")
    if n_clients > len(ds):
        raise ConfigError(f"{n_clients} clients cannot partition {len(ds)} samples")
    shards: list[list[int]] = [[] for _ in range(n_clients)]
    for c in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == c)
        idx = rng.permutation(idx)
        p = rng.dirichlet(np.full(n_clients, float(alpha)))
        cuts = (np.cumsum(p)[:-1] * len(idx)).astype(int)
        for k, piece in enumerate(np.split(idx, cuts)):
            shards[k].extend(int(i) for i in piece)
    sorted_shards = [sorted(s) for s in shards]
    while any(len(s) == 0 for s in sorted_shards):
        empty = min(k for k, s in enumerate(sorted_shards) if len(s) == 0)
        donor = max(range(n_clients), key=lambda k: (len(sorted_shards[k]), -k))
        sorted_shards[empty].append(sorted_shards[donor].pop())
    return PartitionPlan([np.asarray(s, dtype=np.int64) for s in sorted_shards])


def holdout_split(
    ds: LabeledDataset, val_fraction: float, test_count: int, rng: np.random.Generator
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Split into (train, validation, test); validation = round(val_fraction * pool).

    The pool is what remains after removing the test samples. The validation
    split is reserved for merging-coefficient selection; the test split is
    only read at evaluation time.
    """
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    if test_count < 0:
        raise ConfigError(f"test_count must be >= 0, got {test_count}")
    n = len(ds)
    pool = n - test_count
    val_count = int(round(val_fraction * pool))
    if test_count + val_count >= n:
        raise ConfigError(
            f"holdout oversubscribed: {n} samples, test {test_count} + validation {val_count} "
            "leave no training data"
        )
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:test_count])
    val_idx = np.sort(perm[test_count : test_count + val_count])
    train_idx = np.sort(perm[test_count + val_count :])
    return ds.subset(train_idx), ds.subset(val_idx), ds.subset(test_idx)


def load_csv(path: str, has_header: bool = False, class_count: int | None = None) -> LabeledDataset:
    """Numeric CSV, last column an integer class label, optional header row."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1 if has_header else 0, ndmin=2)
    if raw.shape[1] < 2:
        raise ConfigError(f"{path}: need at least one feature column plus a label column")
    labels = raw[:, -1]
    if not np.allclose(labels, np.round(labels)):
        raise ConfigError(f"{path}: last column must hold integer class labels")
    labels = labels.astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1
    return LabeledDataset(raw[:, :-1], labels, class_count)
