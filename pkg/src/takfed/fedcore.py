"""Client-side local training, weighted averaging, sampling, evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError, NonFiniteLossError
from .nn import (
    MlpArchitecture,
    ParameterVector,
    adam_init,
    adam_step,
    backward,
    cross_entropy,
    forward,
    forward_cached,
)


@dataclass(frozen=True)
class FixedLambdas:
    """Apply this simplex of merge coefficients every round."""

    lambdas: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        if any(v < 0 for v in self.lambdas):
            raise ConfigError(f"fixed merge coefficients must be nonnegative, got {self.lambdas}")
        if abs(sum(self.lambdas) - 1.0) > 1e-9:
            raise ConfigError(
                f"fixed merge coefficients must sum to 1 within 1e-9, got sum {sum(self.lambdas)!r}"
            )


@dataclass(frozen=True)
class HeuristicLambdas:
    """Generate candidates each round and pick the best on validation.

    ``freeze_after_first_round`` reuses the round-0 selection afterwards,
    trading fidelity for speed.
    """

    n_candidates: int = 10
    freeze_after_first_round: bool = False

    def __post_init__(self) -> None:
        if self.n_candidates < 0:
            raise ConfigError(f"n_candidates must be >= 0, got {self.n_candidates}")


LambdaMode = Union[FixedLambdas, HeuristicLambdas]


@dataclass
class PrototypeConfig:
    """One device prototype: architecture, client pool, and local training knobs."""

    name: str
    arch: MlpArchitecture
    n_clients: int
    sample_rate: float
    data_ratio: float
    local_epochs: int = 1
    local_lr: float = 1e-3
    local_wd: float = 5e-5
    local_batch: int = 64
    gamma: float = 0.0
    lambda_mode: LambdaMode = field(default_factory=HeuristicLambdas)

    def __post_init__(self) -> None:
        if self.n_clients < 1:
            raise ConfigError(f"prototype {self.name!r}: n_clients must be >= 1")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ConfigError(f"prototype {self.name!r}: sample_rate must lie in (0, 1]")
        if self.data_ratio <= 0:
            raise ConfigError(f"prototype {self.name!r}: data_ratio must be positive")
        if self.local_epochs < 0 or self.local_batch < 1:
            raise ConfigError(f"prototype {self.name!r}: invalid local_epochs/local_batch")
        if self.gamma < 0:
            raise ConfigError(f"prototype {self.name!r}: gamma must be nonnegative")


@dataclass
class ClientShard:
    client_id: int
    data: LabeledDataset

    def __post_init__(self) -> None:
        if len(self.data) < 1:
            raise ConfigError(f"client {self.client_id}: shard must hold at least one sample")


@dataclass
class EvalResult:
    top1: float
    mean_loss: float


def sample_clients(n_clients: int, sample_rate: float, rng: np.random.Generator) -> list[int]:
    """ceil(rate * n) distinct ids, uniform without replacement, sorted."""
    if not 0.0 < sample_rate <= 1.0:
        raise ConfigError(f"sample_rate must lie in (0, 1], got {sample_rate}")
    k = math.ceil(sample_rate * n_clients)
    ids = rng.choice(n_clients, size=k, replace=False)
    return sorted(int(i) for i in ids)


def client_update(
    arch: MlpArchitecture,
    init_params: ParameterVector,
    shard: ClientShard,
    hp: PrototypeConfig,
    rng: np.random.Generator,
) -> ParameterVector:
    """hp.local_epochs passes of mini-batch Adam on cross-entropy.

    Batches are reshuffled each epoch from the client's own stream; a batch
    size larger than the shard clamps to full batch. The input parameters are
    never mutated; ``local_epochs=0`` returns them bit-identically.
    """
    values = init_params.values.copy()
    pv = ParameterVector(values, init_params.arch_id)
    state = adam_init(len(values), lr=hp.local_lr, weight_decay=hp.local_wd)
    n = len(shard.data)
    bs = min(hp.local_batch, n)
    feats, labels = shard.data.features, shard.data.labels
    for _ in range(hp.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            logits, fcache = forward_cached(arch, pv, feats[idx])
            loss, glogits = cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise NonFiniteLossError(f"client {shard.client_id}: local loss became {loss}")
            grads = backward(arch, pv, fcache, glogits)
            values, state = adam_step(state, values, grads)
            pv = ParameterVector(values, init_params.arch_id)
    return pv


def fedavg_aggregate(
    params_list: list[ParameterVector], sizes: list[int]
) -> ParameterVector:
    """Dataset-size-weighted mean of parameter vectors.

    Computed in deviation form, x0 + sum_i w_i * (x_i - x0), which is exact
    when all inputs are equal and numerically gentle when they are close.
    """
    if not params_list:
        raise ValueError("cannot aggregate an empty list of parameter vectors")
    if len(params_list) != len(sizes):
        raise ValueError(f"{len(params_list)} parameter vectors but {len(sizes)} sizes")
    if any(s <= 0 for s in sizes):
        raise ValueError(f"sizes must be positive, got {sizes}")
    arch_id = params_list[0].arch_id
    if any(p.arch_id != arch_id for p in params_list):
        raise ValueError(
            f"mixed architectures in aggregate: {sorted({p.arch_id for p in params_list})}"
        )
    weights = np.asarray(sizes, dtype=np.float64)
    weights = weights / weights.sum()
    base = params_list[0].values
    out = base.copy()
    for w, p in zip(weights, params_list):
        diff = p.values - base
        if diff.any():
            out += w * diff
    return ParameterVector(out, arch_id)


def evaluate(
    arch: MlpArchitecture, params: ParameterVector, test: LabeledDataset
) -> EvalResult:
    """Top-1 accuracy (argmax ties -> lowest class index) and mean CE loss."""
    if len(test) < 1:
        raise ValueError("test dataset is empty")
    logits = forward(arch, params, test.features)
    pred = np.argmax(logits, axis=1)
    loss, _ = cross_entropy(logits, test.labels)
    return EvalResult(top1=float(np.mean(pred == test.labels)), mean_loss=loss)
