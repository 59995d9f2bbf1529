"""Server-side distillation: per-prototype tasks, pooled baselines, self-regularization.

All variants share one mini-batch loop over the public dataset; they differ
only in how the per-batch target logits are formed:

* ``distill_task``      - mean logits of ONE prototype's ensemble (plus the
                          self-regularization term when gamma > 0);
* ``feddf_distill``     - uniform mean over every member of every ensemble;
* ``fedet_lite_distill``- per-sample confidence-weighted mean of per-prototype
                          ensemble logits (a simplified stand-in for
                          uncertainty-weighted ensemble distillation; the
                          diversity-regularizer slot is reserved but unused).

Only logits ever cross a prototype boundary, so teachers and students may
have different architectures. No variant reads private labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import UnlabeledDataset
from .errors import ConfigError, NonFiniteLossError
from .nn import (
    MlpArchitecture,
    ParameterVector,
    adam_init,
    adam_step,
    backward,
    forward,
    forward_cached,
    kd_kl_loss,
    softmax_t,
)


@dataclass
class TeacherEnsemble:
    """One prototype's locally updated client models for the current round."""

    prototype_id: str
    arch: MlpArchitecture
    members: list[ParameterVector]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError(f"ensemble {self.prototype_id!r} has no members")
        for m in self.members:
            if m.arch_id != self.arch.arch_id:
                raise ValueError(
                    f"ensemble {self.prototype_id!r}: member arch {m.arch_id} != {self.arch.arch_id}"
                )


@dataclass
class DistillConfig:
    epochs: int = 1
    batch: int = 128
    lr: float = 1e-5
    wd: float = 5e-5
    kd_temperature: float = 3.0
    self_reg_temperature: float = 20.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.kd_temperature <= 0 or self.self_reg_temperature <= 0:
            raise ConfigError("distillation temperatures must be > 0")
        if self.epochs < 0 or self.batch < 1:
            raise ConfigError(f"invalid distillation epochs/batch: {self.epochs}/{self.batch}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")


@dataclass
class LogitCache:
    """Student logits at the averaged parameters, frozen for one task."""

    logits: np.ndarray

    def __post_init__(self) -> None:
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.logits.setflags(write=False)


def _members_mean_logits(ensembles: Sequence[TeacherEnsemble], features: np.ndarray) -> np.ndarray:
    """Arithmetic mean of every member's logits across the given ensembles."""
    total = None
    count = 0
    for ens in ensembles:
        for member in ens.members:
            lg = forward(ens.arch, member, features)
            total = lg if total is None else total + lg
            count += 1
    if total is None:
        raise ValueError("no ensemble members to average")
    return total / count


def ensemble_logits(ensemble: TeacherEnsemble, features: np.ndarray) -> np.ndarray:
    """Mean logits of one prototype's ensemble on a feature batch."""
    return _members_mean_logits([ensemble], features)


def cache_initial_logits(
    arch: MlpArchitecture, theta_avg: ParameterVector, public: UnlabeledDataset
) -> LogitCache:
    """One forward pass over the public set at theta_avg, frozen thereafter."""
    return LogitCache(forward(arch, theta_avg, public.features))


def mean_kl_to_cache(
    arch: MlpArchitecture,
    params: ParameterVector,
    public: UnlabeledDataset,
    cache: LogitCache,
) -> float:
    """Mean KL(softmax(cache) || softmax(current logits)) over the public set."""
    logits = forward(arch, params, public.features)
    loss, _ = kd_kl_loss(cache.logits, logits, temperature=1.0)
    return loss


def _distill_loop(
    arch: MlpArchitecture,
    theta_avg: ParameterVector,
    target_fn: Callable[[np.ndarray], np.ndarray],
    public: UnlabeledDataset,
    cfg: DistillConfig,
    rng: np.random.Generator,
    gamma: float,
    context: str,
) -> ParameterVector:
    values = theta_avg.values.copy()
    pv = ParameterVector(values, theta_avg.arch_id)
    state = adam_init(len(values), lr=cfg.lr, weight_decay=cfg.wd)
    # Eq-level contract: the self-regularization target is the student's own
    # logits at theta_avg, computed once and held fixed for the whole task.
    cache = cache_initial_logits(arch, theta_avg, public) if gamma > 0.0 else None
    n = len(public)
    bs = min(cfg.batch, n)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            x = public.features[idx]
            target = target_fn(x)
            logits, fcache = forward_cached(arch, pv, x)
            loss, glogits = kd_kl_loss(target, logits, cfg.kd_temperature)
            if gamma > 0.0:
                sr_loss, sr_grad = kd_kl_loss(cache.logits[idx], logits, cfg.self_reg_temperature)
                loss = loss + gamma * sr_loss
                glogits = glogits + gamma * sr_grad
            if not np.isfinite(loss):
                raise NonFiniteLossError(f"{context}: distillation loss became {loss}")
            grads = backward(arch, pv, fcache, glogits)
            values, state = adam_step(state, values, grads)
            pv = ParameterVector(values, theta_avg.arch_id)
    return pv


def distill_task(
    arch: MlpArchitecture,
    theta_avg: ParameterVector,
    teacher: TeacherEnsemble,
    public: UnlabeledDataset,
    cfg: DistillConfig,
    rng: np.random.Generator,
) -> ParameterVector:
    """Distill one teacher ensemble into the student, with self-regularization.

    Starts from theta_avg and minimizes

        kd_kl(teacher mean logits, student) + gamma * kd_kl(cached logits, student)

    over cfg.epochs passes of shuffled public mini-batches. Teacher logits
    are recomputed per batch (memory stays O(batch)); the self-reg cache is
    fixed at theta_avg. cfg.gamma weights the self-regularization term.
    """
    return _distill_loop(
        arch,
        theta_avg,
        lambda x: ensemble_logits(teacher, x),
        public,
        cfg,
        rng,
        gamma=cfg.gamma,
        context=f"distill_task[{teacher.prototype_id}]",
    )


def feddf_distill(
    arch: MlpArchitecture,
    theta_avg: ParameterVector,
    all_ensembles: Sequence[TeacherEnsemble],
    public: UnlabeledDataset,
    cfg: DistillConfig,
    rng: np.random.Generator,
) -> ParameterVector:
    """Distill against the uniform average of all members' logits (no self-reg)."""
    if not all_ensembles:
        raise ValueError("feddf_distill needs at least one ensemble")
    return _distill_loop(
        arch,
        theta_avg,
        lambda x: _members_mean_logits(all_ensembles, x),
        public,
        cfg,
        rng,
        gamma=0.0,
        context="feddf_distill",
    )


def _confidence_weighted_logits(
    ensembles: Sequence[TeacherEnsemble], features: np.ndarray
) -> np.ndarray:
    """Per-sample target: prototype ensemble logits weighted by confidence.

    Confidence of an ensemble on a sample is its max softmax probability
    rescaled above chance, (maxprob - 1/C) / (1 - 1/C), so a one-hot-confident
    ensemble gets weight 1 and a fully uniform one gets weight 0. Weights are
    normalized per sample; if every ensemble sits exactly at chance the
    weights fall back to uniform.
    """
    per_proto = [_members_mean_logits([e], features) for e in ensembles]
    n_classes = per_proto[0].shape[1]
    chance = 1.0 / n_classes
    margins = np.stack(
        [np.maximum(softmax_t(lg, 1.0).max(axis=1) - chance, 0.0) for lg in per_proto], axis=0
    )
    totals = margins.sum(axis=0)
    flat = totals <= 0.0
    if np.any(flat):
        margins[:, flat] = 1.0
        totals = margins.sum(axis=0)
    weights = margins / totals
    target = np.zeros_like(per_proto[0])
    for m, lg in enumerate(per_proto):
        target += weights[m][:, None] * lg
    return target


def fedet_lite_distill(
    arch: MlpArchitecture,
    theta_avg: ParameterVector,
    all_ensembles: Sequence[TeacherEnsemble],
    public: UnlabeledDataset,
    cfg: DistillConfig,
    rng: np.random.Generator,
) -> ParameterVector:
    """Confidence-weighted ensemble distillation (simplified; no diversity term)."""
    if not all_ensembles:
        raise ValueError("fedet_lite_distill needs at least one ensemble")
    return _distill_loop(
        arch,
        theta_avg,
        lambda x: _confidence_weighted_logits(all_ensembles, x),
        public,
        cfg,
        rng,
        gamma=0.0,
        context="fedet_lite_distill",
    )
