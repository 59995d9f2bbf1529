"""Tests for ensemble logits, logit caching, and the distillation variants."""

from __future__ import annotations

import numpy as np
import pytest

from takfed import (
    ClientShard,
    DistillConfig,
    MlpArchitecture,
    NonFiniteLossError,
    ParameterVector,
    PrototypeConfig,
    SyntheticSpec,
    TeacherEnsemble,
    UnlabeledDataset,
    cache_initial_logits,
    client_update,
    dirichlet_partition,
    distill_task,
    feddf_distill,
    fedavg_aggregate,
    fedet_lite_distill,
    forward,
    generate_public,
    generate_synthetic,
    init_params,
    mean_kl_to_cache,
    stream,
    unflatten,
)
from takfed.distill import _confidence_weighted_logits, _members_mean_logits


def _pv(arch, values) -> ParameterVector:
    return ParameterVector(np.asarray(values, dtype=float), arch.arch_id)


def _linear_member(arch, w, b) -> ParameterVector:
    values = np.zeros(arch.parameter_count())
    wv, bv = unflatten(arch, values)[0]
    wv[...] = w
    bv[...] = b
    return _pv(arch, values)


# --- ensemble logits ----------------------------------------------------------


def test_ensemble_single_member_is_identity():
    arch = MlpArchitecture(3, (4,), 2)
    member = init_params(arch, stream(0, "init"))
    ens = TeacherEnsemble("P", arch, [member])
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(_members_mean_logits([ens], x), forward(arch, member, x))


def test_ensemble_two_member_mean():
    arch = MlpArchitecture(2, (), 2)
    a = _linear_member(arch, np.zeros((2, 2)), np.array([1.0, 0.0]))
    b = _linear_member(arch, np.zeros((2, 2)), np.array([3.0, 2.0]))
    ens = TeacherEnsemble("P", arch, [a, b])
    out = _members_mean_logits([ens], np.zeros((1, 2)))
    assert np.array_equal(out, np.array([[2.0, 1.0]]))


def test_ensemble_identical_members_collapse():
    arch = MlpArchitecture(3, (5,), 4)
    member = init_params(arch, stream(1, "init"))
    x = np.random.default_rng(1).normal(size=(6, 3))
    one = _members_mean_logits([TeacherEnsemble("P", arch, [member])], x)
    many = _members_mean_logits([TeacherEnsemble("P", arch, [member] * 5)], x)
    assert np.max(np.abs(one - many)) < 1e-12


def test_ensemble_empty_rejected():
    arch = MlpArchitecture(2, (), 2)
    with pytest.raises(ValueError):
        TeacherEnsemble("P", arch, [])


# --- logit cache ----------------------------------------------------------------


def test_cache_zero_params_zero_logits():
    arch = MlpArchitecture(3, (4,), 2)
    zero = _pv(arch, np.zeros(arch.parameter_count()))
    public = UnlabeledDataset(np.random.default_rng(0).normal(size=(7, 3)))
    cache = cache_initial_logits(arch, zero, public)
    assert np.all(cache.logits == 0.0)


def test_cache_deterministic_and_matches_forward():
    arch = MlpArchitecture(4, (6,), 3)
    params = init_params(arch, stream(2, "init"))
    public = UnlabeledDataset(np.random.default_rng(2).normal(size=(9, 4)))
    c1 = cache_initial_logits(arch, params, public)
    c2 = cache_initial_logits(arch, params, public)
    assert c1.logits.tobytes() == c2.logits.tobytes()
    assert np.array_equal(c1.logits, forward(arch, params, public.features))


def test_cache_is_immutable():
    arch = MlpArchitecture(2, (), 2)
    cache = cache_initial_logits(
        arch, _pv(arch, np.zeros(arch.parameter_count())), UnlabeledDataset(np.ones((2, 2)))
    )
    with pytest.raises(ValueError):
        cache.logits[0, 0] = 1.0


# --- distill_task -----------------------------------------------------------------


def _scenario(seed, arch=None, spread=1.0):
    arch = arch or MlpArchitecture(8, (12,), 4)
    spec = SyntheticSpec(class_count=4, input_dim=8, samples_per_class=120, cluster_spread=spread)
    ds = generate_synthetic(spec, stream(seed, "data"))
    public = generate_public(spec, stream(seed, "public"), 0.3)
    init = init_params(arch, stream(seed, "init"))
    proto = PrototypeConfig(
        name="P", arch=arch, n_clients=3, sample_rate=1.0, data_ratio=1.0,
        local_epochs=6, local_lr=2e-3, local_wd=0.0, local_batch=32,
    )
    plan = dirichlet_partition(ds, 0.5, 3, stream(seed, "part"))
    shards = [ClientShard(k, ds.subset(idx)) for k, idx in enumerate(plan.shards)]
    members = [
        client_update(arch, init, sh, proto, stream(seed, "client", 0, "P", sh.client_id))
        for sh in shards
    ]
    theta_avg = fedavg_aggregate(members, [len(s.data) for s in shards])
    return arch, theta_avg, TeacherEnsemble("P", arch, members), public


def test_distill_self_teacher_is_fixed_point():
    # teacher logits equal student logits at theta_avg, so the KL gradient is
    # exactly zero; with zero weight decay nothing can move
    arch = MlpArchitecture(5, (6,), 3)
    theta_avg = init_params(arch, stream(4, "init"))
    teacher = TeacherEnsemble("P", arch, [theta_avg.copy()])
    public = UnlabeledDataset(np.random.default_rng(4).normal(size=(40, 5)))
    cfg = DistillConfig(epochs=2, batch=16, lr=1e-2, wd=0.0, gamma=0.0)
    out = distill_task(arch, theta_avg, teacher, public, cfg, stream(4, "distill"))
    assert out.values.tobytes() == theta_avg.values.tobytes()


def test_distill_zero_epochs_identity():
    arch, theta_avg, teacher, public = _scenario(0)
    cfg = DistillConfig(epochs=0, batch=32, lr=1e-3)
    out = distill_task(arch, theta_avg, teacher, public, cfg, stream(0, "distill"))
    assert out.values.tobytes() == theta_avg.values.tobytes()


def test_distill_gamma_sweep_anchors_to_cache():
    # higher self-regularization weight keeps the student closer to its
    # initial logits: final mean KL to the cache is non-increasing in gamma
    for seed in (0, 1, 2):
        arch, theta_avg, teacher, public = _scenario(seed)
        cache = cache_initial_logits(arch, theta_avg, public)
        kls = []
        for gamma in (0.0, 0.1, 1.0, 10.0):
            cfg = DistillConfig(epochs=3, batch=64, lr=3e-3, wd=0.0, gamma=gamma)
            out = distill_task(arch, theta_avg, teacher, public, cfg, stream(seed, "distill", 0, "P", "P"))
            kls.append(mean_kl_to_cache(arch, out, public, cache))
        assert all(kls[i] >= kls[i + 1] for i in range(len(kls) - 1)), kls


def test_distill_nan_guard():
    arch, theta_avg, teacher, public = _scenario(1)
    cfg = DistillConfig(epochs=3, batch=32, lr=1e308, wd=0.0)
    with np.errstate(all="ignore"), pytest.raises(NonFiniteLossError):
        distill_task(arch, theta_avg, teacher, public, cfg, stream(1, "distill"))


# --- feddf ------------------------------------------------------------------------


def test_feddf_single_prototype_equals_distill_task():
    arch, theta_avg, teacher, public = _scenario(2)
    cfg = DistillConfig(epochs=2, batch=32, lr=2e-3, wd=5e-5, gamma=0.0)
    a = distill_task(arch, theta_avg, teacher, public, cfg, stream(7, "distill", 0, "P", "P"))
    b = feddf_distill(arch, theta_avg, [teacher], public, cfg, stream(7, "distill", 0, "P", "P"))
    assert a.values.tobytes() == b.values.tobytes()


def test_feddf_zero_epochs_identity():
    arch, theta_avg, teacher, public = _scenario(3)
    cfg = DistillConfig(epochs=0)
    out = feddf_distill(arch, theta_avg, [teacher], public, cfg, stream(3, "d"))
    assert out.values.tobytes() == theta_avg.values.tobytes()


def test_feddf_balanced_teachers_leave_student_unchanged():
    # two members at theta_avg +- delta with dyadic entries: their mean logits
    # equal the student's logits bit-for-bit, so the first step's gradient is
    # exactly zero and (with wd=0) parameters stay put
    arch = MlpArchitecture(2, (), 2)
    w = np.array([[1.0, 0.5], [0.25, 2.0]])
    b = np.array([0.5, 1.0])
    delta_w = np.array([[0.25, 0.5], [0.125, 0.25]])
    student = _linear_member(arch, w, b)
    up = _linear_member(arch, w + delta_w, b + 0.25)
    down = _linear_member(arch, w - delta_w, b - 0.25)
    ens = TeacherEnsemble("P", arch, [up, down])
    public = UnlabeledDataset(np.array([[1.0, 2.0], [0.5, 4.0], [2.0, 0.25]]))
    cfg = DistillConfig(epochs=1, batch=8, lr=1e-2, wd=0.0, gamma=0.0)
    out = feddf_distill(arch, student, [ens], public, cfg, stream(0, "d"))
    assert out.values.tobytes() == student.values.tobytes()


# --- fedet-lite --------------------------------------------------------------------


def test_fedet_equal_confidence_matches_feddf_target():
    arch = MlpArchitecture(3, (4,), 3)
    m1 = init_params(arch, stream(10, "init"))
    m2 = init_params(arch, stream(11, "init"))
    # identical ensembles => identical per-sample confidence
    e1 = TeacherEnsemble("A", arch, [m1, m2])
    e2 = TeacherEnsemble("B", arch, [m1, m2])
    x = np.random.default_rng(5).normal(size=(6, 3))
    weighted = _confidence_weighted_logits([e1, e2], x)
    pooled = _members_mean_logits([e1, e2], x)
    assert np.max(np.abs(weighted - pooled)) < 1e-12


def test_fedet_one_hot_confident_prototype_dominates():
    arch = MlpArchitecture(2, (), 3)
    confident = _linear_member(arch, np.zeros((2, 3)), np.array([1000.0, 0.0, 0.0]))
    uniform = _linear_member(arch, np.zeros((2, 3)), np.zeros(3))
    x = np.random.default_rng(6).normal(size=(4, 2))
    target = _confidence_weighted_logits(
        [TeacherEnsemble("A", arch, [confident]), TeacherEnsemble("B", arch, [uniform])], x
    )
    confident_logits = forward(arch, confident, x)
    assert np.max(np.abs(target - confident_logits)) < 1e-6


def test_fedet_single_prototype_reduces_to_feddf():
    arch, theta_avg, teacher, public = _scenario(4)
    cfg = DistillConfig(epochs=1, batch=32, lr=2e-3, wd=0.0)
    a = fedet_lite_distill(arch, theta_avg, [teacher], public, cfg, stream(8, "d"))
    b = feddf_distill(arch, theta_avg, [teacher], public, cfg, stream(8, "d"))
    assert np.array_equal(a.values, b.values)


def test_fedet_all_uniform_falls_back_to_uniform_weights():
    arch = MlpArchitecture(2, (), 2)
    z1 = _linear_member(arch, np.zeros((2, 2)), np.array([3.0, 3.0]))
    z2 = _linear_member(arch, np.zeros((2, 2)), np.array([1.0, 1.0]))
    x = np.ones((2, 2))
    target = _confidence_weighted_logits(
        [TeacherEnsemble("A", arch, [z1]), TeacherEnsemble("B", arch, [z2])], x
    )
    assert np.allclose(target, 2.0)
