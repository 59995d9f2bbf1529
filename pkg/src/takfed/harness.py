"""Experiment orchestration: config parsing, the round loop, metrics, checkpoints.

The outer loop per round: sample clients per prototype, run local updates
(optionally on a thread pool), aggregate per prototype, then apply the
method's server step:

* ``fedavg``     - the aggregate is the next round's model;
* ``feddf``      - one pooled distillation against all members' mean logits;
* ``fedet_lite`` - one pooled distillation against confidence-weighted logits;
* ``takfl``      - one distillation task per (student, teacher) prototype
                   pair, a task vector each, then a simplex-weighted merge
                   with coefficients either fixed or selected on validation.

Determinism: every stochastic call site draws from ``streams.stream`` keyed
by (seed, purpose, round, prototype, client/teacher), so results are
bit-identical for any worker-thread count. Reports are sorted by
(round, prototype) before emission.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (
    LabeledDataset,
    SyntheticSpec,
    UnlabeledDataset,
    dirichlet_partition,
    generate_public,
    generate_synthetic,
    holdout_split,
    load_csv,
    ratio_split,
)
from .distill import (
    DistillConfig,
    TeacherEnsemble,
    distill_task,
    feddf_distill,
    fedet_lite_distill,
)
from .errors import CheckpointError, ConfigError, NonFiniteLossError
from .fedcore import (
    ClientShard,
    FixedLambdas,
    HeuristicLambdas,
    PrototypeConfig,
    client_update,
    evaluate,
    fedavg_aggregate,
    sample_clients,
)
from .nn import MlpArchitecture, ParameterVector, init_params
from .streams import stream
from .taskarith import (
    MergeCandidate,
    heuristic_candidates,
    merge,
    select_coefficients,
    task_vector,
)

METHODS = ("fedavg", "feddf", "fedet_lite", "takfl")

CHECKPOINT_MAGIC = b"TAKF"
CHECKPOINT_VERSION = 1
CHECKPOINT_DTYPE = "<f8"
_MAX_HEADER_BYTES = 1 << 20


@dataclass(frozen=True)
class PublicDataConfig:
    samples_per_class: Optional[int] = None
    center_shift: float = 0.25
    csv_path: Optional[str] = None
    csv_has_header: bool = False


@dataclass(frozen=True)
class DataConfig:
    alpha: float
    test_count: int
    val_fraction: float = 0.05
    synthetic: Optional[SyntheticSpec] = None
    csv_path: Optional[str] = None
    csv_has_header: bool = False
    csv_input_dim: Optional[int] = None
    csv_class_count: Optional[int] = None
    public: PublicDataConfig = field(default_factory=PublicDataConfig)

    @property
    def input_dim(self) -> int:
        return self.synthetic.input_dim if self.synthetic else int(self.csv_input_dim)

    @property
    def class_count(self) -> int:
        return self.synthetic.class_count if self.synthetic else int(self.csv_class_count)


@dataclass
class ExperimentConfig:
    seed: int
    rounds: int
    method: str
    prototypes: list[PrototypeConfig]
    data: DataConfig
    distill: DistillConfig = field(default_factory=DistillConfig)
    takfl_self_reg: bool = False

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.prototypes:
            raise ConfigError("at least one prototype is required")
        names = [p.name for p in self.prototypes]
        if len(set(names)) != len(names):
            raise ConfigError(f"prototype names must be unique, got {names}")
        for p in self.prototypes:
            if isinstance(p.lambda_mode, FixedLambdas) and len(p.lambda_mode.lambdas) != len(
                self.prototypes
            ):
                raise ConfigError(
                    f"prototype {p.name!r}: fixed merge coefficients need one entry per "
                    f"prototype ({len(self.prototypes)}), got {len(p.lambda_mode.lambdas)}"
                )


@dataclass
class RoundReport:
    round: int
    prototype: str
    top1: float
    loss: float
    lambdas: Optional[list[float]] = None
    selection: Optional[dict] = None
    wall_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "prototype": self.prototype,
            "top1": self.top1,
            "loss": self.loss,
            "lambdas": self.lambdas,
            "selection": self.selection,
            "wall_ms": self.wall_ms,
        }


@dataclass
class PreparedData:
    """Resolved datasets: per-prototype client shards plus shared splits."""

    shards: dict[str, list[ClientShard]]
    validation: LabeledDataset
    test: LabeledDataset
    public: UnlabeledDataset


@dataclass
class ExperimentResult:
    reports: list[RoundReport]
    final_params: dict[str, ParameterVector]
    round_params: Optional[list[dict[str, np.ndarray]]] = None


# ---------------------------------------------------------------------------
# config parsing


def _expect_keys(obj: dict, path: str, required: tuple[str, ...], optional: tuple[str, ...]) -> None:
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {missing}")


def _as_int(obj: dict, path: str, key: str, default=None, minimum=None):
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {v}")
    return v


def _as_float(obj: dict, path: str, key: str, default=None):
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    return float(v)


def _parse_lambda_mode(obj, path: str):
    if obj is None:
        return HeuristicLambdas()
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ConfigError(f"{path}: lambda_mode must be {{'fixed': [...]}} or {{'heuristic': {{...}}}}")
    (kind, body), = obj.items()
    if kind == "fixed":
        if not isinstance(body, list):
            raise ConfigError(f"{path}.fixed: expected a list of coefficients")
        try:
            return FixedLambdas(tuple(float(v) for v in body))
        except ConfigError as exc:
            raise ConfigError(f"{path}.fixed: {exc}") from None
    if kind == "heuristic":
        body = body or {}
        _expect_keys(body, f"{path}.heuristic", (), ("n_candidates", "freeze_after_first_round"))
        return HeuristicLambdas(
            n_candidates=_as_int(body, f"{path}.heuristic", "n_candidates", default=10, minimum=0),
            freeze_after_first_round=bool(body.get("freeze_after_first_round", False)),
        )
    raise ConfigError(f"{path}: unknown lambda_mode kind {kind!r}")


def _parse_prototype(obj: dict, path: str, input_dim: int, class_count: int) -> PrototypeConfig:
    _expect_keys(
        obj,
        path,
        ("name", "hidden_widths", "n_clients", "sample_rate", "data_ratio"),
        ("local_epochs", "local_lr", "local_wd", "local_batch", "gamma", "lambda_mode"),
    )
    widths = obj["hidden_widths"]
    if not isinstance(widths, list) or any(isinstance(w, bool) or not isinstance(w, int) for w in widths):
        raise ConfigError(f"{path}.hidden_widths: expected a list of integers, got {widths!r}")
    arch = MlpArchitecture(input_dim, tuple(widths), class_count)
    return PrototypeConfig(
        name=str(obj["name"]),
        arch=arch,
        n_clients=_as_int(obj, path, "n_clients", minimum=1),
        sample_rate=_as_float(obj, path, "sample_rate"),
        data_ratio=_as_float(obj, path, "data_ratio"),
        local_epochs=_as_int(obj, path, "local_epochs", default=1, minimum=0),
        local_lr=_as_float(obj, path, "local_lr", default=1e-3),
        local_wd=_as_float(obj, path, "local_wd", default=5e-5),
        local_batch=_as_int(obj, path, "local_batch", default=64, minimum=1),
        gamma=_as_float(obj, path, "gamma", default=0.0),
        lambda_mode=_parse_lambda_mode(obj.get("lambda_mode"), f"{path}.lambda_mode"),
    )


def _parse_data(obj: dict, path: str) -> DataConfig:
    _expect_keys(obj, path, ("alpha", "test_count"), ("synthetic", "csv", "val_fraction", "public"))
    synthetic = None
    csv_path = csv_has_header = csv_input_dim = csv_class_count = None
    if ("synthetic" in obj) == ("csv" in obj):
        raise ConfigError(f"{path}: exactly one of 'synthetic' or 'csv' is required")
    if "synthetic" in obj:
        s = obj["synthetic"]
        _expect_keys(
            s,
            f"{path}.synthetic",
            ("class_count", "input_dim", "samples_per_class"),
            ("cluster_spread", "class_center_scale"),
        )
        synthetic = SyntheticSpec(
            class_count=_as_int(s, f"{path}.synthetic", "class_count", minimum=2),
            input_dim=_as_int(s, f"{path}.synthetic", "input_dim", minimum=1),
            samples_per_class=_as_int(s, f"{path}.synthetic", "samples_per_class", minimum=1),
            cluster_spread=_as_float(s, f"{path}.synthetic", "cluster_spread", default=1.0),
            class_center_scale=_as_float(s, f"{path}.synthetic", "class_center_scale", default=1.0),
        )
    else:
        c = obj["csv"]
        _expect_keys(c, f"{path}.csv", ("path", "input_dim", "class_count"), ("has_header",))
        csv_path = str(c["path"])
        csv_has_header = bool(c.get("has_header", False))
        csv_input_dim = _as_int(c, f"{path}.csv", "input_dim", minimum=1)
        csv_class_count = _as_int(c, f"{path}.csv", "class_count", minimum=2)
    pub = obj.get("public", {})
    _expect_keys(pub, f"{path}.public", (), ("samples_per_class", "center_shift", "csv", "has_header"))
    public = PublicDataConfig(
        samples_per_class=_as_int(pub, f"{path}.public", "samples_per_class", default=None, minimum=1),
        center_shift=_as_float(pub, f"{path}.public", "center_shift", default=0.25),
        csv_path=str(pub["csv"]) if "csv" in pub else None,
        csv_has_header=bool(pub.get("has_header", False)),
    )
    if synthetic is None and public.csv_path is None:
        raise ConfigError(f"{path}.public: csv-based experiments need a public csv")
    alpha = _as_float(obj, path, "alpha")
    if alpha <= 0:
        raise ConfigError(f"{path}.alpha: must be > 0, got {alpha}")
    return DataConfig(
        alpha=alpha,
        test_count=_as_int(obj, path, "test_count", minimum=0),
        val_fraction=_as_float(obj, path, "val_fraction", default=0.05),
        synthetic=synthetic,
        csv_path=csv_path,
        csv_has_header=bool(csv_has_header),
        csv_input_dim=csv_input_dim,
        csv_class_count=csv_class_count,
        public=public,
    )


def _parse_distill(obj: dict, path: str) -> DistillConfig:
    _expect_keys(
        obj,
        path,
        (),
        ("epochs", "batch", "lr", "wd", "kd_temperature", "self_reg_temperature", "gamma"),
    )
    return DistillConfig(
        epochs=_as_int(obj, path, "epochs", default=1, minimum=0),
        batch=_as_int(obj, path, "batch", default=128, minimum=1),
        lr=_as_float(obj, path, "lr", default=1e-5),
        wd=_as_float(obj, path, "wd", default=5e-5),
        kd_temperature=_as_float(obj, path, "kd_temperature", default=3.0),
        self_reg_temperature=_as_float(obj, path, "self_reg_temperature", default=20.0),
        gamma=_as_float(obj, path, "gamma", default=0.0),
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a JSON experiment config (schema in README)."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    _expect_keys(
        obj,
        "config",
        ("seed", "rounds", "method", "data", "prototypes"),
        ("takfl_self_reg", "distill"),
    )
    data = _parse_data(obj["data"], "data")
    protos_obj = obj["prototypes"]
    if not isinstance(protos_obj, list) or not protos_obj:
        raise ConfigError("prototypes: expected a nonempty list")
    prototypes = [
        _parse_prototype(p, f"prototypes[{i}]", data.input_dim, data.class_count)
        for i, p in enumerate(protos_obj)
    ]
    return ExperimentConfig(
        seed=_as_int(obj, "config", "seed"),
        rounds=_as_int(obj, "config", "rounds", minimum=1),
        method=str(obj["method"]),
        prototypes=prototypes,
        data=data,
        distill=_parse_distill(obj.get("distill", {}), "distill"),
        takfl_self_reg=bool(obj.get("takfl_self_reg", False)),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# data assembly


def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Materialize shards, validation/test splits, and the public set."""
    seed = config.seed
    d = config.data
    if d.synthetic is not None:
        base = generate_synthetic(d.synthetic, stream(seed, "data"))
    else:
        base = load_csv(d.csv_path, has_header=d.csv_has_header, class_count=d.csv_class_count)
        if base.features.shape[1] != d.input_dim:
            raise ConfigError(
                f"csv feature width {base.features.shape[1]} != configured input_dim {d.input_dim}"
            )
    train, validation, test = holdout_split(base, d.val_fraction, d.test_count, stream(seed, "holdout"))
    parts = ratio_split(train, [p.data_ratio for p in config.prototypes], stream(seed, "ratio"))
    shards: dict[str, list[ClientShard]] = {}
    for proto, part in zip(config.prototypes, parts):
        plan = dirichlet_partition(part, d.alpha, proto.n_clients, stream(seed, "partition", proto.name))
        shards[proto.name] = [
            ClientShard(cid, part.subset(idx)) for cid, idx in enumerate(plan.shards)
        ]
    if d.public.csv_path is not None:
        raw = np.loadtxt(
            d.public.csv_path, delimiter=",", skiprows=1 if d.public.csv_has_header else 0, ndmin=2
        )
        public = UnlabeledDataset(raw)
    else:
        spec = d.synthetic
        if d.public.samples_per_class is not None:
            spec = dataclasses.replace(spec, samples_per_class=d.public.samples_per_class)
        public = generate_public(spec, stream(seed, "public"), d.public.center_shift)
    if public.features.shape[1] != d.input_dim:
        raise ConfigError(
            f"public feature width {public.features.shape[1]} != configured input_dim {d.input_dim}"
        )
    return PreparedData(shards=shards, validation=validation, test=test, public=public)


# ---------------------------------------------------------------------------
# the round loop


def _effective_gamma(config: ExperimentConfig, proto: PrototypeConfig) -> float:
    if config.method == "takfl" and config.takfl_self_reg:
        return proto.gamma
    return 0.0


def run_experiment(
    config: ExperimentConfig,
    threads: int = 1,
    capture_rounds: bool = False,
    prepared: Optional[PreparedData] = None,
) -> ExperimentResult:
    """Execute all rounds; bit-deterministic for a fixed seed and any thread count."""
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    data = prepared if prepared is not None else prepare_data(config)
    seed = config.seed
    protos = config.prototypes
    models: dict[str, ParameterVector] = {
        p.name: init_params(p.arch, stream(seed, "init", p.name)) for p in protos
    }
    frozen_lambda: dict[str, Optional[MergeCandidate]] = {p.name: None for p in protos}
    reports: list[RoundReport] = []
    rounds_capture: list[dict[str, np.ndarray]] = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for r in range(config.rounds):
            t0 = time.perf_counter()
            try:
                theta_avg, ensembles = _local_phase(config, data, models, r, pool)
                new_models, round_reports = _server_phase(
                    config, data, theta_avg, ensembles, frozen_lambda, r, pool
                )
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(f"round {r}: {exc}") from exc
            models = new_models
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
            for proto in protos:
                rep = round_reports[proto.name]
                ev = evaluate(proto.arch, models[proto.name], data.test)
                rep.round = r
                rep.prototype = proto.name
                rep.top1 = ev.top1
                rep.loss = ev.mean_loss
                rep.wall_ms = elapsed_ms
                reports.append(rep)
            if capture_rounds:
                rounds_capture.append({n: pv.values.copy() for n, pv in models.items()})
    reports.sort(key=lambda rep: (rep.round, rep.prototype))
    return ExperimentResult(
        reports=reports,
        final_params=models,
        round_params=rounds_capture if capture_rounds else None,
    )


def _local_phase(config, data, models, r, pool):
    """Sample clients, run local updates in parallel, aggregate per prototype."""
    seed = config.seed
    jobs = []
    sampled: dict[str, list[int]] = {}
    for proto in config.prototypes:
        ids = sample_clients(proto.n_clients, proto.sample_rate, stream(seed, "sample", r, proto.name))
        sampled[proto.name] = ids
        for cid in ids:
            jobs.append((proto, cid))

    def _job(item):
        proto, cid = item
        shard = data.shards[proto.name][cid]
        try:
            updated = client_update(
                proto.arch, models[proto.name], shard, proto, stream(seed, "client", r, proto.name, cid)
            )
        except NonFiniteLossError as exc:
            raise NonFiniteLossError(f"prototype {proto.name}: {exc}") from exc
        return (proto.name, cid), updated

    results = dict(pool.map(_job, jobs))
    theta_avg: dict[str, ParameterVector] = {}
    ensembles: dict[str, TeacherEnsemble] = {}
    for proto in config.prototypes:
        members = [results[(proto.name, cid)] for cid in sampled[proto.name]]
        sizes = [len(data.shards[proto.name][cid].data) for cid in sampled[proto.name]]
        theta_avg[proto.name] = fedavg_aggregate(members, sizes)
        ensembles[proto.name] = TeacherEnsemble(proto.name, proto.arch, members)
    return theta_avg, ensembles


def _server_phase(config, data, theta_avg, ensembles, frozen_lambda, r, pool):
    """Method-specific update; returns next-round models and report stubs."""
    seed = config.seed
    protos = config.prototypes
    all_ensembles = [ensembles[p.name] for p in protos]
    reports = {p.name: RoundReport(round=r, prototype=p.name, top1=0.0, loss=0.0) for p in protos}

    if config.method == "fedavg":
        return dict(theta_avg), reports

    if config.method in ("feddf", "fedet_lite"):
        fn = feddf_distill if config.method == "feddf" else fedet_lite_distill

        def _pooled(proto):
            try:
                out = fn(
                    proto.arch,
                    theta_avg[proto.name],
                    all_ensembles,
                    data.public,
                    config.distill,
                    stream(seed, "distill", r, proto.name, proto.name),
                )
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(f"prototype {proto.name}: {exc}") from exc
            return proto.name, out

        return dict(pool.map(_pooled, protos)), reports

    # takfl: one distillation task per (student, teacher) pair
    def _task(pair):
        student, teacher = pair
        cfg = dataclasses.replace(config.distill, gamma=_effective_gamma(config, student))
        try:
            distilled = distill_task(
                student.arch,
                theta_avg[student.name],
                ensembles[teacher.name],
                data.public,
                cfg,
                stream(seed, "distill", r, student.name, teacher.name),
            )
        except NonFiniteLossError as exc:
            raise NonFiniteLossError(
                f"student {student.name}, teacher {teacher.name}: {exc}"
            ) from exc
        return (student.name, teacher.name), distilled

    pairs = [(s, t) for s in protos for t in protos]
    distilled = dict(pool.map(_task, pairs))
    new_models: dict[str, ParameterVector] = {}
    for student in protos:
        avg = theta_avg[student.name]
        taus = [
            task_vector(distilled[(student.name, teacher.name)], avg, teacher.name)
            for teacher in protos
        ]
        mode = student.lambda_mode
        if isinstance(mode, FixedLambdas):
            candidate = MergeCandidate(mode.lambdas)
            reports[student.name].lambdas = list(candidate.lambdas)
        else:
            if mode.freeze_after_first_round and frozen_lambda[student.name] is not None:
                candidate = frozen_lambda[student.name]
                reports[student.name].lambdas = list(candidate.lambdas)
                reports[student.name].selection = {"frozen": True}
            else:
                cands = heuristic_candidates(
                    len(protos), mode.n_candidates, stream(seed, "lambda", r, student.name)
                )
                candidate, sel = select_coefficients(
                    student.arch, avg, taus, cands, data.validation
                )
                frozen_lambda[student.name] = candidate
                reports[student.name].lambdas = list(candidate.lambdas)
                reports[student.name].selection = sel.to_dict()
        new_models[student.name] = merge(avg, taus, candidate)
    return new_models, reports


# ---------------------------------------------------------------------------
# metrics + checkpoints


def write_metrics(reports: list[RoundReport], path: str | Path) -> None:
    """JSON-lines metrics, one object per report, stable key order."""
    with open(path, "w") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_dict()) + "\n")


@dataclass(frozen=True)
class CheckpointHeader:
    arch: MlpArchitecture
    seed: int
    round: int
    magic: bytes = CHECKPOINT_MAGIC
    version: int = CHECKPOINT_VERSION
    dtype: str = CHECKPOINT_DTYPE


def save_checkpoint(header: CheckpointHeader, params: ParameterVector, path: str | Path) -> None:
    """magic | u32 version | u64 header length | header JSON | f64 LE payload."""
    if params.arch_id != header.arch.arch_id:
        raise ValueError(f"checkpoint arch {header.arch.arch_id} != params arch {params.arch_id}")
    meta = {
        "arch": {
            "input_dim": header.arch.input_dim,
            "hidden_widths": list(header.arch.hidden_widths),
            "num_classes": header.arch.num_classes,
            "activation": header.arch.activation,
        },
        "dtype": header.dtype,
        "seed": header.seed,
        "round": header.round,
        "param_count": len(params),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(params.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.magic)
        fh.write(struct.pack("<I", header.version))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path: str | Path) -> tuple[CheckpointHeader, ParameterVector]:
    """Inverse of save_checkpoint; any malformation raises CheckpointError."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint: {exc}") from None
    if len(raw) < 16:
        raise CheckpointError(f"{path}: file too short ({len(raw)} bytes) to hold a header")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if hlen > _MAX_HEADER_BYTES or 16 + hlen > len(raw):
        raise CheckpointError(f"{path}: header length {hlen} exceeds file size {len(raw)}")
    try:
        meta = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: header is not valid JSON: {exc}") from None
    try:
        arch = MlpArchitecture(
            int(meta["arch"]["input_dim"]),
            tuple(int(w) for w in meta["arch"]["hidden_widths"]),
            int(meta["arch"]["num_classes"]),
            str(meta["arch"]["activation"]),
        )
        dtype = str(meta["dtype"])
        seed = int(meta["seed"])
        rnd = int(meta["round"])
        param_count = int(meta["param_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: header missing or malformed field: {exc}") from None
    if dtype != CHECKPOINT_DTYPE:
        raise CheckpointError(f"{path}: unsupported dtype tag {dtype!r}")
    if param_count != arch.parameter_count():
        raise CheckpointError(
            f"{path}: header param_count {param_count} != architecture count "
            f"{arch.parameter_count()}"
        )
    payload = raw[16 + hlen :]
    if len(payload) != param_count * 8:
        raise CheckpointError(
            f"{path}: payload holds {len(payload)} bytes, expected {param_count * 8}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        bad = int(np.sum(~np.isfinite(values)))
        raise CheckpointError(f"{path}: payload contains {bad} non-finite value(s)")
    header = CheckpointHeader(arch=arch, seed=seed, round=rnd, version=version, dtype=dtype)
    return header, ParameterVector(values, arch.arch_id)


def run_to_dir(
    config: ExperimentConfig, out_dir: str | Path, threads: int = 1
) -> ExperimentResult:
    """Run the experiment, then write metrics.jsonl and final checkpoints."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config, threads=threads)
    write_metrics(result.reports, out / "metrics.jsonl")
    for proto in config.prototypes:
        header = CheckpointHeader(arch=proto.arch, seed=config.seed, round=config.rounds - 1)
        save_checkpoint(header, result.final_params[proto.name], out / f"checkpoint_{proto.name}.takf")
    return result
