"""Desk-scale federated learning across heterogeneous device prototypes.

The package simulates per-prototype federated averaging plus server-side
knowledge transfer: pooled ensemble distillation baselines and a task-vector
route that distills each prototype's ensemble separately, optionally
self-regularizes the student against its pre-distillation logits, and merges
the resulting task vectors with simplex-constrained coefficients. An exact
rational evaluator of the companion capacity-allocation counting model is
included.
"""

from .capacity import (
    CapacityScenario,
    brute_force_expectation,
    choose,
    garbage_audit,
    takfl_preservation_check,
    ved_garbage_expectation,
    ved_offsolution_expectation,
)
from .data import (
    LabeledDataset,
    PartitionPlan,
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
    LogitCache,
    TeacherEnsemble,
    cache_initial_logits,
    distill_task,
    ensemble_logits,
    feddf_distill,
    fedet_lite_distill,
    mean_kl_to_cache,
)
from .errors import CheckpointError, ConfigError, NonFiniteLossError
from .fedcore import (
    ClientShard,
    EvalResult,
    FixedLambdas,
    HeuristicLambdas,
    PrototypeConfig,
    client_update,
    evaluate,
    fedavg_aggregate,
    sample_clients,
)
from .harness import (
    CheckpointHeader,
    DataConfig,
    ExperimentConfig,
    ExperimentResult,
    PublicDataConfig,
    RoundReport,
    load_checkpoint,
    load_config,
    parse_config,
    prepare_data,
    run_experiment,
    run_to_dir,
    save_checkpoint,
    write_metrics,
)
from .nn import (
    AdamState,
    Batch,
    MlpArchitecture,
    ParameterVector,
    adam_init,
    adam_step,
    backward,
    cross_entropy,
    flatten,
    forward,
    forward_cached,
    init_params,
    kd_kl_loss,
    log_softmax,
    softmax_t,
    unflatten,
)
from .streams import stream
from .taskarith import (
    MergeCandidate,
    SelectionReport,
    TaskVector,
    heuristic_candidates,
    merge,
    select_coefficients,
    task_vector,
)

__version__ = "0.1.0"
