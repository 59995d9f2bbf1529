"""Command-line entry points.

Subcommands:

* ``run``                - execute an experiment config, write metrics + checkpoints
* ``capacity``           - evaluate the capacity-allocation model exactly
* ``inspect-checkpoint`` - print a checkpoint's header and payload statistics
* ``partition-stats``    - print per-client class histograms for a config

The default output directory for ``run`` comes from $TAKFED_OUT_DIR when
``--out`` is not given (falling back to ./runs).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import capacity as cap
from .errors import CheckpointError, ConfigError, NonFiniteLossError
from .harness import load_config, load_checkpoint, prepare_data, run_to_dir


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)
    out_dir = args.out or os.environ.get("TAKFED_OUT_DIR") or "runs"
    out = Path(out_dir) / f"{Path(args.config).stem}_seed{config.seed}"
    result = run_to_dir(config, out, threads=args.threads)
    final_round = config.rounds - 1
    print(f"wrote {out / 'metrics.jsonl'}")
    for rep in result.reports:
        if rep.round == final_round:
            print(f"final round {rep.round} {rep.prototype}: top1={rep.top1:.4f} loss={rep.loss:.4f}")
    return 0


def _cmd_capacity(args) -> int:
    scenario = cap.CapacityScenario(args.q1, args.w1, args.w12, args.w2)
    out: dict = {
        "scenario": {"q1": args.q1, "w1": args.w1, "w12": args.w12, "w2": args.w2},
        "mode": args.mode,
    }
    if args.mode == "offsolution":
        value = cap.ved_offsolution_expectation(scenario)
    else:
        if args.w2 is None:
            print("capacity: --mode garbage requires --w2", file=sys.stderr)
            return 2
        value = cap.ved_garbage_expectation(scenario, bound=args.bound)
        out["bound"] = args.bound
        out["audit"] = cap.garbage_audit(scenario)
    out["value"] = str(value)
    out["value_decimal"] = float(value)
    out["preservation"] = cap.takfl_preservation_check(scenario)
    if args.brute_force:
        brute = cap.brute_force_expectation(scenario, mode=args.mode)
        out["brute_force"] = str(brute)
        out["matches_brute_force"] = bool(brute == value) if args.mode == "offsolution" else bool(
            brute == cap.ved_garbage_expectation(scenario, bound=cap.BOUND_W12_MINUS_W2)
        )
    print(json.dumps(out, indent=2))
    return 0


def _cmd_inspect(args) -> int:
    header, params = load_checkpoint(args.path)
    arch = header.arch
    info = {
        "magic": header.magic.decode("ascii"),
        "version": header.version,
        "arch": {
            "input_dim": arch.input_dim,
            "hidden_widths": list(arch.hidden_widths),
            "num_classes": arch.num_classes,
            "activation": arch.activation,
        },
        "dtype": header.dtype,
        "seed": header.seed,
        "round": header.round,
        "param_count": len(params),
        "stats": {
            "min": float(params.values.min()),
            "max": float(params.values.max()),
            "mean": float(params.values.mean()),
            "l2_norm": float(np.linalg.norm(params.values)),
        },
    }
    print(json.dumps(info, indent=2))
    return 0


def _cmd_partition_stats(args) -> int:
    config = load_config(args.config)
    data = prepare_data(config)
    for proto in config.prototypes:
        print(f"prototype {proto.name} ({proto.n_clients} clients)")
        for shard in data.shards[proto.name]:
            hist = shard.data.class_histogram()
            print(f"  client {shard.client_id:3d} n={len(shard.data):5d} classes={hist.tolist()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="takfed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="path to the experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory (default $TAKFED_OUT_DIR or ./runs)")
    p_run.add_argument("--threads", type=int, default=1, help="worker threads for clients/tasks")
    p_run.set_defaults(fn=_cmd_run)

    p_cap = sub.add_parser("capacity", help="evaluate the capacity-allocation model")
    p_cap.add_argument("--q1", type=int, required=True)
    p_cap.add_argument("--w1", type=int, required=True)
    p_cap.add_argument("--w12", type=int, required=True)
    p_cap.add_argument("--w2", type=int, default=None)
    p_cap.add_argument("--mode", choices=("offsolution", "garbage"), default="offsolution")
    p_cap.add_argument(
        "--bound",
        choices=(cap.BOUND_W12_MINUS_W2, cap.BOUND_W12_MINUS_W1),
        default=cap.BOUND_W12_MINUS_W2,
        help="summation bound for garbage mode",
    )
    p_cap.add_argument("--brute-force", action="store_true", help="cross-check by enumeration")
    p_cap.set_defaults(fn=_cmd_capacity)

    p_ins = sub.add_parser("inspect-checkpoint", help="print checkpoint header and stats")
    p_ins.add_argument("path")
    p_ins.set_defaults(fn=_cmd_inspect)

    p_ps = sub.add_parser("partition-stats", help="print per-client class histograms")
    p_ps.add_argument("--config", required=True)
    p_ps.set_defaults(fn=_cmd_partition_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError, NonFiniteLossError, ValueError, OSError) as exc:
        print(f"takfed: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
