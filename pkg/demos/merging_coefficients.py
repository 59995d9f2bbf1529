"""Anatomy of merge-coefficient candidates and validation-driven selection.

The heuristic draws Beta(1,100) samples, skews them with exponents 1/5/10,
sorts ascending (small prototype first), and normalizes, so candidates range
from near-uniform to extremely skewed toward the largest prototype. A
held-out validation split picks the winner.

python demos/merging_coefficients.py
"""

import numpy as np

from takfed import (
    LabeledDataset,
    MergeCandidate,
    MlpArchitecture,
    ParameterVector,
    TaskVector,
    heuristic_candidates,
    merge,
    select_coefficients,
    stream,
    task_vector,
    unflatten,
)


def main() -> None:
    print("candidate profiles for 3 prototypes (first 8 of 31):")
    for cand in heuristic_candidates(3, 10, stream(0, "lambda"))[:8]:
        lam = np.array(cand.lambdas)
        bars = " ".join(f"{v:.4f}" for v in lam)
        print(f"  [{bars}]  skew={lam.max() / max(lam.min(), 1e-12):9.1f}x")

    print("\nselection on a constructed scenario:")
    # identity-template weights classify the validation set perfectly; an
    # anti-template with huge magnitude ruins any blend it dominates
    arch = MlpArchitecture(3, (), 3)
    feats = np.eye(3).repeat(4, axis=0) + 0.05 * stream(1, "noise").normal(size=(12, 3))
    labels = np.repeat(np.arange(3), 4)
    validation = LabeledDataset(feats, labels, 3)

    def template(matrix, scale):
        values = np.zeros(arch.parameter_count())
        w, _ = unflatten(arch, values)[0]
        w[...] = scale * matrix
        return values

    avg = ParameterVector(np.zeros(arch.parameter_count()), arch.arch_id)
    taus = [
        TaskVector(template(np.eye(3)[:, ::-1], -1000.0), arch.arch_id, "noisy-teacher"),
        TaskVector(template(np.eye(3), 4.0), arch.arch_id, "helpful-teacher"),
    ]
    candidates = [MergeCandidate(c) for c in ((0.5, 0.5), (0.1, 0.9), (0.0, 1.0))]
    chosen, report = select_coefficients(arch, avg, taus, candidates, validation)
    for cand, score in zip(report.candidates, report.scores):
        marker = "  <- chosen" if cand is chosen else ""
        print(f"  lambda={cand.lambdas}  validation top-1 {score:.2f}{marker}")

    print("\none-hot collapse: merging with (0, 1) returns the helpful endpoint exactly")
    endpoint = ParameterVector(avg.values + taus[1].values, arch.arch_id)
    recovered = merge(avg, [taus[0], task_vector(endpoint, avg, "helpful")], MergeCandidate((0.0, 1.0)))
    print(f"  bit-identical: {recovered.values.tobytes() == endpoint.values.tobytes()}")


if __name__ == "__main__":
    main()
