"""Task vectors, simplex-constrained merging, and coefficient selection.

A task vector is the parameter delta produced by distilling one teacher
prototype into the student, tau = theta_distilled - theta_avg. Merging adds a
convex combination of task vectors back onto the averaged parameters:

    theta_merged = theta_avg + sum_i lambda_i * tau_i,   sum_i lambda_i = 1.

Coefficient candidates come either from a fixed config or from a heuristic
that prefers nondecreasing (smallest-prototype-first) weight profiles; the
winner is picked by top-1 accuracy on a held-out validation split, never on
test data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import LabeledDataset
from .fedcore import evaluate
from .nn import MlpArchitecture, ParameterVector

SIMPLEX_TOL = 1e-9

# Beta(1, b) inverse CDF is 1 - (1-u)^(1/b); sampling through it from a named
# uniform stream makes candidate generation reproducible in any language.
_BETA_B = 100.0
_SKEW_EXPONENTS = (1, 5, 10)


@dataclass
class TaskVector:
    """theta_distilled - theta_avg for one (student, teacher-prototype) task.

    ``residual`` carries the exact rounding error of that subtraction
    (values + residual == theta_distilled - theta_avg in real arithmetic);
    ``merge`` folds it back in with compensated summation so a one-hot
    coefficient recovers the distillation endpoint bit-for-bit. Task vectors
    built directly from raw deltas simply have a zero residual.
    """

    values: np.ndarray
    arch_id: str
    teacher_prototype_id: str
    residual: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ValueError(
                f"task vector for teacher {self.teacher_prototype_id!r} has non-finite entries"
            )
        if self.residual is not None:
            self.residual = np.asarray(self.residual, dtype=np.float64).ravel()
            if self.residual.shape != self.values.shape:
                raise ValueError("task vector residual must match the values' length")


@dataclass(frozen=True)
class MergeCandidate:
    """Merge coefficients, one per prototype, smallest prototype first."""

    lambdas: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))

    def validate(self) -> None:
        if any(v < 0.0 for v in self.lambdas):
            raise ValueError(f"merge coefficients must be nonnegative, got {self.lambdas}")
        if abs(sum(self.lambdas) - 1.0) > SIMPLEX_TOL:
            raise ValueError(
                f"merge coefficients must sum to 1 within {SIMPLEX_TOL}, got {sum(self.lambdas)!r}"
            )


@dataclass
class SelectionReport:
    """Validation scores for every candidate and the chosen argmax."""

    candidates: list[MergeCandidate]
    scores: list[float]
    chosen_index: int
    tied: bool

    def to_dict(self) -> dict:
        return {
            "chosen_index": self.chosen_index,
            "chosen_lambdas": list(self.candidates[self.chosen_index].lambdas),
            "scores": self.scores,
            "tied": self.tied,
        }


def _two_sum(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Knuth's branch-free TwoSum: s + e == a + b exactly, s = fl(a + b)."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def task_vector(
    theta_distilled: ParameterVector,
    theta_avg: ParameterVector,
    teacher_prototype_id: str = "",
) -> TaskVector:
    if theta_distilled.arch_id != theta_avg.arch_id:
        raise ValueError(
            f"task vector endpoints disagree: {theta_distilled.arch_id} vs {theta_avg.arch_id}"
        )
    diff, err = _two_sum(theta_distilled.values, -theta_avg.values)
    return TaskVector(diff, theta_avg.arch_id, teacher_prototype_id, residual=err)


def merge(
    theta_avg: ParameterVector, taus: Sequence[TaskVector], candidate: MergeCandidate
) -> ParameterVector:
    """theta_avg + sum_i lambda_i * tau_i with lambda on the simplex.

    The sum is compensated: the task vectors' subtraction residuals and the
    final addition's rounding error are folded back in, so a one-hot
    coefficient vector reproduces the corresponding distillation endpoint
    bit-for-bit (the collapse case of the merge rule).
    """
    if len(taus) != len(candidate.lambdas):
        raise ValueError(f"{len(taus)} task vectors but {len(candidate.lambdas)} coefficients")
    candidate.validate()
    for tau in taus:
        if tau.arch_id != theta_avg.arch_id:
            raise ValueError(f"task vector arch {tau.arch_id} != student arch {theta_avg.arch_id}")
        if tau.values.shape != theta_avg.values.shape:
            raise ValueError("task vector length does not match student parameters")
    acc = np.zeros_like(theta_avg.values)
    comp = np.zeros_like(theta_avg.values)
    for lam, tau in zip(candidate.lambdas, taus):
        if lam != 0.0:
            acc, err = _two_sum(acc, lam * tau.values)
            comp += err
            if tau.residual is not None:
                comp += lam * tau.residual
    main, err = _two_sum(theta_avg.values, acc)
    return ParameterVector(main + (err + comp), theta_avg.arch_id)


def heuristic_candidates(
    num_devices: int, n_candidates: int, rng: np.random.Generator
) -> list[MergeCandidate]:
    """1 + 3*n_candidates coefficient candidates: uniform first, then skewed draws.

    Each draw takes ``num_devices`` Beta(1, 100) samples (via the inverse CDF,
    see module constants), raises them to an exponent in {1, 5, 10} to control
    skew, sorts ascending so larger prototypes get larger coefficients, and
    normalizes to the simplex.
    """
    if num_devices < 1:
        raise ValueError(f"num_devices must be >= 1, got {num_devices}")
    if n_candidates < 0:
        raise ValueError(f"n_candidates must be >= 0, got {n_candidates}")
    out = [MergeCandidate((1.0 / num_devices,) * num_devices)]
    for exponent in _SKEW_EXPONENTS:
        for _ in range(n_candidates):
            u = rng.random(num_devices)
            draw = 1.0 - (1.0 - u) ** (1.0 / _BETA_B)
            c = np.sort(draw**exponent)
            c = c / c.sum()
            out.append(MergeCandidate(tuple(c)))
    return out


def select_coefficients(
    arch: MlpArchitecture,
    theta_avg: ParameterVector,
    taus: Sequence[TaskVector],
    candidates: Sequence[MergeCandidate],
    validation: LabeledDataset,
) -> tuple[MergeCandidate, SelectionReport]:
    """Pick the candidate whose merge scores highest top-1 on validation.

    Ties break toward the lowest candidate index (the uniform candidate when
    the heuristic generated the list).
    """
    if not candidates:
        raise ValueError("need at least one merge candidate")
    if len(validation) < 1:
        raise ValueError("validation dataset is empty")
    scores = [
        evaluate(arch, merge(theta_avg, taus, cand), validation).top1 for cand in candidates
    ]
    chosen = int(np.argmax(scores))
    tied = scores.count(scores[chosen]) > 1
    report = SelectionReport(list(candidates), scores, chosen, tied)
    return candidates[chosen], report
