"""Exact evaluation of the combinatorial capacity-allocation model.

The toy model studies a student device with Q1 labeled capacity slots whose
own solution occupies a designated basis of W1 slots, plus a distillation
target occupying W12 slots; a smaller teacher contributes only W2 <= W12
informative directions. Two summaries are computed, both as exact rationals:

* off-solution expectation - expected number of allocated slots that fall
  outside the student's own W1-slot basis when allocations are drawn
  uniformly from the union of the W1-subset and W12-subset families;
* garbage expectation - the same count restricted to the slack left by a
  weak teacher, where the second family shrinks to (W12 - W2)-subsets.

A brute-force enumeration over the identical counting model serves as an
independent oracle, and a preservation check verifies that the
task-arithmetic allocation rule never displaces the student's own basis.

Everything here is integer/rational; no floating point enters this module.

Known audit case: for (Q1, W1, W12, W2) = (4, 2, 2, 1) the garbage
expectation is widely quoted as 3/10, but neither summation bound reading
reproduces that number (the default bound gives 1/5, the alternate gives 0).
The discrepancy is surfaced as metadata instead of being silently matched;
see ``garbage_audit``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Optional

BRUTE_FORCE_MAX_Q1 = 12

# Summation bounds for the garbage expectation. The default counts the
# teacher's wasted target capacity (W12 - W2); the alternate uses W12 - W1,
# which is zero whenever the student fully allocates the target.
BOUND_W12_MINUS_W2 = "w12-w2"
BOUND_W12_MINUS_W1 = "w12-w1"

GARBAGE_AUDIT_CASE = (4, 2, 2, 1)
GARBAGE_AUDIT_QUOTED = Fraction(3, 10)


@dataclass(frozen=True)
class CapacityScenario:
    """Slot counts: total capacity q1, own solution w1, target w12, teacher w2."""

    q1: int
    w1: int
    w12: int
    w2: Optional[int] = None

    def __post_init__(self) -> None:
        if self.q1 < 1:
            raise ValueError(f"q1 must be >= 1, got {self.q1}")
        if not 0 <= self.w1 <= self.q1:
            raise ValueError(f"w1 must lie in [0, q1={self.q1}], got {self.w1}")
        if not 0 <= self.w12 <= self.q1:
            raise ValueError(f"w12 must lie in [0, q1={self.q1}], got {self.w12}")
        if self.w2 is not None and not 0 <= self.w2 <= self.w12:
            raise ValueError(f"w2 must lie in [0, w12={self.w12}], got {self.w2}")


def choose(n: int, k: int) -> int:
    """Exact binomial coefficient; k > n yields 0 by convention."""
    if n < 0 or k < 0:
        raise ValueError(f"choose requires nonnegative arguments, got ({n}, {k})")
    return comb(n, k)


def ved_offsolution_expectation(s: CapacityScenario) -> Fraction:
    """Expected allocated slots outside the student's own basis.

        sum_{i=1}^{Q1-W1} i * C(Q1-W1, i) / (C(Q1, W1) + C(Q1, W12))

    Zero exactly when W1 = Q1 (no spare capacity).
    """
    spare = s.q1 - s.w1
    num = sum(i * choose(spare, i) for i in range(1, spare + 1))
    den = choose(s.q1, s.w1) + choose(s.q1, s.w12)
    return Fraction(num, den)


def ved_garbage_expectation(s: CapacityScenario, bound: str = BOUND_W12_MINUS_W2) -> Fraction:
    """Expected slots filled with knowledge useful to neither prototype.

        sum_{i=1}^{upper} i * C(Q1-W1, i) / (C(Q1, W1) + C(Q1, W12-W2))

    ``bound`` selects the summation's upper limit: the default counts the
    teacher's wasted target capacity, upper = W12 - W2; the alternate reading
    uses upper = W12 - W1. The denominator is the same for both.
    """
    if s.w2 is None:
        raise ValueError("garbage expectation needs a scenario with w2 set")
    if bound == BOUND_W12_MINUS_W2:
        upper = s.w12 - s.w2
    elif bound == BOUND_W12_MINUS_W1:
        upper = s.w12 - s.w1
    else:
        raise ValueError(f"unknown bound {bound!r}")
    spare = s.q1 - s.w1
    num = sum(i * choose(spare, i) for i in range(1, max(upper, 0) + 1))
    den = choose(s.q1, s.w1) + choose(s.q1, s.w12 - s.w2)
    return Fraction(num, den)


def brute_force_expectation(s: CapacityScenario, mode: str = "offsolution") -> Fraction:
    """Independent enumeration oracle over the same counting model.

    The denominator is found by listing both allocation families (W1-subsets
    and, depending on mode, W12- or (W12-W2)-subsets of the Q1 slots). The
    numerator enumerates every nonempty subset of the slots outside the own
    basis up to the mode's size limit and sums their sizes. No binomial
    formula is used anywhere.
    """
    if s.q1 > BRUTE_FORCE_MAX_Q1:
        raise ValueError(f"enumeration bound exceeded: q1={s.q1} > {BRUTE_FORCE_MAX_Q1}")
    slots = range(s.q1)
    own = set(range(s.w1))
    outside = [slot for slot in slots if slot not in own]
    if mode == "offsolution":
        second_family_size = s.w12
        limit = len(outside)
    elif mode == "garbage":
        if s.w2 is None:
            raise ValueError("garbage mode needs a scenario with w2 set")
        second_family_size = s.w12 - s.w2
        limit = s.w12 - s.w2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    family_own = list(itertools.combinations(slots, s.w1))
    family_second = list(itertools.combinations(slots, second_family_size))
    numerator = 0
    for size in range(1, max(limit, 0) + 1):
        for sub in itertools.combinations(outside, size):
            numerator += len(sub)
    return Fraction(numerator, len(family_own) + len(family_second))


def takfl_preservation_check(s: CapacityScenario) -> dict:
    """Count own-basis slots displaced under the task-arithmetic allocation rule.

    The rule keeps the student's own W1-slot basis untouched and lets the
    teacher fill min(W2, W12) designated slots drawn from the remaining
    capacity (capped by what remains). The returned count is computed by
    explicit set intersection and is always 0; it is exposed as a check so
    the allocation model stays inspectable.
    """
    own = set(range(s.w1))
    free = [slot for slot in range(s.q1) if slot not in own]
    w2 = s.w2 if s.w2 is not None else s.w12
    quota = min(w2, s.w12, len(free))
    teacher_slots = set(free[:quota])
    return {"own_basis_misallocated": len(own & teacher_slots)}


def garbage_audit(s: CapacityScenario) -> dict:
    """Metadata comparing both garbage-bound readings, plus the known audit case."""
    default = ved_garbage_expectation(s, bound=BOUND_W12_MINUS_W2)
    alternate = ved_garbage_expectation(s, bound=BOUND_W12_MINUS_W1)
    meta = {
        "bound_w12_minus_w2": str(default),
        "bound_w12_minus_w1": str(alternate),
    }
    if (s.q1, s.w1, s.w12, s.w2) == GARBAGE_AUDIT_CASE:
        meta["known_worked_value"] = str(GARBAGE_AUDIT_QUOTED)
        meta["matches_known_worked_value"] = bool(
            default == GARBAGE_AUDIT_QUOTED or alternate == GARBAGE_AUDIT_QUOTED
        )
    return meta
