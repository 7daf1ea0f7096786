"""UCB scoring, top-K arm selection and per-arm statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True)
class ArmStats:
    """Running label tally for one arm.

    ``sample_count`` counts individual per-trajectory labels, not rounds.
    """

    arm_id: str
    sample_count: int = 0
    label_sum: float = 0
    created_round: int = 0

    def __post_init__(self) -> None:
        if self.sample_count < 0:
            raise ValueError(f"{self.arm_id}: sample_count must be non-negative")
        if self.created_round < 0:
            raise ValueError(f"{self.arm_id}: created_round must be non-negative")
        if not 0 <= self.label_sum <= self.sample_count:
            raise ValueError(
                f"{self.arm_id}: label_sum {self.label_sum} outside [0, {self.sample_count}]"
            )

    @property
    def mean(self) -> float | None:
        if self.sample_count == 0:
            return None
        return self.label_sum / self.sample_count


@dataclass(frozen=True)
class SelectionResult:
    round: int
    chosen: tuple[str, ...]
    scores: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "chosen": list(self.chosen),
            # json has no infinity literal
            "scores": {k: ("inf" if math.isinf(v) else v) for k, v in sorted(self.scores.items())},
        }


def ucb_score(mean: float | None, n: int, t: int) -> float:
    """Optimistic score ``mean + sqrt(2 ln t / n)``; unvisited arms get +inf."""
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    if n < 0:
        raise ValueError(f"sample count must be non-negative, got {n}")
    if n == 0:
        if mean is not None:
            raise ValueError("an arm with no samples cannot have a mean")
        return math.inf
    if mean is None:
        raise ValueError(f"an arm with {n} samples needs a mean")
    if not 0.0 <= mean <= 1.0:
        raise ValueError(f"mean of binary labels must lie in [0, 1], got {mean}")
    return mean + math.sqrt(2.0 * math.log(t) / n)


def _order_key(stats: ArmStats, score: float) -> tuple:
    return (-score, stats.created_round, stats.arm_id)


def select_top_k(stats: Iterable[ArmStats], t: int, k: int) -> SelectionResult:
    """Pick the ``min(k, len(stats))`` arms with the highest UCB score.

    Ties break on ``created_round`` ascending, then ``arm_id`` ascending, so
    the result is a pure function of the inputs.
    """
    arms = list(stats)
    if not arms:
        raise ValueError("cannot select from an empty archive")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ids = [a.arm_id for a in arms]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate arm ids in stats")
    scores = {a.arm_id: ucb_score(a.mean, a.sample_count, t) for a in arms}
    ranked = sorted(arms, key=lambda a: _order_key(a, scores[a.arm_id]))
    chosen = tuple(a.arm_id for a in ranked[: min(k, len(arms))])
    return SelectionResult(round=t, chosen=chosen, scores=scores)


def record_samples(stats: ArmStats, labels: Sequence[int | float | bool]) -> ArmStats:
    if len(labels) == 0:
        raise ValueError(f"{stats.arm_id}: no labels to record")
    total = 0
    for label in labels:
        if label not in (0, 1):
            raise ValueError(f"{stats.arm_id}: labels must be binary, got {label!r}")
        total += int(label)
    return replace(
        stats,
        sample_count=stats.sample_count + len(labels),
        label_sum=stats.label_sum + total,
    )
