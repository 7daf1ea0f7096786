"""Ground-truth world model and its exact (closed-form) oracles.

Success follows a role-coverage model: for every role a task requires, each
invoked arm independently achieves it with its skill probability and the
orchestrator alone achieves it with the baseline probability; the task
succeeds iff every required role is covered.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

DEFAULT_BRUTE_FORCE_CAP = 10**6
_SUFFIX_RE = re.compile(r"_\d+$")


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    required: frozenset[str]
    weight: float = 1.0


@dataclass
class WorldModel:
    roles: tuple[str, ...]
    arms: dict[str, dict[str, float]]
    baseline: dict[str, float]
    tasks: list[Task] = field(default_factory=list)

    def __post_init__(self) -> None:
        roles = set(self.roles)
        if not roles:
            raise WorldError("a world needs at least one role")
        for arm_id, skills in self.arms.items():
            for role, p in skills.items():
                if role not in roles:
                    raise WorldError(f"{arm_id}: unknown role {role!r}")
                if not 0.0 <= p <= 1.0:
                    raise WorldError(f"{arm_id}: skill {p} outside [0, 1]")
        for role, p in self.baseline.items():
            if role not in roles or not 0.0 <= p <= 1.0:
                raise WorldError(f"bad baseline entry {role}: {p}")
        if not self.tasks:
            raise WorldError("a world needs at least one task")
        for task in self.tasks:
            if not task.required or not task.required <= roles:
                raise WorldError(f"task roles {sorted(task.required)} not a non-empty subset of roles")
            if not task.weight > 0:
                raise WorldError("task weights must be positive")

    # loading

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorldModel":
        unknown = set(d) - {"roles", "arms", "baseline", "tasks"}
        if unknown:
            raise WorldError(f"unknown world fields: {sorted(unknown)}")
        arms: dict[str, dict[str, float]] = {}
        for entry in d["arms"]:
            if entry["arm_id"] in arms:
                raise WorldError(f"duplicate arm {entry['arm_id']!r}")
            arms[entry["arm_id"]] = {r: float(p) for r, p in (entry.get("skills") or {}).items()}
        return cls(
            roles=tuple(d["roles"]),
            arms=arms,
            baseline={r: float(p) for r, p in (d.get("baseline") or {}).items()},
            tasks=[Task(frozenset(t["required"]), float(t.get("weight", 1.0))) for t in d["tasks"]],
        )

    def to_dict(self) -> dict:
        return {
            "roles": list(self.roles),
            "baseline": dict(self.baseline),
            "arms": [{"arm_id": a, "skills": dict(s)} for a, s in self.arms.items()],
            "tasks": [{"required": sorted(t.required), "weight": t.weight} for t in self.tasks],
        }

    @classmethod
    def load(cls, path: str | Path) -> "WorldModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    @classmethod
    def builtin(cls, name: str) -> "WorldModel":
        text = (resources.files("boad") / "data" / f"{name}.yaml").read_text(encoding="utf-8")
        return cls.from_dict(yaml.safe_load(text))

    # lookups

    def skill(self, arm_id: str, role: str) -> float:
        return self.skills_of(arm_id).get(role, 0.0)

    def skills_of(self, arm_id: str) -> dict[str, float]:
        try:
            return self.arms[arm_id]
        except KeyError:
            raise WorldError(f"unknown arm {arm_id!r}") from None

    def resolve(self, name: str) -> str:
        """World arm backing a sub-agent name; collision suffixes like ``_2`` are ignored."""
        if name in self.arms:
            return name
        base = _SUFFIX_RE.sub("", name)
        if base in self.arms:
            return base
        raise WorldError(f"no world arm for sub-agent {name!r}")

    def with_arms(self, arms: Mapping[str, Mapping[str, float]]) -> "WorldModel":
        return WorldModel(self.roles, {a: dict(s) for a, s in arms.items()}, dict(self.baseline), list(self.tasks))

    def task_weights(self) -> list[float]:
        total = sum(t.weight for t in self.tasks)
        return [t.weight / total for t in self.tasks]


def _check_subset(world: WorldModel, subset: Iterable[str]) -> list[str]:
    subset = list(subset)
    for arm in subset:
        world.skills_of(arm)
    return subset


def true_team_success(world: WorldModel, subset: Sequence[str], task: Iterable[str]) -> float:
    """Exact success probability of ``subset`` on a task needing roles ``task``."""
    subset = _check_subset(world, subset)
    prob = 1.0
    for role in sorted(set(task)):
        miss = 1.0 - world.baseline.get(role, 0.0)
        for arm in subset:
            miss *= 1.0 - world.skill(arm, role)
        prob *= 1.0 - miss
    return prob


def expected_team_success(world: WorldModel, subset: Sequence[str], tasks: Sequence[Task] | None = None) -> float:
    tasks = world.tasks if tasks is None else tasks
    total = sum(t.weight for t in tasks)
    return sum(t.weight * true_team_success(world, subset, t.required) for t in tasks) / total


def expected_contribution(world: WorldModel, arm_id: str, tasks: Sequence[Task] | None = None) -> float:
    """Probability the arm achieves at least one required role, i.e. its expected oracle label."""
    tasks = world.tasks if tasks is None else tasks
    skills = world.skills_of(arm_id)
    total = sum(t.weight for t in tasks)
    acc = 0.0
    for t in tasks:
        miss = 1.0
        for role in t.required:
            miss *= 1.0 - skills.get(role, 0.0)
        acc += t.weight * (1.0 - miss)
    return acc / total


def best_subset_oracle(
    world: WorldModel,
    arms: Iterable[str],
    k: int,
    tasks: Sequence[Task] | None = None,
    cap: int = DEFAULT_BRUTE_FORCE_CAP,
) -> tuple[tuple[str, ...], float]:
    """Exhaustive argmax of expected team success over all size-``min(k, |arms|)`` subsets.

    Ties go to the lexicographically smallest subset of sorted arm ids.
    """
    pool = sorted(set(_check_subset(world, arms)))
    if not pool:
        raise WorldError("no arms to choose from")
    size = min(k, len(pool))
    count = math.comb(len(pool), size)
    if count > cap:
        raise WorldError(f"{count} subsets exceed the brute-force cap of {cap}")
    best: tuple[str, ...] | None = None
    best_value = -1.0
    for combo in itertools.combinations(pool, size):
        value = expected_team_success(world, combo, tasks)
        if value > best_value + 1e-12:
            best, best_value = combo, value
    assert best is not None
    return best, best_value
