"""The growing archive of candidate sub-agents and its CRP expansion rule."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable

from boad.bandit import ArmStats

SUBAGENT_PREFIX = "[subagent]"
CONTEXT_PLACEHOLDER = "{{context}}"
ORIGINS = ("bootstrap", "crp_generated", "fixture")
SNAPSHOT_VERSION = 1
METRICS = ("helpfulness", "success_rate")

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class SpecError(ValueError):
    """A sub-agent specification violates its structural rules."""


class SnapshotError(ValueError):
    """Snapshot bytes are truncated, malformed or from another schema version."""


@dataclass(frozen=True)
class SubAgentSpec:
    arm_id: str
    name: str
    docstring: str
    context_description: str
    instance_template: str
    system_template: str = ""
    created_round: int = 0
    origin: str = "crp_generated"

    def validate(self) -> "SubAgentSpec":
        if not self.arm_id:
            raise SpecError("arm_id must be non-empty")
        if not _NAME_RE.match(self.name):
            raise SpecError(f"tool name {self.name!r} is not a simple identifier")
        if not self.docstring.startswith(SUBAGENT_PREFIX):
            raise SpecError(f"{self.name}: docstring must start with {SUBAGENT_PREFIX!r}")
        if CONTEXT_PLACEHOLDER not in self.instance_template:
            raise SpecError(f"{self.name}: instance_template lacks {CONTEXT_PLACEHOLDER}")
        if not self.context_description.strip():
            raise SpecError(f"{self.name}: context argument needs a description")
        if self.origin not in ORIGINS:
            raise SpecError(f"{self.name}: unknown origin {self.origin!r}")
        if self.created_round < 0:
            raise SpecError(f"{self.name}: created_round must be non-negative")
        return self

    def summary_line(self) -> str:
        return f"- name: {self.name} — {self.docstring}"

    def render_instance(self, context: str) -> str:
        return self.instance_template.replace(CONTEXT_PLACEHOLDER, context)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SubAgentSpec":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**data)


def crp_expansion_decision(theta: float, archive_size: int, random_draw: float) -> bool:
    """True iff ``random_draw < theta / (theta + archive_size)``."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    if archive_size < 0:
        raise ValueError("archive size must be non-negative")
    return random_draw < theta / (theta + archive_size)


@dataclass
class Archive:
    """Ordered set of arms plus their label statistics.

    ``metric`` names the credit metric that ``stats`` accumulate.
    """

    theta: float = 2.0
    round_cursor: int = 0
    metric: str = "helpfulness"
    arms: list[SubAgentSpec] = field(default_factory=list)
    stats: dict[str, ArmStats] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if {a.arm_id for a in self.arms} != set(self.stats) or len(self.arms) != len(self.stats):
            raise ValueError("stats keys must match arm ids exactly")

    def __len__(self) -> int:
        return len(self.arms)

    def __contains__(self, arm_id: object) -> bool:
        return arm_id in self.stats

    @property
    def arm_ids(self) -> list[str]:
        return [a.arm_id for a in self.arms]

    def get(self, arm_id: str) -> SubAgentSpec:
        for arm in self.arms:
            if arm.arm_id == arm_id:
                return arm
        raise KeyError(arm_id)

    def names(self) -> set[str]:
        return {a.name for a in self.arms}

    def add_arm(self, spec: SubAgentSpec) -> "Archive":
        """Register ``spec`` with fresh statistics, stamped with the current round."""
        if spec.arm_id in self.stats:
            raise SpecError(f"duplicate arm_id {spec.arm_id!r}")
        spec = replace(spec, created_round=self.round_cursor).validate()
        self.arms.append(spec)
        self.stats[spec.arm_id] = ArmStats(spec.arm_id, created_round=self.round_cursor)
        return self

    def update_stats(self, stats: ArmStats) -> None:
        if stats.arm_id not in self.stats:
            raise KeyError(stats.arm_id)
        self.stats[stats.arm_id] = stats

    def stats_list(self) -> list[ArmStats]:
        return [self.stats[a] for a in self.arm_ids]

    def rank_arms(self, metric: str, k: int) -> list[str]:
        return rank_arms(self, metric, k)

    # snapshot / restore

    def snapshot(self) -> bytes:
        doc = {
            "version": SNAPSHOT_VERSION,
            "theta": self.theta,
            "round_cursor": self.round_cursor,
            "metric": self.metric,
            "arms": [a.to_dict() for a in self.arms],
            "stats": [
                {"arm_id": s.arm_id, "sample_count": s.sample_count, "label_sum": s.label_sum}
                for s in self.stats_list()
            ],
        }
        return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")

    @classmethod
    def restore(cls, data: bytes) -> "Archive":
        return restore(data)


def _metric_key(metric: str) -> str:
    # accept both "helpfulness" and "helpfulness_mean"
    return metric[: -len("_mean")] if metric.endswith("_mean") else metric


def rank_arms(archive: Archive, metric: str, k: int) -> list[str]:
    """Top ``k`` sampled arms by mean, ties broken by (n desc, arm_id asc)."""
    metric = _metric_key(metric)
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if metric != archive.metric:
        raise ValueError(f"archive holds {archive.metric} statistics, not {metric}")
    return rank_stats(archive.stats_list(), k)


def rank_stats(stats: Iterable[ArmStats], k: int) -> list[str]:
    if k < 1:
        raise ValueError("k must be >= 1")
    sampled = [s for s in stats if s.sample_count > 0]
    sampled.sort(key=lambda s: (-s.mean, -s.sample_count, s.arm_id))
    return [s.arm_id for s in sampled[:k]]


_SNAPSHOT_KEYS = {"version", "theta", "round_cursor", "metric", "arms", "stats"}
_STATS_KEYS = {"arm_id", "sample_count", "label_sum"}


def restore(data: bytes) -> Archive:
    if not data:
        raise SnapshotError("empty snapshot")
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"unreadable snapshot: {exc}") from exc
    if not isinstance(doc, dict):
        raise SnapshotError("snapshot must be a mapping")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {doc.get('version')!r}")
    keys = set(doc)
    if keys - _SNAPSHOT_KEYS:
        raise SnapshotError(f"unknown snapshot fields: {sorted(keys - _SNAPSHOT_KEYS)}")
    missing = (_SNAPSHOT_KEYS - {"metric"}) - keys
    if missing:
        raise SnapshotError(f"missing snapshot fields: {sorted(missing)}")
    try:
        arms = [SubAgentSpec.from_dict(a) for a in doc["arms"]]
        created = {a.arm_id: a.created_round for a in arms}
        stats: dict[str, ArmStats] = {}
        for entry in doc["stats"]:
            if set(entry) != _STATS_KEYS:
                raise SnapshotError(f"bad stats entry fields: {sorted(entry)}")
            arm_id = entry["arm_id"]
            if arm_id not in created:
                raise SnapshotError(f"stats for unknown arm {arm_id!r}")
            stats[arm_id] = ArmStats(
                arm_id, entry["sample_count"], entry["label_sum"], created[arm_id]
            )
        return Archive(
            theta=doc["theta"],
            round_cursor=doc["round_cursor"],
            metric=doc.get("metric", "helpfulness"),
            arms=arms,
            stats=stats,
        )
    except SnapshotError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise SnapshotError(f"invalid snapshot contents: {exc}") from exc


def archive_from_stats(rows: Iterable[dict], metric: str = "helpfulness", theta: float = 2.0) -> Archive:
    """Build a fixture archive from ``{name, created_round, n, label_sum}`` rows."""
    archive = Archive(theta=theta, metric=metric)
    for row in rows:
        name = row["name"]
        spec = SubAgentSpec(
            arm_id=name,
            name=name,
            docstring=row.get("docstring", f"{SUBAGENT_PREFIX} {name.replace('_', ' ')}."),
            context_description=row.get("context_description", "Relevant issue details."),
            instance_template=row.get("instance_template", f"Your task as {name}: {CONTEXT_PLACEHOLDER}"),
            system_template=row.get("system_template", ""),
            created_round=row["created_round"],
            origin="fixture",
        ).validate()
        archive.arms.append(spec)
        archive.stats[name] = ArmStats(name, row["n"], row["label_sum"], row["created_round"])
    archive.round_cursor = max((a.created_round for a in archive.arms), default=0)
    return archive
