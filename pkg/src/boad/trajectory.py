"""Value types shared by evaluation, credit assignment and the simulator.

A trajectory is the ordered action/observation record of one task attempt.
Sub-agent invocations appear as contiguous segments of steps whose actor is
the sub-agent's arm id; the orchestrator's own steps carry the actor
``"orchestrator"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

ORCHESTRATOR = "orchestrator"
JUDGE_KINDS = ("oracle", "llm", "success_proxy")

CLEANUP_STEP = "After you have solved the issue, delete any test files or temporary files you created."
SUBMIT_STEP = "Use the submit tool to submit the changes to the repository."

_STEP_RE = re.compile(r"^(\d+)\.\s+(.*\S)\s*$")


class TrajectoryError(ValueError):
    pass


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class TaskInstance:
    instance_id: str
    problem_statement: str
    repo_ref: str = ""
    max_steps: int = 100

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError(f"{self.instance_id}: max_steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "problem_statement": self.problem_statement,
            "repo_ref": self.repo_ref,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskInstance":
        return cls(**d)


@dataclass(frozen=True)
class Step:
    actor: str
    action: str
    observation: str


@dataclass(frozen=True)
class Segment:
    arm_id: str
    start: int
    length: int


@dataclass
class Trajectory:
    instance_id: str
    subset: list[str]
    steps: list[Step] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)
    submitted: bool = False
    success: int = 0
    error: str | None = None

    def validate(self, max_steps: int | None = None) -> "Trajectory":
        if max_steps is not None and len(self.steps) > max_steps:
            raise TrajectoryError(
                f"{self.instance_id}: {len(self.steps)} steps exceed horizon {max_steps}"
            )
        if self.success not in (0, 1):
            raise TrajectoryError(f"{self.instance_id}: success must be 0 or 1")
        if self.success and not self.submitted:
            raise TrajectoryError(f"{self.instance_id}: success without submission")
        covered = -1
        for seg in sorted(self.segments, key=lambda s: s.start):
            if seg.length < 1 or seg.start <= covered or seg.start + seg.length > len(self.steps):
                raise TrajectoryError(f"{self.instance_id}: bad segment {seg}")
            if any(s.actor != seg.arm_id for s in self.steps[seg.start : seg.start + seg.length]):
                raise TrajectoryError(f"{self.instance_id}: segment {seg} has foreign actors")
            if seg.arm_id not in self.subset:
                raise TrajectoryError(f"{self.instance_id}: segment for unavailable arm {seg.arm_id}")
            covered = seg.start + seg.length - 1
        return self

    def invoked(self, arm_id: str) -> bool:
        return any(seg.arm_id == arm_id for seg in self.segments)

    def render(self, names: dict[str, str] | None = None) -> str:
        """Plain-text summary: main agent first, then sub-agent runs in call order."""
        names = names or {}
        lines = [f"Main agent trajectory (instance {self.instance_id}):"]
        for i, step in enumerate(self.steps):
            if step.actor == ORCHESTRATOR:
                lines.append(f"  [{i}] ACTION: {step.action}")
                lines.append(f"      OBSERVATION: {step.observation}")
        for seg in self.segments:
            label = names.get(seg.arm_id, seg.arm_id)
            lines.append(f"Subagent trajectory: {label} (steps {seg.start}-{seg.start + seg.length - 1}):")
            for i in range(seg.start, seg.start + seg.length):
                step = self.steps[i]
                lines.append(f"  [{i}] ACTION: {step.action}")
                lines.append(f"      OBSERVATION: {step.observation}")
        outcome = "resolved" if self.success else "not resolved"
        lines.append(f"Final outcome: submitted={str(self.submitted).lower()}, {outcome}")
        if self.error:
            lines.append(f"Error: {self.error}")
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "trajectory",
            "instance_id": self.instance_id,
            "subset": list(self.subset),
            "steps": [[s.actor, s.action, s.observation] for s in self.steps],
            "segments": [[s.arm_id, s.start, s.length] for s in self.segments],
            "submitted": self.submitted,
            "success": self.success,
            "error": self.error,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "Trajectory":
        common = dict(
            instance_id=d["instance_id"],
            subset=list(d["subset"]),
            steps=[Step(*s) for s in d["steps"]],
            segments=[Segment(*s) for s in d["segments"]],
            submitted=d["submitted"],
            success=d["success"],
            error=d.get("error"),
        )
        if d.get("kind") == "sim_trajectory":
            return SimTrajectory(
                **common,
                required_roles=tuple(d["required_roles"]),
                ground_truth={k: tuple(v) for k, v in d["ground_truth"].items()},
            )
        return Trajectory(**common)


@dataclass
class SimTrajectory(Trajectory):
    """Trajectory from the simulator, carrying what each arm actually achieved."""

    required_roles: tuple[str, ...] = ()
    ground_truth: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = super().to_dict()
        d["kind"] = "sim_trajectory"
        d["required_roles"] = list(self.required_roles)
        d["ground_truth"] = {k: list(v) for k, v in sorted(self.ground_truth.items())}
        return d


@dataclass(frozen=True)
class OrchestratorPlan:
    plan_text: str
    subset: tuple[str, ...]
    customized: bool

    def steps(self) -> list[str]:
        return [m.group(2) for m in map(_STEP_RE.match, self.plan_text.splitlines()) if m]

    def to_dict(self) -> dict:
        return {"plan_text": self.plan_text, "subset": list(self.subset), "customized": self.customized}

    @classmethod
    def from_dict(cls, d: dict) -> "OrchestratorPlan":
        return cls(d["plan_text"], tuple(d["subset"]), d["customized"])


def parse_plan(text: str, names: list[str] | None = None, min_steps: int = 3, max_steps: int = 7) -> list[str]:
    """Validate a numbered plain-text plan and return its step bodies.

    When ``names`` is given every name must appear as
    ``"Use the <name> subagent to"`` in some step.
    """
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise PlanError("empty plan")
    if any(ln.startswith("```") for ln in lines):
        raise PlanError("plan must be plain text without code fences")
    bodies = []
    for expected, line in enumerate(lines, start=1):
        m = _STEP_RE.match(line)
        if not m:
            raise PlanError(f"plan line does not start with a number and a period: {line!r}")
        if int(m.group(1)) != expected:
            raise PlanError(f"plan step numbered {m.group(1)}, expected {expected}")
        bodies.append(m.group(2))
    if not min_steps <= len(bodies) <= max_steps:
        raise PlanError(f"plan has {len(bodies)} steps; expected {min_steps} to {max_steps}")
    if len(bodies) < 2 or bodies[-2] != CLEANUP_STEP or bodies[-1] != SUBMIT_STEP:
        raise PlanError("plan must end with the cleanup step and the submit step")
    for name in names or []:
        if not any(f"Use the {name} subagent to" in b for b in bodies):
            raise PlanError(f"plan never delegates to subagent {name!r}")
    return bodies


@dataclass(frozen=True)
class TrajectoryLabel:
    arm_id: str
    instance_id: str
    label: int
    judge_kind: str
    reasoning: str | None = None

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.judge_kind not in JUDGE_KINDS:
            raise ValueError(f"unknown judge kind {self.judge_kind!r}")

    def to_dict(self) -> dict:
        return {
            "arm_id": self.arm_id,
            "instance_id": self.instance_id,
            "label": self.label,
            "judge_kind": self.judge_kind,
            "reasoning": self.reasoning,
        }


@dataclass
class CreditReport:
    round: int
    metric: str
    per_arm_labels: dict[str, list[TrajectoryLabel]]
    per_arm_score: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "metric": self.metric,
            "labels": {
                arm: [lab.to_dict() for lab in labs] for arm, labs in self.per_arm_labels.items()
            },
            "scores": dict(self.per_arm_score),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CreditReport":
        return cls(
            round=d["round"],
            metric=d["metric"],
            per_arm_labels={
                arm: [TrajectoryLabel(**lab) for lab in labs] for arm, labs in d["labels"].items()
            },
            per_arm_score=dict(d["scores"]),
        )


@dataclass
class RoundRecord:
    round: int
    subset: list[str]
    plan: OrchestratorPlan
    trajectories: list[Trajectory]
    credit: CreditReport | None = None

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "subset": list(self.subset),
            "plan": self.plan.to_dict(),
            "trajectories": [t.to_dict() for t in self.trajectories],
            "credit": self.credit.to_dict() if self.credit else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(
            round=d["round"],
            subset=list(d["subset"]),
            plan=OrchestratorPlan.from_dict(d["plan"]),
            trajectories=[Trajectory.from_dict(t) for t in d["trajectories"]],
            credit=CreditReport.from_dict(d["credit"]) if d.get("credit") else None,
        )
