"""Simulated evaluation backend: synthetic trajectories with known ground truth."""

from __future__ import annotations

import random
from typing import Sequence

from boad.archive import SubAgentSpec
from boad.rng import substream
from boad.simenv.world import WorldModel, WorldError
from boad.trajectory import (
    ORCHESTRATOR,
    OrchestratorPlan,
    Segment,
    SimTrajectory,
    Step,
    TaskInstance,
)

TASK_REF_PREFIX = "task:"


def simulate_trajectory(
    world: WorldModel,
    subset: Sequence[str],
    task: Sequence[str] | frozenset[str],
    rng: random.Random,
    *,
    instance_id: str = "sim",
    problem: str = "",
    names: dict[str, str] | None = None,
    max_steps: int | None = None,
) -> SimTrajectory:
    """Invoke each arm once, in subset order, and draw role coverage.

    Draw order is fixed: for each arm, one uniform per world role (in
    ``world.roles`` order); then one uniform per required role (sorted) for
    the orchestrator's own baseline attempt.
    """
    subset = list(subset)
    for arm in subset:
        world.skills_of(arm)
    required = frozenset(task)
    names = names or {}

    achieved: dict[str, tuple[str, ...]] = {}
    for arm in subset:
        got = []
        for role in world.roles:
            u = rng.random()
            if u < world.skill(arm, role):
                got.append(role)
        achieved[arm] = tuple(got)
    baseline_hit = {role: rng.random() < world.baseline.get(role, 0.0) for role in sorted(required)}

    steps = [Step(ORCHESTRATOR, "Read the problem description.", problem or f"Issue {instance_id}.")]
    segments: list[Segment] = []
    horizon = max_steps if max_steps is not None else 10**9
    ground_truth: dict[str, tuple[str, ...]] = {}
    for arm in subset:
        name = names.get(arm, arm)
        work = [r for r in world.roles if world.skill(arm, r) > 0.0]
        block = 1 + len(work) + 1
        # keep one slot for the forced submission
        if len(steps) + block > horizon - 1:
            break
        steps.append(Step(
            ORCHESTRATOR,
            f"<function={name}>\n<parameter=context>{problem or instance_id}</parameter>\n</function>",
            f"Delegated to subagent {name}.",
        ))
        start = len(steps)
        for role in work:
            if role in achieved[arm]:
                tag = "achieved required role" if role in required else "achieved role (not required)"
            else:
                tag = "did not achieve role"
            steps.append(Step(arm, f"Work on {role}.", f"{tag} '{role}'"))
        findings = ", ".join(achieved[arm]) or "nothing useful"
        steps.append(Step(arm, "submit_subagent", f"Report: {findings}."))
        segments.append(Segment(arm, start, len(steps) - start))
        ground_truth[arm] = achieved[arm]
    for arm in subset:
        ground_truth.setdefault(arm, ())

    covered = all(
        baseline_hit[role] or any(role in ground_truth[a] for a in subset) for role in required
    )
    success = int(covered)
    verdict = "all tests pass" if success else "tests fail"
    steps.append(Step(ORCHESTRATOR, "submit", f"Patch submitted; {verdict}."))
    traj = SimTrajectory(
        instance_id=instance_id,
        subset=subset,
        steps=steps,
        segments=segments,
        submitted=True,
        success=success,
        required_roles=tuple(sorted(required)),
        ground_truth=ground_truth,
    )
    return traj.validate(max_steps)


def oracle_judge(trajectory: SimTrajectory, arm: str) -> int:
    """1 iff the arm achieved at least one of the task's required roles."""
    if arm not in trajectory.subset:
        raise ValueError(f"arm {arm!r} was not available in this trajectory")
    if not isinstance(trajectory, SimTrajectory):
        raise TypeError("the oracle judge needs simulator ground truth")
    return int(bool(set(trajectory.ground_truth.get(arm, ())) & set(trajectory.required_roles)))


def task_for(world: WorldModel, instance: TaskInstance) -> frozenset[str]:
    ref = instance.repo_ref
    if ref.startswith(TASK_REF_PREFIX):
        index = int(ref[len(TASK_REF_PREFIX):])
        if not 0 <= index < len(world.tasks):
            raise WorldError(f"{instance.instance_id}: no task #{index}")
        return world.tasks[index].required
    if ref.startswith("roles:"):
        return frozenset(r for r in ref[len("roles:"):].split(",") if r)
    raise WorldError(f"{instance.instance_id}: repo_ref {ref!r} does not name a simulated task")


def design_set(world: WorldModel, n: int = 12, seed: int = 0, max_steps: int = 100) -> list[TaskInstance]:
    """Synthetic design set: ``n`` instances with tasks drawn by weight."""
    rng = substream(seed, "design_set")
    weights = world.task_weights()
    out = []
    for i in range(n):
        index = rng.choices(range(len(world.tasks)), weights=weights)[0]
        roles = ", ".join(sorted(world.tasks[index].required))
        out.append(TaskInstance(
            instance_id=f"sim-{i:03d}",
            problem_statement=f"Synthetic issue {i}: resolving it needs {roles}.",
            repo_ref=f"{TASK_REF_PREFIX}{index}",
            max_steps=max_steps,
        ))
    return out


class SimulatedBackend:
    """Evaluation backend over a world model.

    Sub-agent specs map onto world arms by name. Randomness for each
    trajectory comes from the substream ``(seed, purpose, round, instance)``,
    so results do not depend on scheduling or on what ran before.
    """

    kind = "simulated"

    def __init__(self, world: WorldModel, seed: int = 0):
        self.world = world
        self.seed = seed

    def arm_world(self, subset: Sequence[SubAgentSpec]) -> WorldModel:
        return self.world.with_arms(
            {s.arm_id: self.world.skills_of(self.world.resolve(s.name)) for s in subset}
        )

    def run(
        self,
        plan: OrchestratorPlan,
        subset: Sequence[SubAgentSpec],
        instance: TaskInstance,
        round: int,
        purpose: str = "eval",
    ) -> SimTrajectory:
        world = self.arm_world(subset)
        rng = substream(self.seed, purpose, round, instance.instance_id)
        return simulate_trajectory(
            world,
            [s.arm_id for s in subset],
            task_for(self.world, instance),
            rng,
            instance_id=instance.instance_id,
            problem=instance.problem_statement,
            names={s.arm_id: s.name for s in subset},
            max_steps=instance.max_steps,
        )
