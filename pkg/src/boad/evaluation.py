"""Orchestrator plans and single-round evaluation of a sub-agent team."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

from boad.archive import SubAgentSpec
from boad.llm.gateway import ChatExchange, Gateway, TransportError
from boad.llm.templates import render_template
from boad.trajectory import (
    CLEANUP_STEP,
    SUBMIT_STEP,
    OrchestratorPlan,
    PlanError,
    RoundRecord,
    TaskInstance,
    Trajectory,
    parse_plan,
)

log = logging.getLogger(__name__)

PLAN_TEMPLATE = "orchestrator_plan_v1"
TRANSPORT_RETRIES = 2

GENERIC_PLAN = "\n".join(
    f"{i}. {step}"
    for i, step in enumerate(
        [
            "Read the problem description and decide which of the available subagents can help "
            "with understanding, locating, reproducing, fixing or validating the issue.",
            "Whenever a subagent's documented purpose matches your current step, call it and pass "
            "everything it needs in the context argument.",
            "Implement the fix based on what you learned, keeping the change minimal.",
            "Check that the change resolves the problem description.",
            CLEANUP_STEP,
            SUBMIT_STEP,
        ],
        start=1,
    )
)


class BackendTransportError(RuntimeError):
    """The backend could not reach its executor; the attempt may be retried."""


TRANSIENT_ERRORS = (BackendTransportError, TransportError, TimeoutError, ConnectionError)


class Backend(Protocol):
    kind: str

    def run(
        self,
        plan: OrchestratorPlan,
        subset: Sequence[SubAgentSpec],
        instance: TaskInstance,
        round: int,
        purpose: str = "eval",
    ) -> Trajectory: ...


def subagents_overview(subset: Sequence[SubAgentSpec]) -> str:
    return "\n".join(spec.summary_line() for spec in subset)


class LLMPlanner:
    """Asks a model for a numbered plan that names every sub-agent in the team."""

    version = PLAN_TEMPLATE

    def __init__(self, gateway: Gateway, model_name: str = "default"):
        self.gateway = gateway
        self.model_name = model_name

    def exchange(self, subset: Sequence[SubAgentSpec]) -> ChatExchange:
        prompt = render_template(PLAN_TEMPLATE, {"subagents_overview": subagents_overview(subset)})
        return ChatExchange.user(prompt, model_name=self.model_name, template_id=PLAN_TEMPLATE)


def build_orchestrator_plan(
    subset: Sequence[SubAgentSpec],
    customized: bool,
    planner: LLMPlanner | None = None,
) -> OrchestratorPlan:
    if not subset:
        raise PlanError("cannot plan for an empty team")
    ids = tuple(s.arm_id for s in subset)
    if not customized:
        return OrchestratorPlan(GENERIC_PLAN, ids, False)
    if planner is None:
        raise PlanError("a customized plan needs a planner")
    names = [s.name for s in subset]
    exchange = planner.exchange(subset)
    reply = planner.gateway.complete(exchange)
    try:
        parse_plan(reply, names)
    except PlanError as exc:
        log.info("plan rejected (%s); retrying once", exc)
        reply = planner.gateway.complete(exchange.followup(
            reply,
            f"That plan is invalid: {exc}. Output only 3 to 7 numbered steps, naming every "
            "subagent as \"Use the <name> subagent to ...\" and ending with the cleanup and "
            "submit steps.",
        ))
        parse_plan(reply, names)
    return OrchestratorPlan(reply.strip(), ids, True)


class PlanCache:
    """Memoises plans by (team, customization, planner version)."""

    def __init__(self) -> None:
        self._plans: dict[tuple, OrchestratorPlan] = {}

    def get(self, subset: Sequence[SubAgentSpec], customized: bool, planner: LLMPlanner | None) -> OrchestratorPlan:
        version = planner.version if (customized and planner is not None) else "generic"
        key = (tuple((s.arm_id, s.name, s.docstring) for s in subset), customized, version)
        if key not in self._plans:
            self._plans[key] = build_orchestrator_plan(subset, customized, planner)
        return self._plans[key]


def _failed(instance: TaskInstance, subset: Sequence[SubAgentSpec], error: str) -> Trajectory:
    return Trajectory(
        instance_id=instance.instance_id,
        subset=[s.arm_id for s in subset],
        submitted=False,
        success=0,
        error=error,
    )


def run_instance(
    backend: Backend,
    plan: OrchestratorPlan,
    subset: Sequence[SubAgentSpec],
    instance: TaskInstance,
    round: int,
    retries: int = TRANSPORT_RETRIES,
    purpose: str = "eval",
) -> Trajectory:
    """Run one instance; transient failures are retried, then recorded as a failed trajectory."""
    attempt = 0
    while True:
        attempt += 1
        try:
            traj = backend.run(plan, subset, instance, round, purpose)
            return traj.validate(instance.max_steps)
        except TRANSIENT_ERRORS as exc:
            if attempt > retries:
                return _failed(instance, subset, f"transport failure after {attempt} attempts: {exc}")
            log.warning("instance %s attempt %d failed: %s", instance.instance_id, attempt, exc)
        except Exception as exc:  # degrade, never abort the round
            return _failed(instance, subset, f"{type(exc).__name__}: {exc}")


def run_round(
    t: int,
    subset: Sequence[SubAgentSpec],
    plan: OrchestratorPlan,
    instances: Sequence[TaskInstance],
    backend: Backend,
    parallelism: int = 1,
    retries: int = TRANSPORT_RETRIES,
) -> RoundRecord:
    """Evaluate the team on every instance; the record comes back without credit."""
    if not instances:
        raise ValueError("a round needs at least one task instance")
    if not subset:
        raise ValueError("a round needs a non-empty team")
    ids = {i.instance_id for i in instances}
    if len(ids) != len(instances):
        raise ValueError("instance ids must be unique within a design set")

    def one(instance: TaskInstance) -> Trajectory:
        return run_instance(backend, plan, subset, instance, t, retries)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            trajectories = list(pool.map(one, instances))
    else:
        trajectories = [one(i) for i in instances]
    return RoundRecord(t, [s.arm_id for s in subset], plan, trajectories)
