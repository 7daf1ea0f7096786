"""Sub-agent generation and warm-up refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import yaml

from boad.archive import SpecError, SubAgentSpec
from boad.evaluation import GENERIC_PLAN, Backend, run_instance
from boad.llm.gateway import ChatExchange, Gateway
from boad.llm.parsing import (
    REFINABLE_FIELDS,
    ParseError,
    parse_subagent_document,
    parse_templates_document,
    parse_updates,
)
from boad.llm.templates import render_template
from boad.rng import substream
from boad.trajectory import OrchestratorPlan, TaskInstance

log = logging.getLogger(__name__)

GEN_TEMPLATE = "subagent_gen_v1"
TEMPLATES_TEMPLATE = "subagent_templates_v1"
REFINE_TEMPLATE = "warmup_refine_v1"


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    existing_arm_summaries: tuple[tuple[str, str], ...]
    feedback: str | None = None
    round: int = 0

    @classmethod
    def for_arms(cls, arms: Sequence[SubAgentSpec], round: int, feedback: str | None = None) -> "GenerationRequest":
        return cls(tuple((a.name, a.docstring) for a in arms), feedback, round)

    def previous_block(self) -> str:
        lines = ["PREVIOUS SUBAGENTS"]
        if self.existing_arm_summaries:
            lines += [f"- name: {n} — {d}" for n, d in self.existing_arm_summaries]
        else:
            lines.append("(none yet)")
        if self.feedback:
            lines += ["", "FEEDBACK FROM PREVIOUS ITERATIONS", self.feedback]
        return "\n".join(lines)


def unique_name(name: str, taken: set[str]) -> str:
    if name not in taken:
        return name
    i = 2
    while f"{name}_{i}" in taken:
        i += 1
    return f"{name}_{i}"


def _ask(gateway: Gateway, exchange: ChatExchange, parse, reminder: str):
    reply = gateway.complete(exchange)
    try:
        return parse(reply)
    except ParseError as exc:
        reply = gateway.complete(exchange.followup(reply, f"{reminder} Problem: {exc}"))
        try:
            return parse(reply)
        except ParseError as exc2:
            raise GenerationError(str(exc2)) from exc2


def generate_subagent(
    request: GenerationRequest,
    generator: Gateway,
    *,
    origin: str = "crp_generated",
    model_name: str = "default",
) -> SubAgentSpec:
    """Ask for one new tool document, then for its templates; validate both."""
    prompt = render_template(GEN_TEMPLATE, {"PREVIOUS_ITERATION_FEEBACK": request.previous_block()})
    tool = _ask(
        generator,
        ChatExchange.user(prompt, model_name=model_name, template_id=GEN_TEMPLATE),
        parse_subagent_document,
        "Output exactly ONE fenced YAML document with the tool under a single key, a docstring "
        "starting with [subagent], and a single required string argument named context.",
    )
    name = unique_name(tool["name"], {n for n, _ in request.existing_arm_summaries})
    description = yaml.safe_dump(
        {
            name: {
                "signature": f"{name} <context>",
                "docstring": tool["docstring"],
                "arguments": [{"name": "context", "type": "string",
                               "description": tool["context_description"], "required": True}],
                "subagent": True,
            }
        },
        sort_keys=False, allow_unicode=True, width=10_000,
    )
    feedback = "SUBAGENT DESCRIPTION\n```yaml\n" + description + "```"
    if request.feedback:
        feedback += "\n\n" + request.feedback
    prompt2 = render_template(TEMPLATES_TEMPLATE, {"PREVIOUS_ITERATION_FEEDBACK": feedback})
    system_template, instance_template = _ask(
        generator,
        ChatExchange.user(prompt2, model_name=model_name, template_id=TEMPLATES_TEMPLATE),
        parse_templates_document,
        "Output one fenced YAML block with system_template and instance_template; the "
        "instance_template must contain {{context}}.",
    )
    try:
        return SubAgentSpec(
            arm_id=name,
            name=name,
            docstring=tool["docstring"],
            context_description=tool["context_description"],
            instance_template=instance_template,
            system_template=system_template,
            created_round=request.round,
            origin=origin,
        ).validate()
    except SpecError as exc:
        raise GenerationError(str(exc)) from exc


# warm-up


@dataclass
class WarmupRound:
    index: int
    instance_id: str
    invoked: bool
    applied: dict[str, str] = field(default_factory=dict)
    dropped: list[str] = field(default_factory=list)
    skipped: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "instance_id": self.instance_id,
            "invoked": self.invoked,
            "applied": dict(self.applied),
            "dropped": list(self.dropped),
            "skipped": self.skipped,
        }


@dataclass
class WarmupState:
    spec: SubAgentSpec
    W: int
    history: list[WarmupRound] = field(default_factory=list)

    @property
    def rounds_done(self) -> int:
        return len(self.history)


def current_config_block(spec: SubAgentSpec) -> str:
    return "\n".join([
        "CURRENT SUBAGENT CONFIGURATION",
        f"name: {spec.name}",
        f"docstring: {spec.docstring}",
        f"context_description: {spec.context_description}",
        "instance_template:",
        spec.instance_template,
        "",
        "TRAJECTORIES",
    ])


def warmup_refine(
    spec: SubAgentSpec,
    design_set: Sequence[TaskInstance],
    W: int,
    backend: Backend,
    refiner: Gateway,
    *,
    seed: int = 0,
    round: int = 0,
    model_name: str = "default",
    on_round=None,
) -> WarmupState:
    """Run ``W`` single-arm trial runs, each followed by one refinement request.

    Forbidden edits are dropped mechanically: a sub-agent that was never
    called may not have its instance template rewritten. Unparseable replies
    and updates that would make the spec invalid leave it unchanged.
    """
    if W < 0:
        raise ValueError("W must be non-negative")
    if W > 0 and not design_set:
        raise ValueError("warm-up needs a non-empty design set")
    state = WarmupState(spec.validate(), W)
    for index in range(1, W + 1):
        rng = substream(seed, "warmup", round, spec.arm_id, index)
        instance = design_set[rng.randrange(len(design_set))]
        current = state.spec
        plan = OrchestratorPlan(GENERIC_PLAN, (current.arm_id,), False)
        traj = run_instance(backend, plan, [current], instance, round, purpose=f"warmup:{current.arm_id}:{index}")
        invoked = traj.invoked(current.arm_id)
        entry = WarmupRound(index, instance.instance_id, invoked)
        prompt = render_template(
            REFINE_TEMPLATE,
            {"TRAJECTORIES": current_config_block(current) + "\n" + traj.render({current.arm_id: current.name})},
        )
        reply = refiner.complete(ChatExchange.user(prompt, model_name=model_name, template_id=REFINE_TEMPLATE))
        try:
            updates = parse_updates(reply)
        except ParseError as exc:
            entry.skipped = f"unparseable refiner output: {exc}"
            log.info("warm-up %s round %d skipped: %s", current.name, index, exc)
            updates = {}
        if not invoked and "instance_template" in updates:
            updates.pop("instance_template")
            entry.dropped.append("instance_template")
        if updates:
            assert set(updates) <= set(REFINABLE_FIELDS)
            try:
                state.spec = replace(current, **updates).validate()
                entry.applied = updates
            except SpecError as exc:
                entry.skipped = f"update rejected: {exc}"
        state.history.append(entry)
        if on_round is not None:
            on_round(entry, state.spec)
    return state
