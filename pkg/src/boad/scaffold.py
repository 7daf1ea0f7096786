"""Gateway-driven agent scaffold that exposes sub-agents as XML-style tools.

The orchestrator and each sub-agent talk in the SWE-agent function-call
convention (``<function=name><parameter=context>...</parameter></function>``).
Sub-agents receive only their rendered instance template and report back
through ``submit_subagent``; they never see the orchestrator's history.

Repository tools (shell, editor) and test execution are not wired in; calls to
them are answered with an "unavailable" observation. Task success comes from
an optional grader and defaults to 0.
"""

from __future__ import annotations

import re
from typing import Callable, Sequence

from boad.archive import SubAgentSpec
from boad.llm.gateway import ChatExchange, Gateway
from boad.trajectory import ORCHESTRATOR, OrchestratorPlan, Segment, Step, TaskInstance, Trajectory

_CALL_RE = re.compile(r"<function=([\w-]+)>(.*?)</function>", re.S)
_PARAM_RE = re.compile(r"<parameter=([\w-]+)>(.*?)</parameter>", re.S)

CALL_FORMAT = """If you choose to call a function, you must ONLY reply in the following format with NO suffix:
Provide any reasoning for the function call here.
<function=example_function_name>
<parameter=example_parameter_1>value_1</parameter>
</function>"""

SUBMIT_SUBAGENT_DOC = """---- BEGIN FUNCTION #1: submit_subagent ----
Description: Return your findings or a summary of your changes to the main agent and finish.
Parameters:
  (1) result (string, required): The complete report for the main agent.
---- END FUNCTION #1 ----"""


def parse_call(text: str) -> tuple[str, dict[str, str]] | None:
    m = _CALL_RE.search(text)
    if not m:
        return None
    params = {k: v.strip() for k, v in _PARAM_RE.findall(m.group(2))}
    return m.group(1), params


def tool_docs(subset: Sequence[SubAgentSpec]) -> str:
    blocks = []
    for i, spec in enumerate(subset, start=1):
        blocks.append(
            f"---- BEGIN FUNCTION #{i}: {spec.name} ----\n"
            f"Description: {spec.docstring}\n"
            f"Parameters:\n  (1) context (string, required): {spec.context_description}\n"
            f"---- END FUNCTION #{i} ----"
        )
    n = len(subset) + 1
    blocks.append(
        f"---- BEGIN FUNCTION #{n}: submit ----\n"
        "Description: Submit the current changes to the repository and finish.\n"
        "No parameters are required for this function.\n"
        f"---- END FUNCTION #{n} ----"
    )
    return "\n".join(blocks)


def orchestrator_prompts(plan: OrchestratorPlan, subset: Sequence[SubAgentSpec], instance: TaskInstance) -> tuple[str, str]:
    system = (
        "You are a helpful assistant that can interact with a computer to solve tasks.\n\n"
        "You have access to the following functions:\n" + tool_docs(subset) + "\n\n" + CALL_FORMAT
    )
    user = (
        "Consider the following PR description:\n\n"
        f"<pr_description>\n{instance.problem_statement}\n</pr_description>\n\n"
        "Make the minimal changes to non-test files so that the requirements in the "
        "<pr_description> are met. Follow this process:\n"
        f"{plan.plan_text}\nYou MUST follow the plan exactly."
    )
    return system, user


class ScaffoldBackend:
    kind = "llm_scaffold"

    def __init__(
        self,
        gateway: Gateway,
        model_name: str = "default",
        grader: Callable[[TaskInstance, Trajectory], int] | None = None,
        subagent_step_limit: int = 20,
    ):
        self.gateway = gateway
        self.model_name = model_name
        self.grader = grader
        self.subagent_step_limit = subagent_step_limit

    def _exchange(self, messages: list[tuple[str, str]], template_id: str) -> ChatExchange:
        return ChatExchange(tuple(messages), model_name=self.model_name, template_id=template_id)

    def _run_subagent(self, spec: SubAgentSpec, context: str, instance: TaskInstance, budget: int) -> tuple[list[Step], str]:
        system = (spec.system_template or "You are a helpful assistant.\n{{command_docs}}")
        system = system.replace("{{command_docs}}", SUBMIT_SUBAGENT_DOC).replace(
            "{{problem_statement}}", instance.problem_statement
        )
        messages: list[tuple[str, str]] = [("system", system), ("user", spec.render_instance(context))]
        steps: list[Step] = []
        limit = min(budget, self.subagent_step_limit)
        while len(steps) < limit:
            reply = self.gateway.complete(self._exchange(messages, "scaffold_subagent"))
            call = parse_call(reply)
            if call and call[0] == "submit_subagent":
                result = call[1].get("result", "")
                steps.append(Step(spec.arm_id, reply, "Subagent submitted."))
                return steps, result
            obs = (f"Tool {call[0]!r} is not available in this scaffold." if call
                   else "No function call found; use the required format.")
            steps.append(Step(spec.arm_id, reply, obs))
            messages += [("assistant", reply), ("user", obs)]
        return steps, "Subagent stopped without submitting."

    def run(self, plan: OrchestratorPlan, subset: Sequence[SubAgentSpec], instance: TaskInstance,
            round: int, purpose: str = "eval") -> Trajectory:
        by_name = {s.name: s for s in subset}
        system, user = orchestrator_prompts(plan, subset, instance)
        messages: list[tuple[str, str]] = [("system", system), ("user", user)]
        traj = Trajectory(instance.instance_id, [s.arm_id for s in subset])
        horizon = instance.max_steps
        while len(traj.steps) < horizon - 1:
            reply = self.gateway.complete(self._exchange(messages, "scaffold_orchestrator"))
            call = parse_call(reply)
            if call and call[0] == "submit":
                traj.steps.append(Step(ORCHESTRATOR, reply, "Submitted."))
                traj.submitted = True
                break
            if call and call[0] in by_name:
                spec = by_name[call[0]]
                traj.steps.append(Step(ORCHESTRATOR, reply, f"Delegated to subagent {spec.name}."))
                start = len(traj.steps)
                budget = horizon - 1 - start
                if budget < 1:
                    break
                sub_steps, result = self._run_subagent(spec, call[1].get("context", ""), instance, budget)
                traj.steps.extend(sub_steps)
                traj.segments.append(Segment(spec.arm_id, start, len(sub_steps)))
                obs = f"Subagent {spec.name} returned:\n{result}"
            elif call:
                obs = f"Tool {call[0]!r} is not available in this scaffold."
                traj.steps.append(Step(ORCHESTRATOR, reply, obs))
            else:
                obs = "No function call found; use the required format."
                traj.steps.append(Step(ORCHESTRATOR, reply, obs))
            messages += [("assistant", reply), ("user", obs)]
        if not traj.submitted:
            # submission is forced at the horizon
            traj.steps.append(Step(ORCHESTRATOR, "<function=submit>\n</function>", "Submitted at the step limit."))
            traj.submitted = True
        traj.success = int(self.grader(instance, traj)) if self.grader else 0
        return traj.validate(horizon)
