"""Deterministic stand-in provider for offline runs and tests.

Resolution order for a request: the exact content-hash table, then a
scripted responder registered for the request's template id, then
:class:`MockMiss`. A responder is either a callable of the exchange (pure)
or a list of canned replies consumed in order (stateful, for tests).
"""

from __future__ import annotations

import re
import threading
from importlib import resources
from typing import Callable, Mapping, Sequence, Union

import yaml

from boad.llm.gateway import ChatExchange, ProtocolError

Responder = Union[Callable[[ChatExchange], str], list]


class MockMiss(ProtocolError):
    """No canned reply matches the request."""


class MockProvider:
    def __init__(
        self,
        table: Mapping[str, str] | None = None,
        scripts: Mapping[str, Responder] | None = None,
    ):
        self.table = dict(table or {})
        self.scripts: dict[str, Responder] = dict(scripts or {})
        self.calls: list[ChatExchange] = []
        self._lock = threading.Lock()

    def pin(self, exchange: ChatExchange, reply: str) -> None:
        self.table[exchange.content_hash()] = reply

    def send(self, exchange: ChatExchange) -> str:
        with self._lock:
            self.calls.append(exchange)
            key = exchange.content_hash()
            if key in self.table:
                return self.table[key]
            script = self.scripts.get(exchange.template_id or "")
            if isinstance(script, list):
                if not script:
                    raise MockMiss(f"scripted replies for {exchange.template_id} exhausted")
                return script.pop(0)
        if script is not None:
            return script(exchange)
        raise MockMiss(f"no mock reply for template {exchange.template_id!r} (hash {key[:12]})")


# scripted offline behaviour


def load_spec_pool() -> list[dict]:
    text = (resources.files("boad") / "data" / "spec_pool.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)["subagents"]


def _first_user(exchange: ChatExchange) -> str:
    return next(c for r, c in exchange.messages if r == "user")


def _base(name: str) -> str:
    return re.sub(r"_\d+$", "", name)


class _Literal(str):
    pass


def _literal_dumper():
    class Dumper(yaml.SafeDumper):
        pass

    def rep(dumper, data):
        return dumper.represent_scalar("tag:yaml.org,2002:str", str(data), style="|")

    Dumper.add_representer(_Literal, rep)
    return Dumper


REFINE_HINT = "Call it with the full issue text as soon as its step comes up."


def offline_scripts(pool: Sequence[dict] | None = None, seed: int = 0) -> dict[str, Callable[[ChatExchange], str]]:
    """Pure responders for every prompt asset used by an optimization run."""
    pool = list(pool or load_spec_pool())
    by_name = {p["name"]: p for p in pool}
    offset = seed % len(pool)
    order = pool[offset:] + pool[:offset]

    def generate(ex: ChatExchange) -> str:
        prompt = _first_user(ex)
        block = prompt.split("PREVIOUS SUBAGENTS", 1)[-1]
        existing = [_base(n) for n in re.findall(r"^- name: (\w+) — ", block, re.M)]
        choice = next((p for p in order if p["name"] not in existing), None)
        if choice is None:
            choice = order[len(existing) % len(order)]
        doc = {
            choice["name"]: {
                "signature": f"{choice['name']} <context>",
                "docstring": choice["docstring"],
                "arguments": [{"name": "context", "type": "string",
                               "description": choice["context_description"], "required": True}],
                "subagent": True,
            }
        }
        body = yaml.safe_dump(doc, sort_keys=False, allow_unicode=True, width=10_000)
        return (
            f"A {choice['name']} subagent covers a step none of the previous subagents own. "
            "Supported steps: explore, read/search; output: a concise report.\n"
            f"```yaml\n{body}```\n"
        )

    def templates(ex: ChatExchange) -> str:
        m = re.search(r"SUBAGENT DESCRIPTION\n```yaml\n(\w+):", _first_user(ex))
        if not m or _base(m.group(1)) not in by_name:
            return "I could not identify the subagent."
        entry = by_name[_base(m.group(1))]
        body = yaml.dump(
            {"system_template": _Literal(entry["system_template"]),
             "instance_template": _Literal(entry["instance_template"])},
            Dumper=_literal_dumper(), sort_keys=False, allow_unicode=True, width=10_000,
        )
        return f"Templates follow the base layout with the role filled in.\n```yaml\n{body}```\n"

    def plan(ex: ChatExchange) -> str:
        return scripted_plan(_first_user(ex))

    def refine(ex: ChatExchange) -> str:
        m = re.search(r"^docstring: (.*)$", _first_user(ex), re.M)
        if m and REFINE_HINT not in m.group(1):
            doc = {"updates": {"docstring": f"{m.group(1).rstrip()} {REFINE_HINT}"}}
            body = yaml.safe_dump(doc, sort_keys=False, allow_unicode=True, width=10_000)
            return f"The main agent needs a clearer trigger for this subagent.\n```yaml\n{body}```\n"
        return "The subagent is working as intended.\n```yaml\nupdates: {}\n```\n"

    def judge(ex: ChatExchange) -> str:
        return scripted_verdict(_first_user(ex))

    return {
        "subagent_gen_v1": generate,
        "subagent_templates_v1": templates,
        "orchestrator_plan_v1": plan,
        "warmup_refine_v1": refine,
        "helpful_judge_v1": judge,
        "scaffold_orchestrator": scaffold_orchestrator,
        "scaffold_subagent": scaffold_subagent,
    }


def scripted_plan(prompt: str) -> str:
    """A plan in the shape of the planner prompt's example, built from the listed team."""
    m = re.search(r"<available_subagents>\n(.*?)</available_subagents>", prompt, re.S)
    names = re.findall(r"^\s*- name: (\w+)", m.group(1), re.M) if m else []
    direct = [
        "Analyze the problem description and the findings so far to pin down the root cause.",
        "Design and implement the fix, keeping the change focused on the identified code.",
    ]
    room = max(0, 5 - len(names))
    steps = [f"Use the {n} subagent to handle its part of the problem and report back." for n in names]
    # interleave direct work after the first delegation
    steps = steps[:1] + direct[:room] + steps[1:]
    steps += [
        "After you have solved the issue, delete any test files or temporary files you created.",
        "Use the submit tool to submit the changes to the repository.",
    ]
    return "\n".join(f"{i}. {s}" for i, s in enumerate(steps, start=1))


def scripted_verdict(prompt: str) -> str:
    m = re.search(r"^TOOL TO ANALYZE: (\w+)", prompt, re.M)
    name = m.group(1) if m else ""
    helpful = False
    section = re.search(
        rf"^Subagent trajectory: {re.escape(name)} \(.*?(?=^Subagent trajectory: |^Final outcome:|\Z)",
        prompt, re.M | re.S,
    )
    if section and "achieved required role" in section.group(0):
        helpful = True
    reason = "It produced findings the main agent used." if helpful else "It did not move the main agent closer to a fix."
    return f"```yaml\nhelpful: {str(helpful).lower()}\nreasoning: |\n  {reason}\n```\n"


def scaffold_orchestrator(ex: ChatExchange) -> str:
    system = ex.messages[0][1]
    tools = re.findall(r"---- BEGIN FUNCTION #\d+: (\w+) ----", system)
    subagents = [t for t in tools if t != "submit"]
    done = sum(1 for r, _ in ex.messages if r == "assistant")
    if done < len(subagents):
        problem = re.search(r"<pr_description>\n(.*?)\n</pr_description>", _first_user(ex), re.S)
        context = problem.group(1) if problem else "See the problem description."
        return (f"Delegating to {subagents[done]}.\n<function={subagents[done]}>\n"
                f"<parameter=context>{context}</parameter>\n</function>")
    return "All steps are done.\n<function=submit>\n</function>"


def scaffold_subagent(ex: ChatExchange) -> str:
    task = _first_user(ex).strip().splitlines()[0][:200]
    return ("Reporting findings.\n<function=submit_subagent>\n"
            f"<parameter=result>Findings for: {task}</parameter>\n</function>")
