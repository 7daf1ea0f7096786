"""Versioned prompt assets and single-pass ``{{NAME}}`` substitution.

Only the placeholders declared for an asset are substituted. Other
double-brace text inside an asset (the template-generation prompt quotes
``{{context}}`` and ``{{problem_statement}}`` as instructions to the model)
is literal and passes through untouched.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Mapping

TEMPLATE_VERSION = "v1"

ASSETS: dict[str, tuple[str, ...]] = {
    "warmup_refine_v1": ("TRAJECTORIES",),
    "subagent_gen_v1": ("PREVIOUS_ITERATION_FEEBACK",),
    "subagent_templates_v1": ("PREVIOUS_ITERATION_FEEDBACK",),
    "orchestrator_plan_v1": ("subagents_overview",),
    "helpful_judge_v1": ("TRAJECTORIES", "TOOL_NAME"),
}


class TemplateError(KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


@lru_cache(maxsize=None)
def load_template(asset_id: str) -> str:
    if asset_id not in ASSETS:
        raise TemplateError(f"unknown template asset {asset_id!r}")
    path = resources.files("boad.llm") / "templates" / TEMPLATE_VERSION / f"{asset_id}.txt"
    return path.read_text(encoding="utf-8")


def placeholders(asset_id: str) -> tuple[str, ...]:
    if asset_id not in ASSETS:
        raise TemplateError(f"unknown template asset {asset_id!r}")
    return ASSETS[asset_id]


def render_template(asset_id: str, bindings: Mapping[str, str]) -> str:
    """Substitute every declared placeholder exactly once, without re-expansion."""
    declared = placeholders(asset_id)
    missing = [name for name in declared if name not in bindings]
    if missing:
        raise TemplateError(f"{asset_id}: missing binding for {', '.join(missing)}")
    extra = sorted(set(bindings) - set(declared))
    if extra:
        raise TemplateError(f"{asset_id}: unexpected binding {', '.join(extra)}")
    pattern = re.compile(r"\{\{(" + "|".join(re.escape(n) for n in declared) + r")\}\}")
    # one regex pass over the asset: bound text is never scanned again
    return pattern.sub(lambda m: str(bindings[m.group(1)]), load_template(asset_id))
