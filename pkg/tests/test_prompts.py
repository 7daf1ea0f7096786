from __future__ import annotations

from pathlib import Path

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from boad.llm.parsing import (
    ParseError,
    parse_judge_response,
    parse_subagent_document,
    parse_templates_document,
    parse_updates,
)
from boad.llm.templates import ASSETS, TemplateError, load_template, render_template

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
SAMPLES = HERE / "samples"
BINDINGS = yaml.safe_load((GOLDEN / "bindings.yaml").read_text())


@pytest.mark.parametrize("asset", sorted(ASSETS))
def test_golden_prompt_is_byte_exact(asset):
    expected = (GOLDEN / f"{asset}.txt").read_bytes()
    assert render_template(asset, BINDINGS[asset]).encode("utf-8") == expected


@pytest.mark.parametrize("asset", sorted(ASSETS))
def test_declared_placeholders_occur_in_assets(asset):
    text = load_template(asset)
    for name in ASSETS[asset]:
        assert "{{" + name + "}}" in text


def test_judge_prompt_contains_bindings_verbatim():
    out = render_template("helpful_judge_v1", {"TRAJECTORIES": "TRAJ <x>", "TOOL_NAME": "locator"})
    assert "TRAJ <x>" in out
    assert "TOOL TO ANALYZE: locator" in out
    assert '"locator" was helpful' in out
    assert "{{TOOL_NAME}}" not in out and "{{TRAJECTORIES}}" not in out


def test_missing_binding_names_placeholder():
    with pytest.raises(TemplateError, match="TOOL_NAME"):
        render_template("helpful_judge_v1", {"TRAJECTORIES": "x"})


def test_extra_binding_rejected():
    with pytest.raises(TemplateError, match="EXTRA"):
        render_template("warmup_refine_v1", {"TRAJECTORIES": "x", "EXTRA": "y"})


def test_unknown_asset():
    with pytest.raises(TemplateError):
        render_template("nope_v1", {})


def test_binding_with_braces_is_not_reexpanded():
    out = render_template(
        "helpful_judge_v1", {"TRAJECTORIES": "{{TOOL_NAME}}", "TOOL_NAME": "locator"}
    )
    assert "TRAJECTORIES:\n{{TOOL_NAME}}\n" in out


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=60))
def test_rendering_inserts_arbitrary_text_once(value):
    out = render_template("warmup_refine_v1", {"TRAJECTORIES": value})
    template = load_template("warmup_refine_v1")
    head, tail = template.split("{{TRAJECTORIES}}")
    assert out == head + value + tail


# parsers


def test_sample_subagent_document():
    doc = parse_subagent_document((SAMPLES / "patch_editor_response.txt").read_text())
    assert doc["name"] == "patch_editor"
    assert doc["signature"] == "patch_editor <context>"
    assert doc["docstring"].startswith("[subagent] Fixes a specific part of code")
    assert doc["context_description"].startswith("A string containing the specific file path")


def test_sample_judge_response():
    label, reasoning = parse_judge_response((SAMPLES / "judge_response.txt").read_text())
    assert label == 1
    assert reasoning.startswith("The main agent called code_navigator")


def test_judge_response_without_fence():
    assert parse_judge_response("helpful: false\nreasoning: |\n  never called\n") == (0, "never called")


PATCH = (SAMPLES / "patch_editor_response.txt").read_text()


@pytest.mark.parametrize(
    "text",
    [
        PATCH + "\n" + PATCH,  # two fenced documents
        PATCH.replace('"[subagent] Fixes', '"Fixes'),  # docstring prefix missing
        PATCH.replace("      required: true\n", "      required: false\n"),
        PATCH.replace("- name: context", "- name: ctx"),
        PATCH.replace("  subagent: true\n", ""),
        PATCH.replace('"patch_editor <context>"', '"patch_editor <file>"'),
        PATCH.replace(
            "      required: true\n",
            "      required: true\n    - name: extra\n      type: string\n      description: x\n      required: true\n",
        ),
        PATCH.replace("```yaml\n", "").replace("```", ""),  # no fence
        "```yaml\npatch_editor: [unclosed\n```",
    ],
)
def test_malformed_subagent_documents_rejected(text):
    with pytest.raises(ParseError):
        parse_subagent_document(text)


@pytest.mark.parametrize(
    "text",
    [
        "helpful: maybe\nreasoning: |\n  x\n",
        "helpful: 1\nreasoning: x\n",
        "reasoning: x\n",
        "```yaml\nhelpful: true\nreasoning: a\n```\n```yaml\nhelpful: false\nreasoning: b\n```",
        "The tool was helpful.",
    ],
)
def test_malformed_judge_responses_rejected(text):
    with pytest.raises(ParseError):
        parse_judge_response(text)


def test_templates_document():
    text = "```yaml\nsystem_template: |\n  You are a helper.\ninstance_template: |\n  Task: {{context}}\n```"
    assert parse_templates_document(text) == ("You are a helper.\n", "Task: {{context}}\n")
    with pytest.raises(ParseError):
        parse_templates_document(text.replace("{{context}}", "(context)"))
    with pytest.raises(ParseError):
        parse_templates_document("```yaml\nsystem_template: x\n```")


def test_updates_parsing():
    assert parse_updates("```yaml\nupdates: {}\n```") == {}
    assert parse_updates("```yaml\nupdates:\n  docstring: '[subagent] new'\n```") == {
        "docstring": "[subagent] new"
    }
    for bad in (
        "```yaml\nupdates:\n  name: other\n```",
        "```yaml\nchanges: {}\n```",
        "```yaml\nupdates:\n  docstring: ''\n```",
        "updates: {}",
    ):
        with pytest.raises(ParseError):
            parse_updates(bad)
