from __future__ import annotations

from pathlib import Path

import pytest

from boad.factory import (
    GenerationError,
    GenerationRequest,
    generate_subagent,
    unique_name,
    warmup_refine,
)
from boad.llm.gateway import Gateway
from boad.llm.mock import MockProvider, offline_scripts
from boad.simenv import SimulatedBackend, WorldModel, design_set

from conftest import make_spec

SAMPLE = (Path(__file__).parent / "samples" / "patch_editor_response.txt").read_text()
TEMPLATES = (
    "```yaml\nsystem_template: |\n  You are a patch editor.\n"
    "instance_template: |\n  Edit as described: {{context}}\n```"
)


def _generator(gen_replies, templates=TEMPLATES):
    mock = MockProvider(scripts={
        "subagent_gen_v1": list(gen_replies),
        "subagent_templates_v1": [templates, templates],
    })
    return mock, Gateway(mock)


def test_sample_document_becomes_spec():
    mock, gw = _generator([SAMPLE])
    spec = generate_subagent(GenerationRequest((), None, 3), gw)
    assert spec.name == "patch_editor" and spec.arm_id == "patch_editor"
    assert spec.created_round == 3
    assert spec.instance_template == "Edit as described: {{context}}\n"
    # the template request carries the accepted tool description
    assert "patch_editor:\n  signature: patch_editor <context>" in mock.calls[1].messages[0][1]


def test_two_documents_rejected_after_retry():
    mock, gw = _generator([SAMPLE + SAMPLE, SAMPLE + SAMPLE])
    with pytest.raises(GenerationError, match="exactly one"):
        generate_subagent(GenerationRequest(()), gw)
    assert len(mock.calls) == 2  # one templated retry


def test_missing_prefix_rejected():
    bad = SAMPLE.replace('"[subagent] Fixes', '"Fixes')
    _, gw = _generator([bad, bad])
    with pytest.raises(GenerationError, match=r"\[subagent\]"):
        generate_subagent(GenerationRequest(()), gw)


def test_retry_recovers():
    bad = SAMPLE.replace('"[subagent] Fixes', '"Fixes')
    mock, gw = _generator([bad, SAMPLE])
    assert generate_subagent(GenerationRequest(()), gw).name == "patch_editor"
    assert mock.calls[1].messages[-1][0] == "user" and "Problem:" in mock.calls[1].messages[-1][1]


def test_template_without_context_placeholder_fails():
    bad = TEMPLATES.replace("{{context}}", "(ctx)")
    _, gw = _generator([SAMPLE], templates=bad)
    with pytest.raises(GenerationError):
        generate_subagent(GenerationRequest(()), gw)


def test_name_collision_suffixed():
    _, gw = _generator([SAMPLE])
    request = GenerationRequest((("patch_editor", "[subagent] x"), ("patch_editor_2", "[subagent] y")))
    assert generate_subagent(request, gw).name == "patch_editor_3"
    assert unique_name("a", set()) == "a"


def test_prompt_lists_existing_arms():
    mock, gw = _generator([SAMPLE])
    arms = [make_spec("code_navigator"), make_spec("test_runner")]
    generate_subagent(GenerationRequest.for_arms(arms, 2), gw)
    prompt = mock.calls[0].messages[0][1]
    assert "- name: code_navigator — [subagent] Does the code_navigator job." in prompt
    assert "- name: test_runner — " in prompt


def test_offline_generator_avoids_existing(mock_gateway):
    names = []
    arms = []
    for r in range(4):
        spec = generate_subagent(GenerationRequest.for_arms(arms, r), mock_gateway)
        arms.append(spec)
        names.append(spec.name)
    assert len(set(names)) == 4


# warm-up


@pytest.fixture
def warm_world():
    return WorldModel.builtin("reference_world")


def _refiner(replies):
    mock = MockProvider(scripts={"warmup_refine_v1": replies})
    return mock, Gateway(mock)


def test_empty_updates_is_fixed_point(warm_world):
    spec = make_spec("code_navigator")
    mock, gw = _refiner(lambda ex: "```yaml\nupdates: {}\n```")
    state = warmup_refine(spec, design_set(warm_world, 12), 4, SimulatedBackend(warm_world), gw)
    assert state.spec == spec
    assert state.rounds_done == 4
    assert len(mock.calls) == 4


def test_docstring_only_update(warm_world):
    spec = make_spec("code_navigator")
    reply = "```yaml\nupdates:\n  docstring: \"[subagent] Maps the code base.\"\n```"
    _, gw = _refiner([reply] + ["```yaml\nupdates: {}\n```"] * 3)
    state = warmup_refine(spec, design_set(warm_world, 12), 4, SimulatedBackend(warm_world), gw)
    assert state.spec.docstring == "[subagent] Maps the code base."
    assert state.spec.instance_template == spec.instance_template
    assert state.spec.context_description == spec.context_description
    assert state.history[0].applied == {"docstring": "[subagent] Maps the code base."}


class NeverCalled:
    """Backend whose orchestrator never delegates."""

    def run(self, plan, subset, instance, round, purpose="eval"):
        from boad.trajectory import Step, Trajectory

        steps = [Step("orchestrator", "Read.", "ok"), Step("orchestrator", "submit", "done")]
        return Trajectory(instance.instance_id, [s.arm_id for s in subset], steps, [], True, 0)


def test_instance_template_edit_dropped_when_not_called(warm_world):
    spec = make_spec("code_navigator")
    reply = ("```yaml\nupdates:\n  instance_template: \"New: {{context}}\"\n"
             "  context_description: \"Exact file paths.\"\n```")
    _, gw = _refiner(lambda ex: reply)
    state = warmup_refine(spec, design_set(warm_world, 3), 2, NeverCalled(), gw)
    assert state.spec.instance_template == spec.instance_template
    assert state.spec.context_description == "Exact file paths."
    assert state.history[0].dropped == ["instance_template"]


def test_unparseable_and_invalid_updates_skipped(warm_world):
    spec = make_spec("code_navigator")
    replies = [
        "I think it is fine.",
        "```yaml\nupdates:\n  docstring: \"missing prefix\"\n```",
        "```yaml\nupdates:\n  instance_template: \"no placeholder\"\n```",
    ]
    _, gw = _refiner(replies)
    state = warmup_refine(spec, design_set(warm_world, 12), 3, SimulatedBackend(warm_world), gw)
    assert state.spec == spec
    assert all(h.skipped for h in state.history)


def test_warmup_zero_rounds_and_errors(warm_world):
    spec = make_spec("code_navigator")
    _, gw = _refiner([])
    assert warmup_refine(spec, [], 0, SimulatedBackend(warm_world), gw).spec == spec
    with pytest.raises(ValueError):
        warmup_refine(spec, [], 2, SimulatedBackend(warm_world), gw)


def test_warmup_prompt_shows_config_and_trajectory(warm_world):
    mock, gw = _refiner(lambda ex: "```yaml\nupdates: {}\n```")
    warmup_refine(make_spec("code_navigator"), design_set(warm_world, 12), 1, SimulatedBackend(warm_world), gw)
    prompt = mock.calls[0].messages[0][1]
    assert "name: code_navigator" in prompt
    assert "Main agent trajectory" in prompt or "Subagent trajectory" in prompt


def test_scripted_refiner_converges(warm_world, mock_gateway):
    spec = make_spec("code_navigator")
    state = warmup_refine(spec, design_set(warm_world, 12), 4, SimulatedBackend(warm_world), mock_gateway)
    applied = [h for h in state.history if h.applied]
    assert len(applied) == 1 and set(applied[0].applied) == {"docstring"}
