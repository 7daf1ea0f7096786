from __future__ import annotations

from importlib import resources

import pytest
import yaml

from boad.archive import SubAgentSpec, archive_from_stats
from boad.llm.gateway import Gateway, ProviderConfig
from boad.llm.mock import MockProvider, offline_scripts
from boad.simenv.world import WorldModel


def make_spec(name: str, created_round: int = 0, **kw) -> SubAgentSpec:
    return SubAgentSpec(
        arm_id=kw.pop("arm_id", name),
        name=name,
        docstring=kw.pop("docstring", f"[subagent] Does the {name} job."),
        context_description=kw.pop("context_description", "What to work on."),
        instance_template=kw.pop("instance_template", "Your task: {{context}}"),
        created_round=created_round,
        **kw,
    )


@pytest.fixture
def reference_rows():
    text = (resources.files("boad") / "data" / "reference_subagent_stats.yaml").read_text()
    return yaml.safe_load(text)["arms"]


@pytest.fixture
def reference_archive(reference_rows):
    return archive_from_stats(reference_rows)


@pytest.fixture
def reference_world():
    return WorldModel.builtin("reference_world")


@pytest.fixture
def free_rider_world():
    return WorldModel.builtin("free_rider_world")


@pytest.fixture
def mock_gateway():
    provider = MockProvider(scripts=offline_scripts(seed=0))
    return Gateway(provider, ProviderConfig(retry_budget=0))
