from __future__ import annotations

import random

import pytest

from boad.credit import (
    CreditError,
    JudgeError,
    LLMJudge,
    OracleJudge,
    build_credit_report,
    helpfulness_score,
    judge_trajectory,
    success_rate_score,
)
from boad.evaluation import GENERIC_PLAN, run_round
from boad.llm.gateway import Gateway
from boad.llm.mock import MockProvider
from boad.simenv import SimulatedBackend, design_set, simulate_trajectory
from boad.trajectory import OrchestratorPlan, RoundRecord, Step, Trajectory

from conftest import make_spec


def _traj(instance_id, subset, success, invoked=()):
    from boad.trajectory import Segment

    steps = [Step("orchestrator", "Read.", "ok")]
    segments = []
    for arm in invoked:
        segments.append(Segment(arm, len(steps), 1))
        steps.append(Step(arm, "work", "done"))
    steps.append(Step("orchestrator", "submit", "submitted"))
    return Trajectory(instance_id, list(subset), steps, segments, True, success)


def test_helpfulness_score():
    assert helpfulness_score([1, 0, 1, 1]) == 0.75
    assert helpfulness_score([0, 0, 0]) == 0.0
    assert round(helpfulness_score([1] * 1096 + [0] * 20), 3) == 0.982
    with pytest.raises(ValueError):
        helpfulness_score([])


def test_success_rate_score():
    trajs = [_traj(str(i), ["a"], s) for i, s in enumerate([1, 0, 1, 0])]
    assert success_rate_score(trajs, "a") == 0.5
    # never invoked, yet credited with every success
    assert success_rate_score([_traj(str(i), ["a", "b"], 1, invoked=["b"]) for i in range(3)], "a") == 1.0
    assert success_rate_score([_traj("x", ["a"], 0)], "a") == 0.0


def test_mock_llm_verdict_parsed():
    mock = MockProvider(scripts={"helpful_judge_v1": lambda ex: "helpful: true\nreasoning: |\n  used it\n"})
    judge = LLMJudge(Gateway(mock), names={"a": "locator"})
    label = judge_trajectory(_traj("i", ["a"], 0, invoked=["a"]), "a", judge)
    assert label.label == 1 and label.judge_kind == "llm"
    prompt = mock.calls[0].messages[0][1]
    assert "TOOL TO ANALYZE: locator" in prompt


def test_llm_judge_retries_once_then_fails():
    replies = ["not yaml at all", "helpful: false\nreasoning: |\n  no\n"]
    mock = MockProvider(scripts={"helpful_judge_v1": list(replies)})
    judge = LLMJudge(Gateway(mock))
    assert judge_trajectory(_traj("i", ["a"], 1, invoked=["a"]), "a", judge).label == 0
    assert len(mock.calls) == 2

    mock = MockProvider(scripts={"helpful_judge_v1": ["nope", "still nope"]})
    with pytest.raises(JudgeError, match="arm=a"):
        judge_trajectory(_traj("i", ["a"], 1, invoked=["a"]), "a", LLMJudge(Gateway(mock)))


def test_uninvoked_arm_gets_zero_without_consulting_judge():
    mock = MockProvider()  # any call would miss
    label = judge_trajectory(_traj("i", ["a", "b"], 1, invoked=["b"]), "a", LLMJudge(Gateway(mock)))
    assert label.label == 0
    assert mock.calls == []


def test_oracle_label_for_covering_arm(free_rider_world):
    traj = simulate_trajectory(
        free_rider_world.with_arms({"nav": {"localize": 1.0}}), ["nav"], {"localize", "edit"}, random.Random(0)
    )
    assert judge_trajectory(traj, "nav", OracleJudge()).label == 1


def test_judge_contract_errors():
    with pytest.raises(CreditError):
        judge_trajectory(_traj("i", ["a"], 1), "b", OracleJudge())
    unfinished = Trajectory("i", ["a"], [Step("orchestrator", "Read.", "ok")], [], False, 0)
    with pytest.raises(CreditError):
        judge_trajectory(unfinished, "a", OracleJudge())
    with pytest.raises(CreditError):
        OracleJudge().judge(_traj("i", ["a"], 1, invoked=["a"]), "a")


def _sim_round(world, names, n=12, seed=0):
    subset = [make_spec(n_) for n_ in names]
    plan = OrchestratorPlan(GENERIC_PLAN, tuple(names), False)
    return run_round(1, subset, plan, design_set(world, n, seed), SimulatedBackend(world, seed))


def test_report_shape(reference_world):
    record = _sim_round(reference_world, ["issue_analyzer", "code_navigator", "test_runner"])
    report = build_credit_report(record, "helpfulness", OracleJudge())
    assert set(report.per_arm_labels) == {"issue_analyzer", "code_navigator", "test_runner"}
    assert all(len(v) == 12 for v in report.per_arm_labels.values())


def test_success_rate_scores_uniform_within_round():
    trajs = [_traj(f"i{j}", ["a", "b", "c"], int(j < 6), invoked=["a"]) for j in range(12)]
    record = RoundRecord(1, ["a", "b", "c"], OrchestratorPlan(GENERIC_PLAN, ("a", "b", "c"), False), trajs)
    report = build_credit_report(record, "success_rate")
    assert report.per_arm_score == {"a": 0.5, "b": 0.5, "c": 0.5}


def test_free_rider_separated_by_helpfulness(free_rider_world):
    names = ["code_navigator", "precision_editor", "config_manager"]
    record = _sim_round(free_rider_world, names, n=24, seed=4)
    helpful = build_credit_report(record, "helpfulness", OracleJudge())
    proxy = build_credit_report(record, "success_rate")
    assert helpful.per_arm_score["config_manager"] == 0.0
    assert helpful.per_arm_score["code_navigator"] > 0
    assert helpful.per_arm_score["precision_editor"] > 0
    team_rate = sum(t.success for t in record.trajectories) / 24
    assert proxy.per_arm_score["config_manager"] == team_rate


def test_parallel_judging_matches_sequential(reference_world):
    record = _sim_round(reference_world, ["issue_analyzer", "code_fixer"])
    a = build_credit_report(record, "helpfulness", OracleJudge())
    b = build_credit_report(record, "helpfulness", OracleJudge(), parallelism=4)
    assert a.to_dict() == b.to_dict()


def test_report_errors():
    empty = RoundRecord(1, ["a"], OrchestratorPlan(GENERIC_PLAN, ("a",), False), [])
    with pytest.raises(CreditError):
        build_credit_report(empty, "helpfulness", OracleJudge())
    record = RoundRecord(1, ["a"], OrchestratorPlan(GENERIC_PLAN, ("a",), False), [_traj("i", ["a"], 1)])
    with pytest.raises(CreditError):
        build_credit_report(record, "helpfulness")
    with pytest.raises((CreditError, ValueError)):
        build_credit_report(record, "vibes", OracleJudge())
