"""Per-arm credit: hindsight helpfulness labels and the success-rate proxy."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, Sequence

from boad.llm.gateway import ChatExchange, Gateway
from boad.llm.parsing import ParseError, parse_judge_response
from boad.llm.templates import render_template
from boad.simenv.backend import oracle_judge
from boad.trajectory import CreditReport, RoundRecord, SimTrajectory, Trajectory, TrajectoryLabel

JUDGE_TEMPLATE = "helpful_judge_v1"
FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Respond with exactly one ```yaml block "
    "containing `helpful: true` or `helpful: false` and a `reasoning: |` block scalar."
)


class CreditError(RuntimeError):
    pass


class JudgeError(CreditError):
    def __init__(self, message: str, arm_id: str | None = None, instance_id: str | None = None):
        where = f" [arm={arm_id}, instance={instance_id}]" if arm_id or instance_id else ""
        super().__init__(message + where)
        self.arm_id = arm_id
        self.instance_id = instance_id


class Judge(Protocol):
    kind: str

    def judge(self, trajectory: Trajectory, arm_id: str, tool_name: str) -> TrajectoryLabel: ...


def helpfulness_score(labels: Sequence[int]) -> float:
    if len(labels) == 0:
        raise ValueError("cannot score an empty label list")
    if any(lab not in (0, 1) for lab in labels):
        raise ValueError("labels must be binary")
    return sum(labels) / len(labels)


def success_rate_score(trajectories: Sequence[Trajectory], arm: str) -> float:
    """Fraction of successful trajectories among those that offered ``arm``.

    Whether the arm was ever invoked is ignored on purpose: this is the
    free-rider-prone proxy.
    """
    if not trajectories:
        raise ValueError("cannot score an empty trajectory list")
    for traj in trajectories:
        if arm not in traj.subset:
            raise CreditError(f"{arm!r} was not available in trajectory {traj.instance_id}")
    return sum(t.success for t in trajectories) / len(trajectories)


class OracleJudge:
    """Labels from simulator ground truth."""

    kind = "oracle"

    def judge(self, trajectory: Trajectory, arm_id: str, tool_name: str = "") -> TrajectoryLabel:
        if not isinstance(trajectory, SimTrajectory):
            raise CreditError("the oracle judge only works on simulated trajectories")
        label = oracle_judge(trajectory, arm_id)
        achieved = ", ".join(trajectory.ground_truth.get(arm_id, ())) or "nothing"
        return TrajectoryLabel(arm_id, trajectory.instance_id, label, "oracle", f"achieved: {achieved}")


class LLMJudge:
    """Renders the helpfulness prompt and parses the YAML verdict.

    One retry with a format reminder, then :class:`JudgeError`; there is no
    default label.
    """

    kind = "llm"

    def __init__(self, gateway: Gateway, model_name: str = "default", names: dict[str, str] | None = None):
        self.gateway = gateway
        self.model_name = model_name
        self.names = names or {}

    def prompt(self, trajectory: Trajectory, tool_name: str) -> str:
        return render_template(
            JUDGE_TEMPLATE,
            {"TRAJECTORIES": trajectory.render(self.names), "TOOL_NAME": tool_name},
        )

    def judge(self, trajectory: Trajectory, arm_id: str, tool_name: str = "") -> TrajectoryLabel:
        tool_name = tool_name or self.names.get(arm_id, arm_id)
        exchange = ChatExchange.user(
            self.prompt(trajectory, tool_name), model_name=self.model_name, template_id=JUDGE_TEMPLATE
        )
        reply = self.gateway.complete(exchange)
        try:
            label, reasoning = parse_judge_response(reply)
        except ParseError:
            reply = self.gateway.complete(exchange.followup(reply, FORMAT_REMINDER))
            try:
                label, reasoning = parse_judge_response(reply)
            except ParseError as exc:
                raise JudgeError(f"unparseable judge verdict: {exc}", arm_id, trajectory.instance_id) from exc
        return TrajectoryLabel(arm_id, trajectory.instance_id, label, "llm", reasoning)


def judge_trajectory(trajectory: Trajectory, arm: str, judge: Judge, tool_name: str = "") -> TrajectoryLabel:
    """Binary helpfulness label for one (trajectory, arm) pair.

    An arm that was offered but never invoked is unhelpful by definition, so
    it gets label 0 without consulting the judge.
    """
    if arm not in trajectory.subset:
        raise CreditError(f"{arm!r} was not in the subset of trajectory {trajectory.instance_id}")
    if not trajectory.submitted and trajectory.error is None:
        raise CreditError(f"trajectory {trajectory.instance_id} has not terminated")
    if not trajectory.invoked(arm):
        return TrajectoryLabel(arm, trajectory.instance_id, 0, judge.kind, "subagent was not called")
    return judge.judge(trajectory, arm, tool_name)


def build_credit_report(
    record: RoundRecord,
    metric: str,
    judge: Judge | None = None,
    names: dict[str, str] | None = None,
    parallelism: int = 1,
) -> CreditReport:
    if not record.trajectories:
        raise CreditError(f"round {record.round} has no trajectories")
    names = names or {}
    labels: dict[str, list[TrajectoryLabel]] = {}
    if metric == "success_rate":
        for arm in record.subset:
            labels[arm] = [
                TrajectoryLabel(arm, t.instance_id, t.success, "success_proxy") for t in record.trajectories
            ]
    elif metric == "helpfulness":
        if judge is None:
            raise CreditError("the helpfulness metric needs a judge")
        jobs = [(arm, t) for arm in record.subset for t in record.trajectories]

        def run(job):
            arm, traj = job
            try:
                return judge_trajectory(traj, arm, judge, names.get(arm, arm))
            except JudgeError:
                raise
            except Exception as exc:
                raise JudgeError(f"{type(exc).__name__}: {exc}", arm, traj.instance_id) from exc

        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                results = list(pool.map(run, jobs))
        else:
            results = [run(j) for j in jobs]
        for arm in record.subset:
            labels[arm] = []
        for (arm, _), lab in zip(jobs, results):
            labels[arm].append(lab)
    else:
        raise ValueError(f"unknown credit metric {metric!r}")
    scores = {arm: helpfulness_score([lab.label for lab in labs]) for arm, labs in labels.items()}
    return CreditReport(record.round, metric, labels, scores)
