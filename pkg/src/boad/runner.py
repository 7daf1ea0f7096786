"""The outer optimization loop, its event log, resumption and bundle export."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterator

import yaml

from boad.archive import Archive, SubAgentSpec, crp_expansion_decision, rank_arms
from boad.bandit import ArmStats, record_samples, select_top_k
from boad.credit import LLMJudge, OracleJudge, build_credit_report
from boad.evaluation import LLMPlanner, PlanCache, build_orchestrator_plan, run_round
from boad.factory import GenerationError, GenerationRequest, generate_subagent, warmup_refine
from boad.llm.gateway import Gateway, HttpProvider, ProviderConfig
from boad.llm.mock import MockProvider, load_spec_pool, offline_scripts
from boad.rng import substream
from boad.scaffold import ScaffoldBackend
from boad.simenv.backend import SimulatedBackend, design_set
from boad.simenv.world import WorldModel
from boad.trajectory import RoundRecord, TaskInstance

log = logging.getLogger(__name__)

EVENT_KINDS = (
    "run_start", "expansion", "warmup_update", "selection", "plan_built",
    "trajectory_done", "credit_report", "stats_update", "run_end",
)
LOG_NAME = "events.jsonl"
SNAPSHOT_NAME = "snapshot.json"
GATEWAY_LOG_NAME = "gateway.jsonl"


class RunError(RuntimeError):
    pass


class LogCorruptError(RunError):
    def __init__(self, message: str, last_valid_seq: int):
        super().__init__(f"{message} (last valid sequence number: {last_valid_seq})")
        self.last_valid_seq = last_valid_seq


@dataclass
class RunConfig:
    budget: int = 20
    team_size: int = 3
    warmup_rounds: int = 4
    theta: float = 2.0
    bootstrap_size: int = 3
    design_set_size: int = 12
    instances_per_round: int | None = None  # None: the full design set every round
    credit_metric: str = "helpfulness"
    customized_orchestrator: bool = True
    expansion_enabled: bool = True
    evaluation_backend: str = "simulated"
    judge: str = "auto"
    world: str = "reference_world"
    provider: str = "mock"
    model_name: str = "default"  # executes orchestrator and sub-agents
    designer_model: str | None = None  # generation, refinement, planning; defaults to model_name
    judge_model: str | None = None  # helpfulness judge; defaults to model_name
    seed: int = 0
    export_top_k: int = 2
    parallelism: int = 1
    clock: str = "logical"
    design_set: list[TaskInstance] | None = None

    def __post_init__(self) -> None:
        self.credit_metric = self.credit_metric.replace("-", "_")
        problems = []
        if self.budget < 1:
            problems.append("budget must be >= 1")
        if self.team_size < 1:
            problems.append("team_size must be >= 1")
        if self.warmup_rounds < 0:
            problems.append("warmup_rounds must be >= 0")
        if not self.theta > 0:
            problems.append("theta must be > 0")
        if self.bootstrap_size < 1:
            problems.append("bootstrap_size must be >= 1")
        if self.design_set_size < 1:
            problems.append("design_set_size must be >= 1")
        if self.instances_per_round is not None and self.instances_per_round < 1:
            problems.append("instances_per_round must be >= 1")
        if self.credit_metric not in ("helpfulness", "success_rate"):
            problems.append(f"unknown credit metric {self.credit_metric!r}")
        if self.evaluation_backend not in ("simulated", "llm_scaffold"):
            problems.append(f"unknown backend {self.evaluation_backend!r}")
        if self.judge not in ("auto", "oracle", "llm"):
            problems.append(f"unknown judge {self.judge!r}")
        if self.provider not in ("mock", "http"):
            problems.append(f"unknown provider {self.provider!r}")
        if self.export_top_k < 1:
            problems.append("export_top_k must be >= 1")
        if self.clock not in ("logical", "wall"):
            problems.append(f"unknown clock {self.clock!r}")
        if self.design_set is not None:
            self.design_set = [i if isinstance(i, TaskInstance) else TaskInstance.from_dict(i) for i in self.design_set]
        if problems:
            raise ValueError("invalid run config: " + "; ".join(problems))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.design_set is not None:
            d["design_set"] = [i.to_dict() for i in self.design_set]
        return d


def load_world(ref: str) -> WorldModel:
    path = Path(ref)
    if path.suffix in (".yaml", ".yml", ".json") or path.exists():
        return WorldModel.load(path)
    return WorldModel.builtin(ref)


# event log


class EventLog:
    """Append-only JSONL sink; one record per line, sequence numbers strictly increasing."""

    def __init__(self, path: Path | None, clock: str = "logical", next_seq: int = 0):
        self.path = path
        self.clock = clock
        self.next_seq = next_seq
        self.events: list[dict] = []

    def emit(self, kind: str, round: int, payload: dict) -> dict:
        assert kind in EVENT_KINDS, kind
        seq = self.next_seq
        self.next_seq += 1
        stamp = seq if self.clock == "logical" else round_time()
        event = {"seq": seq, "kind": kind, "round": round, "payload": payload, "timestamp": stamp}
        line = json.dumps(event, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        self.events.append(event)
        return event


def round_time() -> float:
    return round(time.time(), 6)


def read_events(path: str | Path) -> list[dict]:
    """Parse and validate a log; refuses partial or out-of-order records."""
    raw = Path(path).read_bytes()
    if not raw:
        raise LogCorruptError("empty event log", -1)
    events: list[dict] = []
    last = -1
    lines = raw.split(b"\n")
    if lines[-1] != b"":
        raise LogCorruptError("log ends inside a record", last_valid(raw))
    for n, line in enumerate(lines[:-1], start=1):
        try:
            event = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise LogCorruptError(f"line {n} is not a valid record: {exc}", last) from exc
        if not isinstance(event, dict) or set(event) != {"seq", "kind", "round", "payload", "timestamp"}:
            raise LogCorruptError(f"line {n} does not match the event schema", last)
        if event["kind"] not in EVENT_KINDS:
            raise LogCorruptError(f"line {n} has unknown kind {event['kind']!r}", last)
        if event["seq"] != last + 1:
            raise LogCorruptError(f"line {n} has sequence {event['seq']}, expected {last + 1}", last)
        last = event["seq"]
        events.append(event)
    if events[0]["kind"] != "run_start":
        raise LogCorruptError("log does not begin with run_start", -1)
    return events


def last_valid(raw: bytes) -> int:
    last = -1
    for line in raw.split(b"\n")[:-1]:
        try:
            last = json.loads(line)["seq"]
        except Exception:
            break
    return last


# the loop


def world_pool(world: WorldModel) -> list[dict]:
    """Offline generator entries that the simulated world can back."""
    pool = [p for p in load_spec_pool() if p["name"] in world.arms]
    if not pool:
        raise RunError("no offline sub-agent template matches an arm of this world")
    return pool


def build_gateway(config: RunConfig, log_path: Path | None = None, pool: list[dict] | None = None) -> Gateway:
    if config.provider == "mock":
        provider = MockProvider(scripts=offline_scripts(pool, seed=config.seed))
        pconf = ProviderConfig(retry_budget=0)
    else:
        pconf = ProviderConfig.from_env()
        provider = HttpProvider(pconf)
    sink = None
    if log_path is not None:
        def sink(record):
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    return Gateway(provider, pconf, sink=sink)


class Optimizer:
    """Drives the bandit loop for one run directory (or purely in memory)."""

    def __init__(
        self,
        config: RunConfig,
        run_dir: str | Path | None = None,
        *,
        gateway: Gateway | None = None,
        backend=None,
        world: WorldModel | None = None,
    ):
        self.config = config
        self.run_dir = Path(run_dir) if run_dir is not None else None
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        self.world = world
        if config.evaluation_backend == "simulated" and self.world is None:
            self.world = load_world(config.world)
        self.gateway = gateway or build_gateway(
            config,
            self.run_dir / GATEWAY_LOG_NAME if self.run_dir else None,
            world_pool(self.world) if self.world is not None else None,
        )
        self.backend = backend or self._default_backend()
        self.design_set = config.design_set or self._default_design_set()
        self.archive = Archive(theta=config.theta, metric=config.credit_metric)
        self.planner = LLMPlanner(self.gateway, config.designer_model or config.model_name)
        self.plans = PlanCache()
        self.log = EventLog(self.log_path, config.clock)
        self.records: list[RoundRecord] = []
        self.finished = False

    @property
    def log_path(self) -> Path | None:
        return self.run_dir / LOG_NAME if self.run_dir else None

    def _default_backend(self):
        if self.config.evaluation_backend == "simulated":
            return SimulatedBackend(self.world, seed=self.config.seed)
        return ScaffoldBackend(self.gateway, self.config.model_name)

    def _default_design_set(self) -> list[TaskInstance]:
        if self.world is None:
            raise RunError("the scaffold backend needs an explicit design_set in the config")
        return design_set(self.world, self.config.design_set_size, self.config.seed)

    def judge(self):
        kind = self.config.judge
        if kind == "auto":
            kind = "oracle" if self.config.evaluation_backend == "simulated" else "llm"
        if kind == "oracle":
            return OracleJudge()
        return LLMJudge(self.gateway, self.config.judge_model or self.config.model_name, {a.arm_id: a.name for a in self.archive.arms})

    # phases

    def start(self) -> None:
        payload = {
            "config": self.config.to_dict(),
            "design_set": [i.to_dict() for i in self.design_set],
            "world": self.world.to_dict() if self.world is not None else None,
        }
        self.log.emit("run_start", 0, payload)
        self.archive.round_cursor = 0
        for _ in range(self.config.bootstrap_size):
            self._expand(0, origin="bootstrap")
        if not self.archive.arms:
            raise RunError("bootstrap produced no sub-agents")
        self.log.emit("stats_update", 0, {"arms": {}})

    def _expand(self, t: int, origin: str, crp: dict | None = None) -> None:
        payload = dict(crp or {})
        request = GenerationRequest.for_arms(self.archive.arms, t)
        try:
            spec = generate_subagent(request, self.gateway, origin=origin,
                                     model_name=self.config.designer_model or self.config.model_name)
        except GenerationError as exc:
            log.warning("round %d: generation failed: %s", t, exc)
            self.log.emit("expansion", t, {**payload, "origin": origin, "arm": None, "error": str(exc)})
            return

        def on_round(entry, current):
            self.log.emit("warmup_update", t, {
                "arm_id": current.arm_id, **entry.to_dict(),
                "spec": current.to_dict(),
            })

        state = warmup_refine(
            spec, self.design_set, self.config.warmup_rounds, self.backend, self.gateway,
            seed=self.config.seed, round=t, model_name=self.config.designer_model or self.config.model_name,
            on_round=on_round,
        )
        self.archive.add_arm(state.spec)
        added = self.archive.get(state.spec.arm_id)
        self.log.emit("expansion", t, {**payload, "origin": origin, "arm": added.to_dict(), "error": None})

    def step(self, t: int) -> RoundRecord:
        cfg = self.config
        self.archive.round_cursor = t
        if cfg.expansion_enabled:
            draw = substream(cfg.seed, t, "crp").random()
            prob = cfg.theta / (cfg.theta + len(self.archive))
            if crp_expansion_decision(cfg.theta, len(self.archive), draw):
                self._expand(t, "crp_generated", {"draw": draw, "probability": prob, "accepted": True})
            else:
                self.log.emit("expansion", t, {"draw": draw, "probability": prob, "accepted": False,
                                               "origin": "crp_generated", "arm": None, "error": None})

        selection = select_top_k(self.archive.stats_list(), t, cfg.team_size)
        self.log.emit("selection", t, selection.to_dict())
        subset = [self.archive.get(a) for a in selection.chosen]

        plan = self.plans.get(subset, cfg.customized_orchestrator, self.planner)
        self.log.emit("plan_built", t, plan.to_dict())

        instances = list(self.design_set)
        if cfg.instances_per_round and cfg.instances_per_round < len(instances):
            rng = substream(cfg.seed, t, "subsample")
            instances = rng.sample(instances, cfg.instances_per_round)
        record = run_round(t, subset, plan, instances, self.backend, cfg.parallelism)
        for traj in record.trajectories:
            self.log.emit("trajectory_done", t, traj.to_dict())

        names = {a.arm_id: a.name for a in subset}
        record.credit = build_credit_report(record, cfg.credit_metric, self.judge(), names, cfg.parallelism)
        self.log.emit("credit_report", t, record.credit.to_dict())

        updates = {}
        for arm in record.subset:
            labels = [lab.label for lab in record.credit.per_arm_labels[arm]]
            new = record_samples(self.archive.stats[arm], labels)
            self.archive.update_stats(new)
            updates[arm] = {"labels": labels, "sample_count": new.sample_count, "label_sum": new.label_sum}
        self.log.emit("stats_update", t, {"arms": updates})
        self.records.append(record)
        return record

    def run(self, stop_after: int | None = None) -> Archive:
        """Execute the remaining rounds; ``stop_after`` simulates an interruption."""
        if not self.log.events:
            self.start()
        t = self.archive.round_cursor + 1
        while t <= self.config.budget:
            if stop_after is not None and t > stop_after:
                return self.archive
            self.step(t)
            t += 1
        self.finish()
        return self.archive

    def finish(self) -> None:
        snapshot = self.archive.snapshot()
        if self.run_dir is not None:
            (self.run_dir / SNAPSHOT_NAME).write_bytes(snapshot)
        self.log.emit("run_end", self.config.budget, {
            "archive_size": len(self.archive),
            "top": rank_arms(self.archive, self.archive.metric, self.config.export_top_k),
        })
        self.finished = True

    # restoration

    @classmethod
    def from_snapshot(cls, config: RunConfig, snapshot: bytes, **kw) -> "Optimizer":
        """Continue from an archive snapshot (in memory; no prior event log)."""
        opt = cls(config, **kw)
        opt.archive = Archive.restore(snapshot)
        opt.log.emit("run_start", opt.archive.round_cursor, {"config": config.to_dict(), "resumed_from_snapshot": True})
        return opt

    @classmethod
    def resume(cls, log_path: str | Path, **kw) -> "Optimizer":
        log_path = Path(log_path)
        events = read_events(log_path)
        start = events[0]["payload"]
        config = RunConfig.from_dict(start["config"])
        world = WorldModel.from_dict(start["world"]) if start.get("world") else None
        opt = cls(config, log_path.parent, world=world, **kw)
        opt.design_set = [TaskInstance.from_dict(i) for i in start["design_set"]]
        if events[-1]["kind"] == "run_end":
            opt.log = EventLog(log_path, config.clock, events[-1]["seq"] + 1)
            opt.log.events = events
            opt.archive = replay_archive(events, config)
            opt.finished = True
            return opt
        commits = [i for i, e in enumerate(events) if e["kind"] == "stats_update"]
        if not commits:
            # crashed during bootstrap: start over
            log_path.write_bytes(b"")
            opt.log = EventLog(log_path, config.clock)
            return opt
        keep = events[: commits[-1] + 1]
        with open(log_path, "w", encoding="utf-8") as fh:
            for e in keep:
                fh.write(json.dumps(e, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n")
        opt.log = EventLog(log_path, config.clock, keep[-1]["seq"] + 1)
        opt.log.events = list(keep)
        opt.archive = replay_archive(keep, config)
        return opt


def replay_archive(events: list[dict], config: RunConfig) -> Archive:
    """Rebuild the archive from committed expansion and stats events."""
    archive = Archive(theta=config.theta, metric=config.credit_metric)
    for e in events:
        if e["kind"] == "expansion" and e["payload"].get("arm"):
            spec = SubAgentSpec.from_dict(e["payload"]["arm"])
            archive.round_cursor = spec.created_round
            archive.add_arm(spec)
        elif e["kind"] == "stats_update":
            for arm_id, upd in e["payload"]["arms"].items():
                old = archive.stats[arm_id]
                archive.update_stats(ArmStats(arm_id, upd["sample_count"], upd["label_sum"], old.created_round))
            archive.round_cursor = e["round"]
    return archive


def run_optimize(config: RunConfig, run_dir: str | Path | None = None, **kw) -> tuple[Archive, list[dict]]:
    opt = Optimizer(config, run_dir, **kw)
    archive = opt.run()
    return archive, opt.log.events


def resume(log_path: str | Path, **kw) -> tuple[Archive, list[dict]]:
    opt = Optimizer.resume(log_path, **kw)
    if not opt.finished:
        opt.run()
    return opt.archive, opt.log.events


# export


class ExportError(RuntimeError):
    pass


def export_top_k(
    archive: Archive,
    k: int,
    metric: str | None = None,
    planner: LLMPlanner | None = None,
    out: str | Path | None = None,
) -> dict:
    """Bundle the top-``k`` arms with a freshly planned customized orchestrator."""
    metric = metric or archive.metric
    top = rank_arms(archive, metric, k)
    if not top:
        raise ExportError("no sub-agent has been evaluated yet")
    specs = [archive.get(a) for a in top]
    plan = build_orchestrator_plan(specs, True, planner) if planner else None
    bundle = {
        "version": 1,
        "metric": archive.metric,
        "k": k,
        "subagents": [
            {**s.to_dict(), "sample_count": archive.stats[s.arm_id].sample_count,
             "mean": archive.stats[s.arm_id].mean}
            for s in specs
        ],
        "orchestrator_plan": plan.plan_text if plan else None,
    }
    if out is not None:
        Path(out).write_text(yaml.safe_dump(bundle, sort_keys=False, allow_unicode=True, width=100), encoding="utf-8")
    return bundle


def iter_rounds(events: list[dict]) -> Iterator[tuple[int, list[str]]]:
    for e in events:
        if e["kind"] == "selection":
            yield e["round"], e["payload"]["chosen"]
