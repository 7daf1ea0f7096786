"""Metrics files and figures derived from a run's event log."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from boad.runner import RunConfig, read_events, replay_archive
from boad.simenv.policies import regret_curve
from boad.simenv.world import WorldModel

ARMS_FILE = "arms.csv"
SELECTION_FILE = "selection_counts.csv"
REGRET_FILE = "regret.csv"


@dataclass
class Report:
    files: list[Path] = field(default_factory=list)
    figures: list[Path] = field(default_factory=list)
    arms: list[dict] = field(default_factory=list)
    selection_counts: dict[str, int] = field(default_factory=dict)
    regret: list[tuple[int, float]] | None = None


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def regret_from_events(events: list[dict], world: WorldModel, k: int) -> list[tuple[int, float]]:
    """Regret of each committed selection against the arms available that round."""
    arm_skills: dict[str, dict] = {}
    created: dict[str, int] = {}
    for e in events:
        if e["kind"] == "expansion" and e["payload"].get("arm"):
            arm = e["payload"]["arm"]
            arm_skills[arm["arm_id"]] = world.skills_of(world.resolve(arm["name"]))
            created[arm["arm_id"]] = arm["created_round"]
    view = world.with_arms(arm_skills)
    committed = {e["round"] for e in events if e["kind"] == "stats_update"}
    rounds = [
        (e["round"], e["payload"]["chosen"], [a for a, c in created.items() if c <= e["round"]])
        for e in events
        if e["kind"] == "selection" and e["round"] in committed
    ]
    return regret_curve(rounds, view, k)


def report(log_path: str | Path, out_dir: str | Path, figures: bool = True) -> Report:
    events = read_events(log_path)
    start = events[0]["payload"]
    config = RunConfig.from_dict(start["config"])
    archive = replay_archive(events, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = Report()

    metric = archive.metric
    for spec in archive.arms:
        s = archive.stats[spec.arm_id]
        rep.arms.append({
            "name": spec.name, "generated_iteration": spec.created_round,
            "n": s.sample_count, metric: round(s.mean, 3) if s.mean is not None else "",
        })
    rep.files.append(_write_csv(
        out / ARMS_FILE, ["name", "generated_iteration", "n", metric],
        [list(r.values()) for r in rep.arms],
    ))

    committed = {e["round"] for e in events if e["kind"] == "stats_update"}
    counts = Counter()
    for e in events:
        if e["kind"] == "selection" and e["round"] in committed:
            counts.update(e["payload"]["chosen"])
    names = {a.arm_id: a.name for a in archive.arms}
    rep.selection_counts = {names[a]: counts.get(a, 0) for a in archive.arm_ids}
    rep.files.append(_write_csv(
        out / SELECTION_FILE, ["name", "selections"], [[n, c] for n, c in rep.selection_counts.items()],
    ))

    if config.evaluation_backend == "simulated" and start.get("world"):
        world = WorldModel.from_dict(start["world"])
        rep.regret = regret_from_events(events, world, config.team_size)
        rep.files.append(_write_csv(
            out / REGRET_FILE, ["round", "regret"], [[t, f"{r:.6f}"] for t, r in rep.regret],
        ))

    if figures:
        rep.figures = render_figures(rep, metric, out)
    return rep


def render_figures(rep: Report, metric: str, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    fig, ax = plt.subplots(figsize=(8, 4))
    labels = list(rep.selection_counts)
    ax.bar(range(len(labels)), [rep.selection_counts[n] for n in labels])
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_ylabel("rounds selected")
    fig.tight_layout()
    paths.append(out / "selection_counts.png")
    fig.savefig(paths[-1], dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(8, 4))
    rows = [r for r in rep.arms if r[metric] != ""]
    ax.bar(range(len(rows)), [r[metric] for r in rows])
    ax.set_xticks(range(len(rows)), [r["name"] for r in rows], rotation=45, ha="right")
    ax.set_ylabel(metric.replace("_", " "))
    ax.set_ylim(0, 1)
    fig.tight_layout()
    paths.append(out / "arms.png")
    fig.savefig(paths[-1], dpi=100)
    plt.close(fig)

    if rep.regret:
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot([t for t, _ in rep.regret], [r for _, r in rep.regret], marker=".")
        ax.set_xlabel("round")
        ax.set_ylabel("regret")
        fig.tight_layout()
        paths.append(out / "regret.png")
        fig.savefig(paths[-1], dpi=100)
        plt.close(fig)
    return paths
