"""Command-line entry point: ``boad optimize|rank|export|simulate|report``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from boad.archive import Archive, SnapshotError, rank_arms
from boad.evaluation import LLMPlanner
from boad.llm.gateway import GatewayError
from boad.runner import (
    SNAPSHOT_NAME,
    ExportError,
    LogCorruptError,
    Optimizer,
    RunConfig,
    RunError,
    build_gateway,
    export_top_k,
    load_world,
)

log = logging.getLogger("boad")


def _bool_override(flag: bool) -> bool | None:
    return False if flag else None


def cmd_optimize(args) -> int:
    if args.resume:
        try:
            opt = Optimizer.resume(args.resume)
        except LogCorruptError as exc:
            print(f"error: cannot resume: {exc}", file=sys.stderr)
            return 2
        if opt.finished:
            print(f"run already complete: {args.resume}")
            return 0
    else:
        config = RunConfig.from_file(args.config) if args.config else RunConfig()
        backend = {"llm": "llm_scaffold"}.get(args.backend, args.backend)
        config = config.with_overrides(
            seed=args.seed, budget=args.budget, team_size=args.k, theta=args.theta,
            evaluation_backend=backend, credit_metric=args.credit, world=args.world,
            provider=args.provider, warmup_rounds=args.warmup, export_top_k=args.export_k,
            expansion_enabled=_bool_override(args.no_expansion),
            customized_orchestrator=_bool_override(args.no_custom_orchestrator),
        )
        run_dir = Path(args.run_dir)
        if (run_dir / "events.jsonl").exists():
            print(f"error: {run_dir} already holds a run; use --resume", file=sys.stderr)
            return 2
        opt = Optimizer(config, run_dir)
    opt.run(stop_after=args.stop_after_round)
    if not opt.finished:
        print(f"stopped after round {opt.archive.round_cursor}; resume with --resume {opt.log_path}")
        return 0
    _print_ranking(opt.archive, opt.archive.metric, opt.config.export_top_k)
    print(f"snapshot: {opt.run_dir / SNAPSHOT_NAME}")
    print(f"event log: {opt.log_path}")
    return 0


def _print_ranking(archive: Archive, metric: str, k: int) -> None:
    print("rank,name,n,mean")
    for i, arm in enumerate(rank_arms(archive, metric, k), start=1):
        s = archive.stats[arm]
        print(f"{i},{archive.get(arm).name},{s.sample_count},{s.mean:.3f}")


def _load_snapshot(path: str) -> Archive:
    return Archive.restore(Path(path).read_bytes())


def cmd_rank(args) -> int:
    archive = _load_snapshot(args.snapshot)
    _print_ranking(archive, args.metric.replace("-", "_"), args.k)
    return 0


def cmd_export(args) -> int:
    archive = _load_snapshot(args.snapshot)
    config = RunConfig(provider=args.provider)
    planner = LLMPlanner(build_gateway(config))
    export_top_k(archive, args.k, archive.metric, planner, args.out)
    print(f"bundle: {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from boad.simenv.policies import run_evolution, run_policy
    from boad.simenv.world import expected_team_success

    world = load_world(args.world)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, curves, counts = [], [], []
    for seed in range(args.seed, args.seed + args.seeds):
        if args.policy == "evolution":
            run = run_evolution(world, args.rounds, args.k, seed, n_instances=args.instances)
            best = run.best()
            summary.append([seed, args.policy, " ".join(best.arms), f"{run.best_true_success():.6f}"])
            curves.append([b.success for b in run.bundles])
        else:
            run = run_policy(world, args.policy, args.rounds, args.k, seed,
                             n_instances=args.instances, theta=args.theta,
                             bootstrap=args.bootstrap if args.theta else None)
            team = run.export_top_k(args.k)
            value = expected_team_success(run.world, team)
            summary.append([seed, args.policy, " ".join(team), f"{value:.6f}"])
            curves.append([r for _, r in run.regret()])
            counts.extend([seed, a, c] for a, c in run.selection_counts().items())

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "policy", "exported_team", "true_success"])
        w.writerows(summary)
    label = "measured_success" if args.policy == "evolution" else "mean_regret"
    mean_curve = np.mean(np.array(curves, dtype=float), axis=0)
    with open(out / "curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", label])
        w.writerows([[i + 1, f"{v:.6f}"] for i, v in enumerate(mean_curve)])
    if counts:
        with open(out / "selection_counts.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "arm", "selections"])
            w.writerows(counts)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(np.arange(1, len(mean_curve) + 1), mean_curve)
    ax.set_xlabel("round")
    ax.set_ylabel(label.replace("_", " "))
    ax.set_title(f"{args.policy}, {args.seeds} seeds")
    fig.tight_layout()
    fig.savefig(out / "curve.png", dpi=100)
    plt.close(fig)

    values = [float(r[3]) for r in summary]
    print("policy,seeds,mean_true_success,min,max")
    print(f"{args.policy},{len(values)},{np.mean(values):.4f},{min(values):.4f},{max(values):.4f}")
    return 0


def cmd_report(args) -> int:
    from boad.report import report

    try:
        rep = report(args.log, args.out, figures=not args.no_figures)
    except LogCorruptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in rep.files + rep.figures:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boad", description="Bandit search over sub-agent teams.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", help="run the optimization loop")
    o.add_argument("--config", help="YAML file with RunConfig fields")
    o.add_argument("--seed", type=int)
    o.add_argument("--budget", type=int)
    o.add_argument("--k", type=int, help="team size")
    o.add_argument("--theta", type=float)
    o.add_argument("--warmup", type=int, help="warm-up rounds per new sub-agent")
    o.add_argument("--export-k", type=int)
    o.add_argument("--backend", choices=["simulated", "llm", "llm_scaffold"])
    o.add_argument("--credit", choices=["helpfulness", "success-rate", "success_rate"])
    o.add_argument("--world", help="builtin world name or YAML path (simulated backend)")
    o.add_argument("--provider", choices=["mock", "http"])
    o.add_argument("--no-expansion", action="store_true")
    o.add_argument("--no-custom-orchestrator", action="store_true")
    o.add_argument("--run-dir", default="boad-run")
    o.add_argument("--resume", metavar="LOG")
    o.add_argument("--stop-after-round", type=int, help="halt after this round (resumable)")
    o.set_defaults(func=cmd_optimize)

    r = sub.add_parser("rank", help="rank arms in a snapshot")
    r.add_argument("--snapshot", required=True)
    r.add_argument("--metric", default="helpfulness")
    r.add_argument("--k", type=int, required=True)
    r.set_defaults(func=cmd_rank)

    e = sub.add_parser("export", help="write a deployable top-k bundle")
    e.add_argument("--snapshot", required=True)
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--provider", choices=["mock", "http"], default="mock")
    e.set_defaults(func=cmd_export)

    s = sub.add_parser("simulate", help="compare selection policies on a synthetic world")
    s.add_argument("--world", required=True)
    s.add_argument("--policy", choices=["ucb", "random", "greedy", "evolution"], required=True)
    s.add_argument("--rounds", type=int, required=True)
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--seed", type=int, default=0, help="first seed")
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--instances", type=int, default=12)
    s.add_argument("--theta", type=float, help="grow the arm set by the CRP rule")
    s.add_argument("--bootstrap", type=int, default=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("report", help="metrics files and figures from an event log")
    rp.add_argument("--log", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--no-figures", action="store_true")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SnapshotError, ExportError, RunError, GatewayError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
