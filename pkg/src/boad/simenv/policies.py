"""Fast policy simulation over a world model, regret curves and the evolutionary baseline.

The engine here draws role coverage with numpy for whole rounds at once. It
follows the same process as :func:`boad.simenv.backend.simulate_trajectory`
(independent per-role draws for each arm and for the orchestrator baseline)
but skips building step-by-step trajectories, which makes thousands of
rounds per second affordable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from boad.archive import crp_expansion_decision, rank_stats
from boad.bandit import ArmStats, record_samples, select_top_k
from boad.rng import np_substream
from boad.simenv.world import Task, WorldModel, best_subset_oracle, expected_team_success

POLICIES = ("ucb", "random", "greedy", "evolution")


class CoverageSampler:
    """Vectorised role-coverage draws for a fixed list of design-set tasks."""

    def __init__(self, world: WorldModel, task_indices: Sequence[int]):
        self.world = world
        self.roles = list(world.roles)
        self.required = np.array(
            [[r in world.tasks[i].required for r in self.roles] for i in task_indices], dtype=bool
        )
        self.baseline = np.array([world.baseline.get(r, 0.0) for r in self.roles])

    def skill_matrix(self, skills: Sequence[dict[str, float]]) -> np.ndarray:
        return np.array([[s.get(r, 0.0) for r in self.roles] for s in skills], dtype=float)

    def draw(self, skills: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(labels[arm, instance], success[instance])`` as 0/1 integer arrays."""
        n_inst = self.required.shape[0]
        achieved = rng.random((skills.shape[0], n_inst, len(self.roles))) < skills[:, None, :]
        base = rng.random((n_inst, len(self.roles))) < self.baseline[None, :]
        hit = achieved & self.required[None, :, :]
        labels = hit.any(axis=2)
        covered = achieved.any(axis=0) | base | ~self.required
        success = covered.all(axis=1)
        return labels.astype(int), success.astype(int)


def design_task_indices(world: WorldModel, n: int, seed: int) -> list[int]:
    rng = np_substream(seed, "design_set")
    weights = np.array(world.task_weights())
    return [int(i) for i in rng.choice(len(world.tasks), size=n, p=weights)]


@dataclass
class RoundOutcome:
    round: int
    available: tuple[str, ...]
    chosen: tuple[str, ...]
    labels: dict[str, list[int]]
    successes: list[int]


@dataclass
class PolicyRun:
    policy: str
    seed: int
    world: WorldModel  # arms keyed by the ids used in this run
    k: int
    rounds: list[RoundOutcome] = field(default_factory=list)
    stats: dict[str, ArmStats] = field(default_factory=dict)

    def selection_counts(self) -> dict[str, int]:
        counts = {a: 0 for a in self.stats}
        for r in self.rounds:
            for a in r.chosen:
                counts[a] += 1
        return counts

    def export_top_k(self, k: int | None = None) -> list[str]:
        return rank_stats(self.stats.values(), k or self.k)

    def regret(self) -> list[tuple[int, float]]:
        return regret_curve(
            [(r.round, r.chosen, r.available) for r in self.rounds], self.world, self.k
        )


def regret_curve(
    rounds: Iterable[tuple[int, Sequence[str], Sequence[str]]],
    world: WorldModel,
    k: int,
    tasks: Sequence[Task] | None = None,
) -> list[tuple[int, float]]:
    """Per-round gap between the best team available then and the chosen team.

    ``rounds`` yields ``(round, chosen, available)``; arm ids must be keys of
    ``world.arms``.
    """
    best_cache: dict[frozenset, float] = {}
    value_cache: dict[tuple, float] = {}
    out = []
    for t, chosen, available in rounds:
        pool = frozenset(available)
        if pool not in best_cache:
            best_cache[pool] = best_subset_oracle(world, pool, k, tasks)[1]
        key = tuple(sorted(chosen))
        if key not in value_cache:
            value_cache[key] = expected_team_success(world, key, tasks)
        # clamp float noise; the oracle is an exact maximum
        out.append((t, max(0.0, best_cache[pool] - value_cache[key])))
    return out


def _greedy_pick(stats: list[ArmStats], k: int) -> tuple[str, ...]:
    def key(s: ArmStats):
        mean = float("inf") if s.sample_count == 0 else s.mean
        return (-mean, s.created_round, s.arm_id)

    return tuple(s.arm_id for s in sorted(stats, key=key)[:k])


def run_policy(
    world: WorldModel,
    policy: str,
    rounds: int,
    k: int = 3,
    seed: int = 0,
    *,
    n_instances: int = 12,
    theta: float | None = None,
    bootstrap: int | None = None,
) -> PolicyRun:
    """Simulate a selection policy for ``rounds`` rounds.

    Without ``theta`` the archive is the world's full arm set. With ``theta``
    the archive starts from ``bootstrap`` arms proposed by uniform draws over
    the world's arms (as archetypes with fresh ids) and grows by the CRP rule.
    """
    if policy not in ("ucb", "random", "greedy"):
        raise ValueError(f"unknown policy {policy!r}")
    tasks = design_task_indices(world, n_instances, seed)
    sampler = CoverageSampler(world, tasks)
    eval_rng = np_substream(seed, "eval")
    pick_rng = np_substream(seed, "policy")
    crp_rng = np_substream(seed, "crp")
    gen_rng = np_substream(seed, "generate")
    archetypes = list(world.arms)

    skills: dict[str, dict[str, float]] = {}
    stats: dict[str, ArmStats] = {}

    def propose(t: int) -> None:
        base = archetypes[int(gen_rng.integers(len(archetypes)))]
        arm_id = f"{base}_{len(skills) + 1}"
        skills[arm_id] = dict(world.arms[base])
        stats[arm_id] = ArmStats(arm_id, created_round=t)

    if theta is None:
        for arm_id in archetypes:
            skills[arm_id] = dict(world.arms[arm_id])
            stats[arm_id] = ArmStats(arm_id)
    else:
        for _ in range(bootstrap or 3):
            propose(0)

    run = PolicyRun(policy, seed, world.with_arms(skills), k)
    for t in range(1, rounds + 1):
        if theta is not None and crp_expansion_decision(theta, len(stats), float(crp_rng.random())):
            propose(t)
        arms = list(stats.values())
        if policy == "ucb":
            chosen = select_top_k(arms, t, k).chosen
        elif policy == "greedy":
            chosen = _greedy_pick(arms, k)
        else:
            ids = sorted(stats)
            idx = pick_rng.choice(len(ids), size=min(k, len(ids)), replace=False)
            chosen = tuple(ids[i] for i in sorted(idx))
        labels, success = sampler.draw(sampler.skill_matrix([skills[a] for a in chosen]), eval_rng)
        outcome = RoundOutcome(t, tuple(stats), tuple(chosen), {}, success.tolist())
        for row, arm in zip(labels, chosen):
            outcome.labels[arm] = row.tolist()
            stats[arm] = record_samples(stats[arm], outcome.labels[arm])
        run.rounds.append(outcome)
    run.stats = stats
    run.world = world.with_arms(skills)
    return run


# evolutionary baseline


@dataclass
class Bundle:
    iteration: int
    arms: dict[str, dict[str, float]]
    helpfulness: dict[str, float] = field(default_factory=dict)
    success: float | None = None


def evolutionary_baseline_step(
    previous: Bundle,
    rng: np.random.Generator,
    *,
    roles: Sequence[str],
    scale: float = 0.1,
) -> Bundle:
    """Mutate every arm of a scored bundle into a fresh arm.

    Each role skill is perturbed by Gaussian noise of width
    ``scale * (1 - helpfulness)`` and clipped to [0, 1], so arms judged
    helpful drift less. The whole bundle is replaced; ids are never reused.
    """
    if previous.success is None:
        raise ValueError("the previous bundle has not been evaluated")
    iteration = previous.iteration + 1
    arms: dict[str, dict[str, float]] = {}
    for j, (arm_id, skills) in enumerate(previous.arms.items()):
        width = scale * (1.0 - previous.helpfulness.get(arm_id, 0.0))
        new = {}
        for role in roles:
            value = skills.get(role, 0.0) + (rng.normal(0.0, width) if width > 0 else 0.0)
            value = float(min(1.0, max(0.0, value)))
            if value > 0.0:
                new[role] = value
        arms[f"evo{iteration}_{j}"] = new
    return Bundle(iteration, arms)


@dataclass
class EvolutionRun:
    seed: int
    world: WorldModel
    bundles: list[Bundle]

    def best(self) -> Bundle:
        # highest measured success; latest wins ties
        return max(reversed(self.bundles), key=lambda b: b.success)

    def best_true_success(self) -> float:
        best = self.best()
        return expected_team_success(self.world.with_arms(best.arms), list(best.arms))


def run_evolution(
    world: WorldModel,
    iterations: int = 20,
    k: int = 3,
    seed: int = 0,
    *,
    n_instances: int = 12,
    scale: float = 0.1,
) -> EvolutionRun:
    tasks = design_task_indices(world, n_instances, seed)
    sampler = CoverageSampler(world, tasks)
    eval_rng = np_substream(seed, "eval")
    gen_rng = np_substream(seed, "generate")
    mut_rng = np_substream(seed, "mutate")
    archetypes = list(world.arms)
    first = {}
    for j in range(k):
        base = archetypes[int(gen_rng.integers(len(archetypes)))]
        first[f"evo1_{j}"] = dict(world.arms[base])
    bundle = Bundle(1, first)
    bundles = []
    for it in range(1, iterations + 1):
        if it > 1:
            bundle = evolutionary_baseline_step(bundles[-1], mut_rng, roles=world.roles, scale=scale)
        ids = list(bundle.arms)
        labels, success = sampler.draw(sampler.skill_matrix([bundle.arms[a] for a in ids]), eval_rng)
        bundle.helpfulness = {a: float(row.mean()) for a, row in zip(ids, labels)}
        bundle.success = float(success.mean())
        bundles.append(bundle)
    return EvolutionRun(seed, world, bundles)
