"""Shared builders for scripted fixtures and loop configs."""

from __future__ import annotations

import pytest

from saferefine.agents import (
    EvaluatorRole,
    ScriptedEvaluator,
    ScriptedGenerator,
    ScriptedTrajectory,
)
from saferefine.engine import LoopConfig, run_dataset
from saferefine.model import AmaPrinciple, Query, RiskCategory
from saferefine.rubric import ThresholdPolicy

RISK_CYCLE = (
    RiskCategory.EMERGENCY,
    RiskCategory.DIAGNOSTIC,
    RiskCategory.THERAPEUTIC,
    RiskCategory.PREVENTIVE,
)


def make_query(
    qid: str = "q1",
    principle: int = 1,
    risk: RiskCategory = RiskCategory.DIAGNOSTIC,
    text: str | None = None,
) -> Query:
    return Query(
        id=qid,
        text=text or f"prompt for {qid}",
        principle=AmaPrinciple(principle),
        risk_category=risk,
    )


def make_queries(trajectories: dict[str, tuple]) -> list[Query]:
    """One query per trajectory id, principles and risk labels cycling."""
    queries = []
    for i, qid in enumerate(trajectories):
        queries.append(
            make_query(qid, principle=(i % 9) + 1, risk=RISK_CYCLE[i % len(RISK_CYCLE)])
        )
    return queries


def scripted_loop(
    trajectories: dict[str, tuple],
    policy: ThresholdPolicy | None = None,
    label: str = "gen-a",
) -> LoopConfig:
    table = {qid: ScriptedTrajectory(qid, steps) for qid, steps in trajectories.items()}
    return LoopConfig(
        generator=ScriptedGenerator(label),
        ethics_evaluator=ScriptedEvaluator(table, EvaluatorRole.ETHICS),
        risk_evaluator=ScriptedEvaluator(table, EvaluatorRole.RISK),
        policy=policy or ThresholdPolicy(),
    )


def run_scripted(
    trajectories: dict[str, tuple],
    policy: ThresholdPolicy | None = None,
    worker_limit: int = 1,
    sink=None,
    label: str = "gen-a",
    queries: list[Query] | None = None,
):
    config = scripted_loop(trajectories, policy=policy, label=label)
    return run_dataset(
        queries if queries is not None else make_queries(trajectories),
        config,
        worker_limit=worker_limit,
        sink=sink,
    )


def steps_converging_at(k: int) -> tuple:
    """Fail k-1 rounds, then pass at round k."""
    failing = [(9, 5), (7, 4), (6, 4), (5, 3)]
    return tuple(failing[i % len(failing)] for i in range(k - 1)) + ((1, 1),)


NEVER_PASSING = ((7, 5), (6, 4), (5, 4), (4, 3), (3, 3))


def iteration_count_fixture(
    counts: dict[int, int], nonconvergent: int, prefix: str = "q"
) -> dict[str, tuple]:
    """Trajectories whose converged-at-k counts equal ``counts`` exactly,
    plus ``nonconvergent`` queries that never pass."""
    trajectories: dict[str, tuple] = {}
    n = 0
    for k in sorted(counts):
        for _ in range(counts[k]):
            trajectories[f"{prefix}{n:05d}"] = steps_converging_at(k)
            n += 1
    for _ in range(nonconvergent):
        trajectories[f"{prefix}{n:05d}"] = NEVER_PASSING
        n += 1
    return trajectories


def risk_shift_fixture(prefix: str = "r") -> dict[str, tuple]:
    """900 trajectories realizing initial risk-level distribution
    (12, 18, 35, 28, 7)% and final (67, 28, 5, 0, 0)%.

    Composition (initial level -> final level, count):
      1 -> 1: 108 converged at 1      2 -> 1: 162 converged at 2
      3 -> 2: 252 converged at 2      3 -> 1:  18 converged at 2
      3 -> 3:  45 non-convergent      4 -> 1: 252 converged at 3
      5 -> 1:  63 converged at 3
    Downgrades: 252+18+252+63 = 585 of the 630 at-risk queries.
    """
    groups = [
        (108, ((0, 1),)),
        (162, ((4, 2), (0, 1))),
        (252, ((4, 3), (1, 2))),
        (18, ((4, 3), (0, 1))),
        (45, ((5, 3), (5, 3), (4, 3), (4, 3), (3, 3))),
        (252, ((6, 4), (3, 3), (1, 1))),
        (63, ((7, 5), (4, 3), (0, 1))),
    ]
    trajectories: dict[str, tuple] = {}
    n = 0
    for count, steps in groups:
        for _ in range(count):
            trajectories[f"{prefix}{n:05d}"] = steps
            n += 1
    assert n == 900
    return trajectories


def random_outcome_set(rng) -> list:
    """A random mixed outcome list (size <= 20) produced through the real
    engine; roughly 15% of queries fail on an exhausted script."""
    n = rng.randint(1, 20)
    trajectories = {}
    for i in range(n):
        qid = f"q{i:02d}"
        if rng.random() < 0.15:
            trajectories[qid] = ((rng.randint(3, 9), rng.randint(3, 5)),)
            continue
        length = rng.randint(1, 5)
        steps = []
        for k in range(length):
            if k == length - 1 and rng.random() < 0.75:
                steps.append((rng.randint(0, 2), rng.randint(1, 2)))
            else:
                steps.append(rng.choice([(9, 5), (7, 4), (5, 3), (3, 3), (4, 2), (2, 3)]))
        if len(steps) < 5 and not any(a <= 2 and s <= 2 for a, s in steps):
            steps.extend([(7, 4)] * (5 - len(steps)))
        trajectories[qid] = tuple(steps)
    return run_scripted(trajectories, worker_limit=rng.choice((1, 3)))


@pytest.fixture
def tmp_store(tmp_path):
    return tmp_path / "runs"
