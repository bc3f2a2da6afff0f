"""Deterministic replay backend driven by per-query score scripts.

Used as the oracle backend in tests and for paper-shaped fixture studies:
the loop over a script reproduces exactly the per-iteration scores written
in it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import MissingTrajectoryError, ParseError, RangeError
from ..model import (
    AMA_SCORE_MAX,
    AMA_SCORE_MIN,
    MAX_ITERATIONS,
    SRA_LEVEL_MAX,
    SRA_LEVEL_MIN,
    EthicsAssessment,
    FeedbackPlan,
    Query,
    ResponseDraft,
    RiskAssessment,
    _check_range,
)
from .base import Assessment, EvaluatorRole


@dataclass(frozen=True)
class ScriptedTrajectory:
    """The (ama, sra) pair the evaluators will report at each iteration."""

    query_id: str
    steps: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.query_id:
            raise RangeError("trajectory query_id must be nonempty")
        steps = tuple((int(a), int(s)) for a, s in self.steps)
        object.__setattr__(self, "steps", steps)
        if not 1 <= len(steps) <= MAX_ITERATIONS:
            raise RangeError(
                f"trajectory for {self.query_id!r} must have 1..{MAX_ITERATIONS} steps, "
                f"got {len(steps)}"
            )
        for i, (ama, sra) in enumerate(steps, start=1):
            _check_range(f"step {i} ama", ama, AMA_SCORE_MIN, AMA_SCORE_MAX)
            _check_range(f"step {i} sra", sra, SRA_LEVEL_MIN, SRA_LEVEL_MAX)


TrajectoryTable = Mapping[str, ScriptedTrajectory]


def scripted_assess(
    table: TrajectoryTable, response: ResponseDraft, query: Query, role: EvaluatorRole
) -> Assessment:
    """Return the scripted score for this query at the draft's iteration."""
    trajectory = table.get(query.id)
    if trajectory is None:
        raise MissingTrajectoryError(f"no trajectory for query {query.id!r}")
    if response.iteration > len(trajectory.steps):
        raise MissingTrajectoryError(
            f"trajectory for {query.id!r} has {len(trajectory.steps)} steps; "
            f"iteration {response.iteration} requested"
        )
    ama, sra = trajectory.steps[response.iteration - 1]
    if role is EvaluatorRole.ETHICS:
        return EthicsAssessment(ama_score=ama)
    return RiskAssessment(sra_level=sra)


class ScriptedEvaluator:
    """Evaluator that replays a trajectory table."""

    def __init__(self, table: TrajectoryTable, role: EvaluatorRole):
        self._table = dict(table)
        self.role = EvaluatorRole(role)

    def assess(self, response: ResponseDraft, query: Query) -> Assessment:
        return scripted_assess(self._table, response, query, self.role)


class ScriptedGenerator:
    """Generator emitting deterministic placeholder text; scores live in the script."""

    def __init__(self, label: str = "scripted"):
        self.label = label

    def generate(self, query: Query) -> ResponseDraft:
        return ResponseDraft(
            query_id=query.id, iteration=1, text=f"[{self.label}] draft 1 for {query.id}"
        )

    def refine(self, previous: ResponseDraft, plan: FeedbackPlan, query: Query) -> ResponseDraft:
        iteration = previous.iteration + 1
        return ResponseDraft(
            query_id=query.id,
            iteration=iteration,
            text=f"[{self.label}] draft {iteration} for {query.id} "
            f"({len(plan.directives)} directives applied)",
        )


def load_trajectories(path: str | Path) -> dict[str, ScriptedTrajectory]:
    """Read line-delimited step records (query_id, iteration, ama, sra).

    Steps for one query must form a contiguous 1..k sequence; they may be
    interleaved with other queries' steps but not reordered within a query.
    """
    steps: dict[str, list[tuple[int, int, int]]] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid record: {exc}", line_number=lineno) from None
            try:
                qid = str(rec["query_id"])
                step = (int(rec["iteration"]), int(rec["ama"]), int(rec["sra"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"missing or bad field: {exc}", line_number=lineno) from None
            steps.setdefault(qid, []).append(step)

    table: dict[str, ScriptedTrajectory] = {}
    for qid, entries in steps.items():
        entries.sort(key=lambda e: e[0])
        iterations = [it for it, _, _ in entries]
        if iterations != list(range(1, len(entries) + 1)):
            raise ParseError(
                f"steps for query {qid!r} must cover iterations 1..{len(entries)}, "
                f"got {iterations}"
            )
        table[qid] = ScriptedTrajectory(
            query_id=qid, steps=tuple((ama, sra) for _, ama, sra in entries)
        )
    return table


def dump_trajectories(table: TrajectoryTable | Iterable[ScriptedTrajectory], path: str | Path) -> None:
    trajectories = table.values() if isinstance(table, Mapping) else table
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for t in trajectories:
            for i, (ama, sra) in enumerate(t.steps, start=1):
                fh.write(
                    json.dumps(
                        {"query_id": t.query_id, "iteration": i, "ama": ama, "sra": sra},
                        sort_keys=True,
                    )
                    + "\n"
                )
