"""The per-query refinement loop and the dataset runner.

Loop shape: one initial generation, then up to ``max_iterations`` rounds of
dual assessment, consensus merge, and threshold check. The two evaluator
calls inside an iteration may run concurrently (they judge the same draft
and never see each other's output); iterations themselves are strictly
sequential because each refinement depends on the previous consensus.
A refinement is requested only while another assessment round remains, so
the number of refine calls is always ``iterations_used - 1``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .dataset import Dataset
from .errors import AgentFailure, ConfigError, PreconditionError, RangeError
from .model import (
    AmaPrinciple,
    ConsensusRecord,
    Decision,
    EthicsAssessment,
    FeedbackPlan,
    IterationTrace,
    Query,
    QueryFailure,
    QueryRunResult,
    ResponseDraft,
    RiskAssessment,
    RunOutcome,
    dedup_reasons,
    passes_thresholds,
)
from .rubric import ThresholdPolicy, requires_mandatory_refinement
from .agents.base import Evaluator, EvaluatorRole, Generator


@dataclass
class LoopConfig:
    """Everything the loop needs for one generator profile."""

    generator: Generator
    ethics_evaluator: Evaluator
    risk_evaluator: Evaluator
    policy: ThresholdPolicy = ThresholdPolicy()

    def __post_init__(self) -> None:
        if self.ethics_evaluator.role is not EvaluatorRole.ETHICS:
            raise ConfigError(
                f"ethics evaluator has role {self.ethics_evaluator.role}, expected ethics"
            )
        if self.risk_evaluator.role is not EvaluatorRole.RISK:
            raise ConfigError(
                f"risk evaluator has role {self.risk_evaluator.role}, expected risk"
            )


class TraceSink(Protocol):
    """Receives loop events as they happen; implementations must be
    safe to call from multiple worker threads."""

    def record_query(self, query: Query) -> None: ...

    def record_trace(self, trace: IterationTrace) -> None: ...

    def record_result(self, result: QueryRunResult) -> None: ...

    def record_failure(self, failure: QueryFailure) -> None: ...


def merge_consensus(
    ethics: EthicsAssessment | object, risk: RiskAssessment | object
) -> ConsensusRecord:
    """Role-partitioned merge: ethics supplies the violation score, risk the
    risk level, reasons concatenate ethics-first and deduplicate.

    If a backend volunteers both scores on one assessment object, the
    conservative maximum per dimension wins.
    """
    ama_values = [
        v
        for v in (getattr(ethics, "ama_score", None), getattr(risk, "ama_score", None))
        if v is not None
    ]
    sra_values = [
        v
        for v in (getattr(ethics, "sra_level", None), getattr(risk, "sra_level", None))
        if v is not None
    ]
    if not ama_values:
        raise RangeError("merge requires an ethics violation score")
    if not sra_values:
        raise RangeError("merge requires a risk level")
    reasons = dedup_reasons(
        tuple(getattr(ethics, "reasons", ())) + tuple(getattr(risk, "reasons", ()))
    )
    return ConsensusRecord(
        ama_score=max(ama_values), sra_level=max(sra_values), reasons=reasons
    )


def build_feedback_plan(
    consensus: ConsensusRecord,
    policy: ThresholdPolicy,
    violated_principles: Iterable[AmaPrinciple] = (),
) -> FeedbackPlan:
    """Compose deterministic revision directives from a failing consensus.

    Order: one directive per consensus reason, then the risk-removal
    directive when the level is moderate or worse, then the ethics
    directive when the score exceeds its threshold.
    """
    if passes_thresholds(consensus, policy):
        raise PreconditionError(
            "consensus already meets both thresholds; no feedback plan is needed"
        )
    directives = [f"Address the flagged issue: {reason}" for reason in consensus.reasons]
    if consensus.sra_level >= 3:
        directives.append(
            "Remove actionable diagnostic and treatment instructions; refer the "
            "reader to a qualified clinician or emergency services instead"
        )
    if consensus.ama_score > policy.tau_ama:
        principles = sorted(set(violated_principles))
        if principles:
            names = "; ".join(p.label for p in principles)
            directives.append(f"Rewrite to respect the ethics principles violated: {names}")
        else:
            directives.append(
                "Rewrite to comply with professional medical-ethics obligations"
            )
    if not directives:
        # Unusual policies (e.g. tau_sra=1) can fail thresholds without
        # tripping either rubric branch; the plan must still be actionable.
        directives.append(
            f"Revise until the ethics score is at most {policy.tau_ama} and the "
            f"risk level is at most {policy.tau_sra}"
        )
    return FeedbackPlan(directives=tuple(directives), source_consensus=consensus)


def _checked_draft(draft: ResponseDraft, query: Query, expected_iteration: int) -> ResponseDraft:
    if draft.query_id != query.id:
        raise RangeError(f"generator returned draft for {draft.query_id!r}, not {query.id!r}")
    if draft.iteration != expected_iteration:
        raise RangeError(
            f"generator returned iteration {draft.iteration}, expected {expected_iteration}"
        )
    return draft


def run_query(
    query: Query,
    config: LoopConfig,
    sink: TraceSink | None = None,
    assess_pool: ThreadPoolExecutor | None = None,
) -> QueryRunResult:
    """Run the full loop for one query.

    Raises AgentFailure on any adapter error, with the traces completed so
    far attached for audit. When ``assess_pool`` is given, the ethics
    assessment is dispatched to it while the risk assessment runs on the
    calling thread.
    """
    policy = config.policy
    traces: list[IterationTrace] = []

    def fail(stage: str, cause: Exception) -> AgentFailure:
        return AgentFailure(query.id, stage, cause, traces)

    try:
        draft = _checked_draft(config.generator.generate(query), query, 1)
    except Exception as exc:
        raise fail("generate", exc) from exc

    for iteration in range(1, policy.max_iterations + 1):
        try:
            if assess_pool is not None:
                ethics_future = assess_pool.submit(
                    config.ethics_evaluator.assess, draft, query
                )
                risk_assessment = config.risk_evaluator.assess(draft, query)
                ethics_assessment = ethics_future.result()
            else:
                ethics_assessment = config.ethics_evaluator.assess(draft, query)
                risk_assessment = config.risk_evaluator.assess(draft, query)
        except Exception as exc:
            raise fail(f"assess:iteration={iteration}", exc) from exc

        if not isinstance(ethics_assessment, EthicsAssessment):
            raise fail(
                f"assess:iteration={iteration}",
                RangeError(
                    f"ethics evaluator returned {type(ethics_assessment).__name__}, "
                    "expected EthicsAssessment"
                ),
            )
        if not isinstance(risk_assessment, RiskAssessment):
            raise fail(
                f"assess:iteration={iteration}",
                RangeError(
                    f"risk evaluator returned {type(risk_assessment).__name__}, "
                    "expected RiskAssessment"
                ),
            )

        consensus = merge_consensus(ethics_assessment, risk_assessment)
        passed = passes_thresholds(consensus, policy)
        feedback = None
        if not passed and iteration < policy.max_iterations:
            feedback = build_feedback_plan(
                consensus, policy, ethics_assessment.violated_principles
            )
        trace = IterationTrace(
            iteration=iteration,
            response=draft,
            ethics=ethics_assessment,
            risk=risk_assessment,
            consensus=consensus,
            decision=Decision.STOP if passed else Decision.REFINE,
            mandatory_refinement=requires_mandatory_refinement(ethics_assessment, policy),
            feedback=feedback,
        )
        traces.append(trace)
        if sink is not None:
            sink.record_trace(trace)
        if passed:
            break
        if feedback is not None:
            try:
                draft = _checked_draft(
                    config.generator.refine(draft, feedback, query), query, iteration + 1
                )
            except Exception as exc:
                raise fail(f"refine:iteration={iteration}", exc) from exc

    result = QueryRunResult.from_parts(query, traces, max_iterations=policy.max_iterations)
    if sink is not None:
        sink.record_result(result)
    return result


def _run_one(
    query: Query,
    config: LoopConfig,
    sink: TraceSink | None,
    assess_pool: ThreadPoolExecutor | None,
) -> RunOutcome:
    try:
        return run_query(query, config, sink=sink, assess_pool=assess_pool)
    except AgentFailure as failure:
        record = QueryFailure(
            query=query,
            stage=failure.stage,
            error=str(failure.cause),
            partial_traces=tuple(failure.traces),
        )
        if sink is not None:
            sink.record_failure(record)
        return record


def run_dataset(
    dataset: Dataset | Sequence[Query],
    config: LoopConfig,
    worker_limit: int = 1,
    sink: TraceSink | None = None,
) -> list[RunOutcome]:
    """Run every query, bounding in-flight queries by ``worker_limit``.

    The returned list is in dataset order regardless of completion order.
    Per-query agent failures become QueryFailure entries; they never abort
    the run.
    """
    if worker_limit < 1:
        raise RangeError(f"worker_limit must be >= 1, got {worker_limit}")
    queries = list(dataset)
    if sink is not None:
        for query in queries:
            sink.record_query(query)
    if not queries:
        return []
    if worker_limit == 1:
        return [_run_one(q, config, sink, None) for q in queries]
    with ThreadPoolExecutor(max_workers=worker_limit) as workers, ThreadPoolExecutor(
        max_workers=worker_limit
    ) as assess_pool:
        futures = [workers.submit(_run_one, q, config, sink, assess_pool) for q in queries]
        return [f.result() for f in futures]
