"""Domain type validation, threshold rule, and record round-trips."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from saferefine.errors import RangeError
from saferefine.model import (
    AmaPrinciple,
    ConsensusRecord,
    Decision,
    EthicsAssessment,
    FeedbackPlan,
    IterationTrace,
    Query,
    QueryRunResult,
    ResponseDraft,
    RiskAssessment,
    RiskCategory,
    RunStatus,
    dedup_reasons,
    make_consensus,
    passes_thresholds,
)
from saferefine.rubric import ThresholdPolicy

DEFAULT = ThresholdPolicy()


# --- construction and validation ------------------------------------------


def test_make_consensus_minimal_and_maximal():
    assert make_consensus(0, 1, []) == ConsensusRecord(0, 1, ())
    record = make_consensus(9, 5, ["emergency instructions"])
    assert record.ama_score == 9
    assert record.sra_level == 5
    assert record.reasons == ("emergency instructions",)


def test_make_consensus_rejects_out_of_range():
    with pytest.raises(RangeError):
        make_consensus(10, 5, [])
    with pytest.raises(RangeError):
        make_consensus(-1, 1, [])
    with pytest.raises(RangeError):
        make_consensus(0, 0, [])
    with pytest.raises(RangeError):
        make_consensus(0, 6, [])


@given(ama=st.integers(-20, 30), sra=st.integers(-20, 30))
def test_consensus_constructor_rejects_exactly_outside_ranges(ama, sra):
    legal = 0 <= ama <= 9 and 1 <= sra <= 5
    if legal:
        assert make_consensus(ama, sra) is not None
    else:
        with pytest.raises(RangeError):
            make_consensus(ama, sra)


@given(score=st.integers(-20, 30))
def test_ethics_score_range(score):
    if 0 <= score <= 9:
        assert EthicsAssessment(ama_score=score).ama_score == score
    else:
        with pytest.raises(RangeError):
            EthicsAssessment(ama_score=score)


@given(level=st.integers(-20, 30))
def test_risk_level_range(level):
    if 1 <= level <= 5:
        assert RiskAssessment(sra_level=level).sra_level == level
    else:
        with pytest.raises(RangeError):
            RiskAssessment(sra_level=level)


def test_ethics_principles_bounded_by_score():
    EthicsAssessment(ama_score=2, violated_principles=frozenset({AmaPrinciple(1), AmaPrinciple(2)}))
    with pytest.raises(RangeError):
        EthicsAssessment(
            ama_score=1,
            violated_principles=frozenset({AmaPrinciple(1), AmaPrinciple(2)}),
        )
    # score 0 implies the empty set
    with pytest.raises(RangeError):
        EthicsAssessment(ama_score=0, violated_principles=frozenset({AmaPrinciple(1)}))


def test_query_requires_nonempty_fields():
    with pytest.raises(RangeError):
        Query(id="", text="x", principle=1)
    with pytest.raises(RangeError):
        Query(id="q", text="   ", principle=1)


def test_draft_iteration_bounds():
    ResponseDraft(query_id="q", iteration=1, text="t")
    ResponseDraft(query_id="q", iteration=5, text="t")
    for bad in (0, 6, -1):
        with pytest.raises(RangeError):
            ResponseDraft(query_id="q", iteration=bad, text="t")


def test_ama_principle_parse_forms():
    assert AmaPrinciple.parse(4) is AmaPrinciple.PATIENT_RIGHTS_AND_CONFIDENTIALITY
    assert AmaPrinciple.parse("4") is AmaPrinciple.PATIENT_RIGHTS_AND_CONFIDENTIALITY
    assert AmaPrinciple.parse("IV") is AmaPrinciple.PATIENT_RIGHTS_AND_CONFIDENTIALITY
    assert AmaPrinciple.parse("ix") is AmaPrinciple.HEALTHCARE_ACCESS_EQUITY
    with pytest.raises(RangeError):
        AmaPrinciple.parse(10)
    with pytest.raises(RangeError):
        AmaPrinciple.parse("X")


def test_principle_labels_match_canonical_list():
    assert AmaPrinciple(1).label == "Competence and Compassion"
    assert AmaPrinciple(5).label == "Continued Study and Education"
    assert AmaPrinciple(9).label == "Healthcare Access Equity"
    assert len({p.label for p in AmaPrinciple}) == 9


def test_dedup_reasons_is_order_preserving():
    assert dedup_reasons(["b", "a", "b", "c", "a"]) == ("b", "a", "c")


# --- threshold rule ---------------------------------------------------------


def test_passes_thresholds_boundary():
    assert passes_thresholds(make_consensus(2, 2), DEFAULT) is True
    assert passes_thresholds(make_consensus(0, 1), DEFAULT) is True
    assert passes_thresholds(make_consensus(3, 2), DEFAULT) is False
    assert passes_thresholds(make_consensus(2, 3), DEFAULT) is False


@given(
    ama=st.integers(0, 9),
    sra=st.integers(1, 5),
    ama_drop=st.integers(0, 9),
    sra_drop=st.integers(0, 4),
)
def test_passes_thresholds_monotone(ama, sra, ama_drop, sra_drop):
    """Decreasing either score never flips a pass into a fail."""
    before = passes_thresholds(make_consensus(ama, sra), DEFAULT)
    lower = make_consensus(max(0, ama - ama_drop), max(1, sra - sra_drop))
    if before:
        assert passes_thresholds(lower, DEFAULT)


# --- traces and results -----------------------------------------------------


def _trace(iteration: int, ama: int, sra: int, decision: Decision) -> IterationTrace:
    return IterationTrace(
        iteration=iteration,
        response=ResponseDraft(query_id="q", iteration=iteration, text="t"),
        ethics=EthicsAssessment(ama_score=ama),
        risk=RiskAssessment(sra_level=sra),
        consensus=make_consensus(ama, sra),
        decision=decision,
    )


def test_trace_decision_consistency_check():
    stop = _trace(1, 1, 1, Decision.STOP)
    assert stop.decision_consistent_with(DEFAULT)
    mislabeled = _trace(1, 9, 5, Decision.STOP)
    assert not mislabeled.decision_consistent_with(DEFAULT)


def test_trace_iteration_must_match_draft():
    with pytest.raises(RangeError):
        IterationTrace(
            iteration=2,
            response=ResponseDraft(query_id="q", iteration=1, text="t"),
            ethics=EthicsAssessment(ama_score=1),
            risk=RiskAssessment(sra_level=1),
            consensus=make_consensus(1, 1),
            decision=Decision.STOP,
        )


def test_result_invariants():
    traces = (_trace(1, 5, 4, Decision.REFINE), _trace(2, 1, 1, Decision.STOP))
    # iteration numbers in the helper drafts must line up
    traces = (
        _trace(1, 5, 4, Decision.REFINE),
        IterationTrace(
            iteration=2,
            response=ResponseDraft(query_id="q", iteration=2, text="t"),
            ethics=EthicsAssessment(ama_score=1),
            risk=RiskAssessment(sra_level=1),
            consensus=make_consensus(1, 1),
            decision=Decision.STOP,
        ),
    )
    query = Query(id="q", text="x", principle=1)
    result = QueryRunResult.from_parts(query, traces)
    assert result.status is RunStatus.CONVERGED
    assert result.iterations_used == 2
    assert (result.initial_ama, result.initial_sra) == (5, 4)
    assert (result.final_ama, result.final_sra) == (1, 1)

    with pytest.raises(RangeError):
        QueryRunResult.from_parts(query, ())
    # non-convergent must use the whole budget
    with pytest.raises(RangeError):
        QueryRunResult.from_parts(query, (_trace(1, 9, 5, Decision.REFINE),))
    # traces before the last must all refine
    with pytest.raises(RangeError):
        QueryRunResult.from_parts(
            query,
            (
                _trace(1, 1, 1, Decision.STOP),
                IterationTrace(
                    iteration=2,
                    response=ResponseDraft(query_id="q", iteration=2, text="t"),
                    ethics=EthicsAssessment(ama_score=1),
                    risk=RiskAssessment(sra_level=1),
                    consensus=make_consensus(1, 1),
                    decision=Decision.STOP,
                ),
            ),
        )


def test_feedback_plan_requires_directives():
    with pytest.raises(RangeError):
        FeedbackPlan(directives=(), source_consensus=make_consensus(5, 4))


# --- record round-trips -----------------------------------------------------

reason_lists = st.lists(st.text(min_size=1, max_size=20), max_size=4)


@given(
    ama=st.integers(0, 9),
    sra=st.integers(1, 5),
    reasons=reason_lists,
)
def test_consensus_record_round_trip(ama, sra, reasons):
    record = make_consensus(ama, sra, reasons)
    assert ConsensusRecord.from_record(record.to_record()) == record


@given(
    score=st.integers(0, 9),
    reasons=reason_lists,
    data=st.data(),
)
def test_ethics_round_trip(score, reasons, data):
    principles = data.draw(
        st.frozensets(st.sampled_from(list(AmaPrinciple)), max_size=min(score, 9))
    )
    assessment = EthicsAssessment(
        ama_score=score, violated_principles=principles, reasons=tuple(reasons)
    )
    assert EthicsAssessment.from_record(assessment.to_record()) == assessment


@given(level=st.integers(1, 5), reasons=reason_lists)
def test_risk_round_trip(level, reasons):
    assessment = RiskAssessment(sra_level=level, reasons=tuple(reasons))
    assert RiskAssessment.from_record(assessment.to_record()) == assessment


@given(
    qid=st.text(min_size=1, max_size=10).filter(lambda s: s.strip()),
    text=st.text(min_size=1, max_size=40).filter(lambda s: s.strip()),
    principle=st.sampled_from(list(AmaPrinciple)),
    risk=st.sampled_from(list(RiskCategory)),
)
def test_query_round_trip(qid, text, principle, risk):
    query = Query(id=qid, text=text, principle=principle, risk_category=risk)
    assert Query.from_record(query.to_record()) == query


def test_trace_round_trip_with_feedback():
    consensus = make_consensus(5, 4, ["dosing steps"])
    trace = IterationTrace(
        iteration=2,
        response=ResponseDraft(query_id="q", iteration=2, text="draft"),
        ethics=EthicsAssessment(
            ama_score=5,
            violated_principles=frozenset({AmaPrinciple(8)}),
            reasons=("dosing steps",),
        ),
        risk=RiskAssessment(sra_level=4, reasons=("dosing steps",)),
        consensus=consensus,
        decision=Decision.REFINE,
        mandatory_refinement=False,
        feedback=FeedbackPlan(directives=("fix it",), source_consensus=consensus),
    )
    restored = IterationTrace.from_record(trace.to_record())
    assert restored == trace


nonblank = st.text(min_size=1, max_size=16).filter(lambda s: s.strip())


@given(qid=nonblank, iteration=st.integers(1, 5), text=st.text(max_size=60))
def test_draft_round_trip(qid, iteration, text):
    draft = ResponseDraft(query_id=qid, iteration=iteration, text=text)
    assert ResponseDraft.from_record(draft.to_record()) == draft


@st.composite
def traces(draw, iteration=None, decision=None):
    """Random valid IterationTrace; feedback attached only to refine turns."""
    it = iteration if iteration is not None else draw(st.integers(1, 5))
    ama = draw(st.integers(0, 9))
    sra = draw(st.integers(1, 5))
    reasons = tuple(draw(reason_lists))
    principles = draw(
        st.frozensets(st.sampled_from(list(AmaPrinciple)), max_size=min(ama, 9))
    )
    consensus = make_consensus(ama, sra, reasons)
    dec = decision if decision is not None else draw(st.sampled_from(list(Decision)))
    feedback = None
    if dec is Decision.REFINE and draw(st.booleans()):
        feedback = FeedbackPlan(
            directives=tuple(draw(st.lists(nonblank, min_size=1, max_size=3))),
            source_consensus=consensus,
        )
    return IterationTrace(
        iteration=it,
        response=ResponseDraft(query_id=draw(nonblank), iteration=it, text=draw(st.text(max_size=40))),
        ethics=EthicsAssessment(ama_score=ama, violated_principles=principles, reasons=reasons),
        risk=RiskAssessment(sra_level=sra, reasons=tuple(draw(reason_lists))),
        consensus=consensus,
        decision=dec,
        mandatory_refinement=draw(st.booleans()),
        feedback=feedback,
    )


@given(trace=traces())
def test_randomized_trace_round_trip(trace):
    restored = IterationTrace.from_record(trace.to_record())
    assert restored.iteration == trace.iteration
    assert restored.response.text == trace.response.text
    assert restored.ethics == trace.ethics
    assert restored.risk == trace.risk
    assert restored.consensus == trace.consensus
    assert restored.decision == trace.decision
    assert restored.mandatory_refinement == trace.mandatory_refinement
    if trace.feedback is None:
        assert restored.feedback is None
    else:
        assert restored.feedback.directives == trace.feedback.directives


@given(
    directives=st.lists(nonblank, min_size=1, max_size=4),
    ama=st.integers(0, 9),
    sra=st.integers(1, 5),
)
def test_feedback_plan_round_trip(directives, ama, sra):
    plan = FeedbackPlan(
        directives=tuple(directives), source_consensus=make_consensus(ama, sra)
    )
    assert FeedbackPlan.from_record(plan.to_record()) == plan
