"""Core domain vocabulary: queries, drafts, assessments, consensus, traces.

Every type validates its ranges at construction and is immutable afterwards,
so values can be shared freely across concurrent workers. Each type also
round-trips through a flat key/value record (``to_record``/``from_record``),
which is the canonical serialized form used by the run store.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, Any, Iterable, Mapping

from .errors import RangeError

if TYPE_CHECKING:
    from .rubric import ThresholdPolicy

AMA_SCORE_MIN, AMA_SCORE_MAX = 0, 9
SRA_LEVEL_MIN, SRA_LEVEL_MAX = 1, 5
MAX_ITERATIONS = 5


def _check_range(name: str, value: int, lo: int, hi: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise RangeError(f"{name} must be an integer, got {value!r}")
    if not lo <= value <= hi:
        raise RangeError(f"{name} must lie in [{lo}, {hi}], got {value}")
    return value


def dedup_reasons(reasons: Iterable[str]) -> tuple[str, ...]:
    """Order-preserving exact-string deduplication."""
    seen: set[str] = set()
    out: list[str] = []
    for r in reasons:
        if not isinstance(r, str):
            raise RangeError(f"reason must be a string, got {r!r}")
        if r not in seen:
            seen.add(r)
            out.append(r)
    return tuple(out)


class AmaPrinciple(IntEnum):
    """The nine medical-ethics principle categories, indexed 1 through 9."""

    COMPETENCE_AND_COMPASSION = 1
    PROFESSIONALISM_AND_HONESTY = 2
    LEGAL_AND_SOCIAL_RESPONSIBILITY = 3
    PATIENT_RIGHTS_AND_CONFIDENTIALITY = 4
    CONTINUED_STUDY_AND_EDUCATION = 5
    PHYSICIAN_AUTONOMY = 6
    COMMUNITY_AND_PUBLIC_HEALTH = 7
    PATIENT_WELFARE = 8
    HEALTHCARE_ACCESS_EQUITY = 9

    @property
    def label(self) -> str:
        return _PRINCIPLE_LABELS[self.value]

    @property
    def roman(self) -> str:
        return _ROMAN[self.value]

    @classmethod
    def parse(cls, raw: int | str) -> "AmaPrinciple":
        """Accept an index (4 or "4") or a roman numeral ("IV")."""
        if isinstance(raw, bool):
            raise RangeError(f"principle must be 1-9 or I-IX, got {raw!r}")
        if isinstance(raw, int):
            index = raw
        else:
            token = str(raw).strip()
            if token.isdigit():
                index = int(token)
            else:
                index = _ROMAN_TO_INDEX.get(token.upper(), 0)
        if not 1 <= index <= 9:
            raise RangeError(f"principle must be 1-9 or I-IX, got {raw!r}")
        return cls(index)


_PRINCIPLE_LABELS = {
    1: "Competence and Compassion",
    2: "Professionalism and Honesty",
    3: "Legal and Social Responsibility",
    4: "Patient Rights and Confidentiality",
    5: "Continued Study and Education",
    6: "Physician Autonomy",
    7: "Community and Public Health",
    8: "Patient Welfare",
    9: "Healthcare Access Equity",
}

_ROMAN = {1: "I", 2: "II", 3: "III", 4: "IV", 5: "V", 6: "VI", 7: "VII", 8: "VIII", 9: "IX"}
_ROMAN_TO_INDEX = {v: k for k, v in _ROMAN.items()}


class RiskCategory(str, Enum):
    """Prompt risk category used for grouped reduction metrics."""

    EMERGENCY = "emergency"
    DIAGNOSTIC = "diagnostic"
    THERAPEUTIC = "therapeutic"
    PREVENTIVE = "preventive"
    #: Assigned when a dataset record carries no risk label; excluded from
    #: per-category metrics with an explicit exclusion count.
    UNLABELED = "unlabeled"

    @classmethod
    def parse(cls, raw: str | None) -> "RiskCategory":
        if raw is None or str(raw).strip() == "":
            return cls.UNLABELED
        token = str(raw).strip().lower()
        try:
            return cls(token)
        except ValueError:
            raise RangeError(f"unknown risk category {raw!r}") from None


class Decision(str, Enum):
    STOP = "stop"
    REFINE = "refine"


class RunStatus(str, Enum):
    CONVERGED = "converged"
    NON_CONVERGENT = "non_convergent"


@dataclass(frozen=True)
class Query:
    """One benchmark prompt with its principle and risk-category labels."""

    id: str
    text: str
    principle: AmaPrinciple
    risk_category: RiskCategory = RiskCategory.UNLABELED

    def __post_init__(self) -> None:
        if not self.id or not str(self.id).strip():
            raise RangeError("query id must be nonempty")
        if not self.text or not str(self.text).strip():
            raise RangeError(f"query {self.id!r}: text must be nonempty")
        if not isinstance(self.principle, AmaPrinciple):
            object.__setattr__(self, "principle", AmaPrinciple.parse(self.principle))
        if not isinstance(self.risk_category, RiskCategory):
            object.__setattr__(self, "risk_category", RiskCategory.parse(self.risk_category))

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "principle": int(self.principle),
            "risk_category": self.risk_category.value,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "Query":
        return cls(
            id=rec["id"],
            text=rec["text"],
            principle=AmaPrinciple.parse(rec["principle"]),
            risk_category=RiskCategory.parse(rec.get("risk_category")),
        )


@dataclass(frozen=True)
class ResponseDraft:
    """A candidate response for one query at one loop iteration."""

    query_id: str
    iteration: int
    text: str

    def __post_init__(self) -> None:
        if not self.query_id:
            raise RangeError("draft query_id must be nonempty")
        _check_range("iteration", self.iteration, 1, MAX_ITERATIONS)

    def to_record(self) -> dict[str, Any]:
        return {"query_id": self.query_id, "iteration": self.iteration, "text": self.text}

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "ResponseDraft":
        return cls(query_id=rec["query_id"], iteration=rec["iteration"], text=rec["text"])


@dataclass(frozen=True)
class EthicsAssessment:
    """Ethics evaluator verdict: violation score 0-9 plus optional detail.

    The principle set may be empty when the evaluator reports only a score;
    when present it can never be larger than the score itself.
    """

    ama_score: int
    violated_principles: frozenset[AmaPrinciple] = frozenset()
    reasons: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        _check_range("ama_score", self.ama_score, AMA_SCORE_MIN, AMA_SCORE_MAX)
        principles = frozenset(AmaPrinciple.parse(p) for p in self.violated_principles)
        object.__setattr__(self, "violated_principles", principles)
        if len(principles) > self.ama_score:
            raise RangeError(
                f"{len(principles)} violated principles exceed ama_score {self.ama_score}"
            )
        object.__setattr__(self, "reasons", dedup_reasons(self.reasons))

    def to_record(self) -> dict[str, Any]:
        return {
            "ama_score": self.ama_score,
            "violated_principles": sorted(int(p) for p in self.violated_principles),
            "reasons": list(self.reasons),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "EthicsAssessment":
        return cls(
            ama_score=rec["ama_score"],
            violated_principles=frozenset(
                AmaPrinciple.parse(p) for p in rec.get("violated_principles", ())
            ),
            reasons=tuple(rec.get("reasons", ())),
        )


@dataclass(frozen=True)
class RiskAssessment:
    """Risk evaluator verdict: safety risk level 1-5 plus reasons."""

    sra_level: int
    reasons: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        _check_range("sra_level", self.sra_level, SRA_LEVEL_MIN, SRA_LEVEL_MAX)
        object.__setattr__(self, "reasons", dedup_reasons(self.reasons))

    def to_record(self) -> dict[str, Any]:
        return {"sra_level": self.sra_level, "reasons": list(self.reasons)}

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "RiskAssessment":
        return cls(sra_level=rec["sra_level"], reasons=tuple(rec.get("reasons", ())))


@dataclass(frozen=True)
class ConsensusRecord:
    """Merged per-iteration verdict inspected by the stopping rule.

    Reasons are stored deduplicated, order preserved.
    """

    ama_score: int
    sra_level: int
    reasons: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        _check_range("ama_score", self.ama_score, AMA_SCORE_MIN, AMA_SCORE_MAX)
        _check_range("sra_level", self.sra_level, SRA_LEVEL_MIN, SRA_LEVEL_MAX)
        object.__setattr__(self, "reasons", dedup_reasons(self.reasons))

    def to_record(self) -> dict[str, Any]:
        return {
            "ama_score": self.ama_score,
            "sra_level": self.sra_level,
            "reasons": list(self.reasons),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "ConsensusRecord":
        return cls(
            ama_score=rec["ama_score"],
            sra_level=rec["sra_level"],
            reasons=tuple(rec.get("reasons", ())),
        )


def make_consensus(ama: int, sra: int, reasons: Iterable[str] = ()) -> ConsensusRecord:
    """Validated constructor; raises RangeError outside the legal ranges."""
    return ConsensusRecord(ama_score=ama, sra_level=sra, reasons=tuple(reasons))


def passes_thresholds(consensus: ConsensusRecord, policy: "ThresholdPolicy") -> bool:
    """True iff the consensus meets both deployability thresholds."""
    return consensus.ama_score <= policy.tau_ama and consensus.sra_level <= policy.tau_sra


@dataclass(frozen=True)
class FeedbackPlan:
    """Deterministic revision directives derived from a failing consensus."""

    directives: tuple[str, ...]
    source_consensus: ConsensusRecord

    def __post_init__(self) -> None:
        object.__setattr__(self, "directives", tuple(self.directives))
        if not self.directives:
            raise RangeError("feedback plan must contain at least one directive")

    def to_record(self) -> dict[str, Any]:
        return {
            "directives": list(self.directives),
            "source_ama": self.source_consensus.ama_score,
            "source_sra": self.source_consensus.sra_level,
            "source_reasons": list(self.source_consensus.reasons),
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "FeedbackPlan":
        return cls(
            directives=tuple(rec["directives"]),
            source_consensus=ConsensusRecord(
                ama_score=rec["source_ama"],
                sra_level=rec["source_sra"],
                reasons=tuple(rec.get("source_reasons", ())),
            ),
        )


@dataclass(frozen=True)
class IterationTrace:
    """One loop turn: draft, both assessments, consensus, and the decision.

    ``feedback`` is present only on turns whose plan was actually used to
    refine into the next draft. ``mandatory_refinement`` is an audit flag;
    it adds no behavior beyond the normal refine decision.
    """

    iteration: int
    response: ResponseDraft
    ethics: EthicsAssessment
    risk: RiskAssessment
    consensus: ConsensusRecord
    decision: Decision
    mandatory_refinement: bool = False
    feedback: FeedbackPlan | None = None

    def __post_init__(self) -> None:
        _check_range("iteration", self.iteration, 1, MAX_ITERATIONS)
        if self.response.iteration != self.iteration:
            raise RangeError(
                f"trace iteration {self.iteration} does not match "
                f"draft iteration {self.response.iteration}"
            )
        if not isinstance(self.decision, Decision):
            object.__setattr__(self, "decision", Decision(self.decision))

    def decision_consistent_with(self, policy: "ThresholdPolicy") -> bool:
        """Recompute the decision from stored fields; True iff it matches."""
        expected = Decision.STOP if passes_thresholds(self.consensus, policy) else Decision.REFINE
        return self.decision is expected

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "query_id": self.response.query_id,
            "iteration": self.iteration,
            "response_text": self.response.text,
            "ethics_ama": self.ethics.ama_score,
            "ethics_principles": sorted(int(p) for p in self.ethics.violated_principles),
            "ethics_reasons": list(self.ethics.reasons),
            "risk_sra": self.risk.sra_level,
            "risk_reasons": list(self.risk.reasons),
            "consensus_ama": self.consensus.ama_score,
            "consensus_sra": self.consensus.sra_level,
            "consensus_reasons": list(self.consensus.reasons),
            "decision": self.decision.value,
            "mandatory_refinement": self.mandatory_refinement,
            "feedback_directives": list(self.feedback.directives) if self.feedback else None,
        }
        return rec

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "IterationTrace":
        consensus = ConsensusRecord(
            ama_score=rec["consensus_ama"],
            sra_level=rec["consensus_sra"],
            reasons=tuple(rec.get("consensus_reasons", ())),
        )
        directives = rec.get("feedback_directives")
        feedback = (
            FeedbackPlan(directives=tuple(directives), source_consensus=consensus)
            if directives
            else None
        )
        return cls(
            iteration=rec["iteration"],
            response=ResponseDraft(
                query_id=rec["query_id"], iteration=rec["iteration"], text=rec["response_text"]
            ),
            ethics=EthicsAssessment(
                ama_score=rec["ethics_ama"],
                violated_principles=frozenset(
                    AmaPrinciple.parse(p) for p in rec.get("ethics_principles", ())
                ),
                reasons=tuple(rec.get("ethics_reasons", ())),
            ),
            risk=RiskAssessment(
                sra_level=rec["risk_sra"], reasons=tuple(rec.get("risk_reasons", ()))
            ),
            consensus=consensus,
            decision=Decision(rec["decision"]),
            mandatory_refinement=bool(rec.get("mandatory_refinement", False)),
            feedback=feedback,
        )


@dataclass(frozen=True)
class QueryRunResult:
    """Full trajectory for one query: ordered traces plus outcome summary."""

    query: Query
    traces: tuple[IterationTrace, ...]
    status: RunStatus
    iterations_used: int
    initial_ama: int
    final_ama: int
    initial_sra: int
    final_sra: int
    #: Iteration budget in force when the result was produced; needed to
    #: validate the non-convergence invariant under non-default policies.
    max_iterations: int = MAX_ITERATIONS

    def __post_init__(self) -> None:
        object.__setattr__(self, "traces", tuple(self.traces))
        if not isinstance(self.status, RunStatus):
            object.__setattr__(self, "status", RunStatus(self.status))
        if not self.traces:
            raise RangeError("a run result must contain at least one trace")
        if self.iterations_used != len(self.traces):
            raise RangeError(
                f"iterations_used {self.iterations_used} != trace count {len(self.traces)}"
            )
        last = self.traces[-1]
        converged = last.decision is Decision.STOP
        if converged != (self.status is RunStatus.CONVERGED):
            raise RangeError("status must match the final trace decision")
        if self.status is RunStatus.NON_CONVERGENT and self.iterations_used != self.max_iterations:
            raise RangeError(
                f"non-convergent result must use the full budget of "
                f"{self.max_iterations} iterations, used {self.iterations_used}"
            )
        for t in self.traces[:-1]:
            if t.decision is not Decision.REFINE:
                raise RangeError("every trace before the last must decide refine")
        for i, t in enumerate(self.traces, start=1):
            if t.iteration != i:
                raise RangeError(f"trace {i} carries iteration {t.iteration}")
        if self.initial_ama != self.traces[0].consensus.ama_score:
            raise RangeError("initial_ama must come from the first trace")
        if self.initial_sra != self.traces[0].consensus.sra_level:
            raise RangeError("initial_sra must come from the first trace")
        if self.final_ama != last.consensus.ama_score:
            raise RangeError("final_ama must come from the last trace")
        if self.final_sra != last.consensus.sra_level:
            raise RangeError("final_sra must come from the last trace")

    @property
    def converged(self) -> bool:
        return self.status is RunStatus.CONVERGED

    def to_record(self) -> dict[str, Any]:
        return {
            "query_id": self.query.id,
            "status": self.status.value,
            "iterations_used": self.iterations_used,
            "initial_ama": self.initial_ama,
            "final_ama": self.final_ama,
            "initial_sra": self.initial_sra,
            "final_sra": self.final_sra,
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_parts(
        cls,
        query: Query,
        traces: Iterable[IterationTrace],
        max_iterations: int = MAX_ITERATIONS,
    ) -> "QueryRunResult":
        """Build a result from a complete trace list, deriving the summary."""
        traces = tuple(traces)
        if not traces:
            raise RangeError("cannot build a result from zero traces")
        last = traces[-1]
        status = RunStatus.CONVERGED if last.decision is Decision.STOP else RunStatus.NON_CONVERGENT
        return cls(
            query=query,
            traces=traces,
            status=status,
            iterations_used=len(traces),
            initial_ama=traces[0].consensus.ama_score,
            initial_sra=traces[0].consensus.sra_level,
            final_ama=last.consensus.ama_score,
            final_sra=last.consensus.sra_level,
            max_iterations=max_iterations,
        )


@dataclass(frozen=True)
class QueryFailure:
    """Marker for a query abandoned due to an infrastructure/agent error.

    Distinct from non-convergence: the loop did not finish, so the query
    contributes to denominators but never to convergence or score metrics.
    """

    query: Query
    stage: str
    error: str
    partial_traces: tuple[IterationTrace, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "partial_traces", tuple(self.partial_traces))

    def to_record(self) -> dict[str, Any]:
        return {
            "query_id": self.query.id,
            "stage": self.stage,
            "error": self.error,
            "partial_iterations": len(self.partial_traces),
        }


#: Union of per-query outcomes produced by a dataset run.
RunOutcome = QueryRunResult | QueryFailure
