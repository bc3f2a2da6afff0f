"""Behavioral contracts shared by every agent backend."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Protocol, Union, runtime_checkable

from ..errors import RangeError
from ..model import EthicsAssessment, FeedbackPlan, Query, ResponseDraft, RiskAssessment

Assessment = Union[EthicsAssessment, RiskAssessment]


class EvaluatorRole(str, Enum):
    ETHICS = "ethics"
    RISK = "risk"


@dataclass(frozen=True)
class SamplingConfig:
    """Inference settings carried verbatim on every remote request."""

    temperature: float = 0.7
    top_p: float = 0.9
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise RangeError(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise RangeError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            raise RangeError(f"max_tokens must be >= 1, got {self.max_tokens}")

    def to_record(self) -> dict[str, Any]:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "SamplingConfig":
        defaults = cls()
        return cls(
            temperature=rec.get("temperature", defaults.temperature),
            top_p=rec.get("top_p", defaults.top_p),
            max_tokens=rec.get("max_tokens", defaults.max_tokens),
        )


@runtime_checkable
class Generator(Protocol):
    """Produces an initial draft and revises it under feedback.

    ``refine`` must return a draft whose iteration is exactly one past the
    previous draft's.
    """

    label: str

    def generate(self, query: Query) -> ResponseDraft: ...

    def refine(
        self, previous: ResponseDraft, plan: FeedbackPlan, query: Query
    ) -> ResponseDraft: ...


@runtime_checkable
class Evaluator(Protocol):
    """Judges one draft against one rubric.

    Ethics-role evaluators emit EthicsAssessment; risk-role evaluators emit
    RiskAssessment. Implementations must be safe to call from multiple
    worker threads at once.
    """

    role: EvaluatorRole

    def assess(self, response: ResponseDraft, query: Query) -> Assessment: ...
