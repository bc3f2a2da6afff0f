"""Multi-agent safety refinement loop for medical LLM outputs.

One generator drafts a response; an ethics evaluator and a risk evaluator
judge it independently; their verdicts merge into a consensus checked
against deployability thresholds. Failing responses get a deterministic
revision plan and another round, up to a fixed iteration budget. The
package ships the loop engine, scripted/simulated/remote agent backends,
a crash-safe run store with resume, and a metrics/report pipeline.
"""

from .errors import (
    AgentFailure,
    BalanceError,
    ConfigError,
    ConfigMismatchError,
    DuplicateIdError,
    EmptyInputError,
    MalformedResponseError,
    MissingGeneratorError,
    MissingTrajectoryError,
    ParseError,
    PreconditionError,
    RangeError,
    ReportError,
    SafeRefineError,
    SealedRunError,
    StorageError,
    TransportError,
    UnknownRunError,
)
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
    RiskCategory,
    RunStatus,
    make_consensus,
    passes_thresholds,
)
from .rubric import (
    SRA_LEVELS,
    SraLevelDefinition,
    ThresholdPolicy,
    is_deployable,
    is_risk_downgrade,
    requires_mandatory_refinement,
    rubric_text,
)
from .engine import LoopConfig, build_feedback_plan, merge_consensus, run_dataset, run_query
from .dataset import Dataset, load_dataset, partition_by, synthetic_dataset
from .metrics import MetricsReport, compute_report
from .report import render_markdown, write_report_files

__version__ = "0.1.0"

__all__ = [
    "AgentFailure",
    "AmaPrinciple",
    "BalanceError",
    "ConfigError",
    "ConfigMismatchError",
    "ConsensusRecord",
    "Dataset",
    "Decision",
    "DuplicateIdError",
    "EmptyInputError",
    "EthicsAssessment",
    "FeedbackPlan",
    "IterationTrace",
    "LoopConfig",
    "MalformedResponseError",
    "MetricsReport",
    "MissingGeneratorError",
    "MissingTrajectoryError",
    "ParseError",
    "PreconditionError",
    "Query",
    "QueryFailure",
    "QueryRunResult",
    "RangeError",
    "ReportError",
    "ResponseDraft",
    "RiskAssessment",
    "RiskCategory",
    "RunStatus",
    "SRA_LEVELS",
    "SafeRefineError",
    "SealedRunError",
    "SraLevelDefinition",
    "StorageError",
    "ThresholdPolicy",
    "TransportError",
    "UnknownRunError",
    "build_feedback_plan",
    "compute_report",
    "is_deployable",
    "is_risk_downgrade",
    "load_dataset",
    "make_consensus",
    "merge_consensus",
    "partition_by",
    "passes_thresholds",
    "render_markdown",
    "requires_mandatory_refinement",
    "rubric_text",
    "run_dataset",
    "run_query",
    "synthetic_dataset",
    "write_report_files",
]
