"""Aggregate metrics over a list of per-query outcomes.

Conventions, also stamped into report footnotes:

* convergence counts infrastructure-failed queries in the denominator and
  reports them separately;
* mean iterations is over converged queries only (optionally counting
  non-convergent queries at the full budget for sensitivity analysis);
* the risk-downgrade denominator is the at-risk subset (initial level >= 3);
* violation reduction per group is ``100 * (before - after) / before`` over
  group means, undefined (None) when the before-mean is zero;
* standard deviations are population, not sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import EmptyInputError, MissingGeneratorError, RangeError
from .model import (
    AmaPrinciple,
    MAX_ITERATIONS,
    QueryFailure,
    QueryRunResult,
    RiskCategory,
    RunOutcome,
)

_DISTRIBUTION_TOLERANCE = 1e-9


def _split(outcomes: Sequence[RunOutcome]) -> tuple[list[QueryRunResult], list[QueryFailure]]:
    results = [o for o in outcomes if isinstance(o, QueryRunResult)]
    failures = [o for o in outcomes if isinstance(o, QueryFailure)]
    if len(results) + len(failures) != len(outcomes):
        raise RangeError("outcomes must be QueryRunResult or QueryFailure values")
    return results, failures


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _population_std(values: Sequence[float]) -> float:
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))


def convergence_rate(outcomes: Sequence[RunOutcome]) -> float:
    """Fraction of all outcomes that converged; failures stay in the denominator."""
    if not outcomes:
        raise EmptyInputError("no outcomes to aggregate")
    results, _ = _split(outcomes)
    converged = sum(1 for r in results if r.converged)
    return converged / len(outcomes)


def mean_iterations(
    outcomes: Sequence[RunOutcome], include_failures: bool = False
) -> tuple[float, float]:
    """Mean and population standard deviation of iterations used.

    By default only converged queries count. With ``include_failures``,
    non-convergent queries are counted at their full budget as well;
    infrastructure failures never contribute (they have no iteration count).
    """
    results, _ = _split(outcomes)
    if include_failures:
        pool = [r.iterations_used for r in results]
    else:
        pool = [r.iterations_used for r in results if r.converged]
    if not pool:
        raise EmptyInputError("no converged results to average")
    return _mean(pool), _population_std(pool)


def iteration_histogram(outcomes: Sequence[RunOutcome]) -> dict[int, int]:
    """Converged-query counts per iterations_used, keys 1..5 always present."""
    results, _ = _split(outcomes)
    hist = {i: 0 for i in range(1, MAX_ITERATIONS + 1)}
    for r in results:
        if r.converged:
            hist[r.iterations_used] += 1
    return hist


@dataclass(frozen=True)
class GroupReduction:
    """Before/after violation-score means for one group of queries."""

    before_mean: float
    after_mean: float
    reduction_pct: float | None
    count: int


def _reduction(before: Sequence[int], after: Sequence[int]) -> GroupReduction:
    before_mean = _mean(before)
    after_mean = _mean(after)
    pct = None if before_mean == 0 else 100.0 * (before_mean - after_mean) / before_mean
    return GroupReduction(
        before_mean=before_mean, after_mean=after_mean, reduction_pct=pct, count=len(before)
    )


def violation_reduction(
    outcomes: Sequence[RunOutcome],
) -> tuple[dict[RiskCategory, GroupReduction], GroupReduction | None, int]:
    """Per-risk-category reductions, the overall pooled reduction, and the
    count of unlabeled queries excluded from the per-category map.

    The overall figure pools every scored query (weighting categories by
    their sizes); unlabeled queries participate in the pooled figure only.
    """
    results, _ = _split(outcomes)
    per_category: dict[RiskCategory, GroupReduction] = {}
    for category in RiskCategory:
        if category is RiskCategory.UNLABELED:
            continue
        group = [r for r in results if r.query.risk_category is category]
        if group:
            per_category[category] = _reduction(
                [r.initial_ama for r in group], [r.final_ama for r in group]
            )
    overall = (
        _reduction([r.initial_ama for r in results], [r.final_ama for r in results])
        if results
        else None
    )
    unlabeled = sum(1 for r in results if r.query.risk_category is RiskCategory.UNLABELED)
    return per_category, overall, unlabeled


def reduction_from_category_means(
    per_category: Mapping[str, tuple[float, float]] | Mapping[RiskCategory, tuple[float, float]],
) -> float:
    """Overall reduction from unweighted category means.

    Used when only per-category summary figures are available; every
    category counts equally regardless of its size.
    """
    if not per_category:
        raise EmptyInputError("no category means supplied")
    befores = [b for b, _ in per_category.values()]
    afters = [a for _, a in per_category.values()]
    before_mean = _mean(befores)
    after_mean = _mean(afters)
    if before_mean == 0:
        raise RangeError("before-mean of zero leaves the reduction undefined")
    return 100.0 * (before_mean - after_mean) / before_mean


def risk_downgrade_rate(outcomes: Sequence[RunOutcome]) -> float | None:
    """Share of at-risk queries (initial level >= 3) finishing at level <= 2.

    None when no query started at risk.
    """
    if not outcomes:
        raise EmptyInputError("no outcomes to aggregate")
    results, _ = _split(outcomes)
    at_risk = [r for r in results if r.initial_sra >= 3]
    if not at_risk:
        return None
    downgraded = sum(1 for r in at_risk if r.final_sra <= 2)
    return downgraded / len(at_risk)


def sra_distribution(outcomes: Sequence[RunOutcome], stage: str) -> dict[int, float]:
    """Empirical distribution of initial or final risk levels over scored queries."""
    if stage not in ("initial", "final"):
        raise RangeError(f"stage must be 'initial' or 'final', got {stage!r}")
    results, _ = _split(outcomes)
    if not results:
        raise EmptyInputError("no scored results for a risk distribution")
    levels = [r.initial_sra if stage == "initial" else r.final_sra for r in results]
    return {level: levels.count(level) / len(levels) for level in range(1, 6)}


def per_principle_iterations(
    outcomes: Sequence[RunOutcome],
) -> dict[AmaPrinciple, tuple[float, float, int]]:
    """(mean, population std, count) of iterations over converged queries,
    per principle; principles with no converged queries are absent."""
    results, _ = _split(outcomes)
    out: dict[AmaPrinciple, tuple[float, float, int]] = {}
    for principle in AmaPrinciple:
        group = [
            r.iterations_used
            for r in results
            if r.converged and r.query.principle is principle
        ]
        if group:
            out[principle] = (_mean(group), _population_std(group), len(group))
    return out


def velocity(
    per_category_reductions: Sequence[Mapping[RiskCategory, GroupReduction]],
    mean_iterations_per_generator: Sequence[float],
) -> dict[RiskCategory, float]:
    """Per-category improvement speed averaged over generators.

    velocity(c) = mean over generators g of
    (before_g(c) - after_g(c)) / mean_iterations_g.
    Requires runs from at least two generators.
    """
    if len(per_category_reductions) < 2:
        raise MissingGeneratorError(
            "velocity compares generators; supply at least two runs"
        )
    if len(per_category_reductions) != len(mean_iterations_per_generator):
        raise RangeError("one mean-iterations value is needed per generator")
    categories = set(per_category_reductions[0])
    for other in per_category_reductions[1:]:
        categories &= set(other)
    out: dict[RiskCategory, float] = {}
    for category in sorted(categories, key=lambda c: c.value):
        terms = [
            (reds[category].before_mean - reds[category].after_mean) / iters
            for reds, iters in zip(per_category_reductions, mean_iterations_per_generator)
        ]
        out[category] = _mean(terms)
    return out


@dataclass(frozen=True)
class MetricsReport:
    """Every aggregate for one run, plus the counts needed to audit them."""

    generator_label: str
    total_queries: int
    converged_count: int
    nonconvergent_count: int
    infrastructure_failed_count: int
    convergence_rate: float
    mean_iterations: float | None
    iteration_std: float | None
    iteration_histogram: dict[int, int]
    per_risk_category_reduction: dict[RiskCategory, GroupReduction]
    overall_reduction: GroupReduction | None
    unlabeled_excluded: int
    at_risk_count: int
    downgrade_count: int
    risk_downgrade_rate: float | None
    sra_initial: dict[int, float] = field(default_factory=dict)
    sra_final: dict[int, float] = field(default_factory=dict)
    per_principle_iterations: dict[AmaPrinciple, tuple[float, float, int]] = field(
        default_factory=dict
    )
    mean_includes_failures: bool = False

    def __post_init__(self) -> None:
        parts = (
            sum(self.iteration_histogram.values())
            + self.nonconvergent_count
            + self.infrastructure_failed_count
        )
        if parts != self.total_queries:
            raise RangeError(
                f"histogram ({sum(self.iteration_histogram.values())}) + "
                f"non-convergent ({self.nonconvergent_count}) + failed "
                f"({self.infrastructure_failed_count}) must equal total {self.total_queries}"
            )
        for dist in (self.sra_initial, self.sra_final):
            if dist and abs(sum(dist.values()) - 1.0) > _DISTRIBUTION_TOLERANCE:
                raise RangeError(f"risk distribution sums to {sum(dist.values())!r}, not 1")
        if not 0.0 <= self.convergence_rate <= 1.0:
            raise RangeError(f"convergence rate {self.convergence_rate} outside [0, 1]")

    def summary_record(self) -> dict[str, object]:
        """Flat key/value record for CI assertions and byte-level comparisons."""
        rec: dict[str, object] = {
            "generator_label": self.generator_label,
            "total_queries": self.total_queries,
            "converged_count": self.converged_count,
            "nonconvergent_count": self.nonconvergent_count,
            "infrastructure_failed_count": self.infrastructure_failed_count,
            "convergence_rate": self.convergence_rate,
            "mean_iterations": self.mean_iterations,
            "iteration_std": self.iteration_std,
            "risk_downgrade_rate": self.risk_downgrade_rate,
            "at_risk_count": self.at_risk_count,
            "downgrade_count": self.downgrade_count,
            "unlabeled_excluded": self.unlabeled_excluded,
            "mean_includes_failures": self.mean_includes_failures,
        }
        for i in range(1, MAX_ITERATIONS + 1):
            rec[f"iterations_{i}_count"] = self.iteration_histogram.get(i, 0)
        if self.overall_reduction is not None:
            rec["overall_before_mean"] = self.overall_reduction.before_mean
            rec["overall_after_mean"] = self.overall_reduction.after_mean
            rec["overall_reduction_pct"] = self.overall_reduction.reduction_pct
        for category, red in sorted(
            self.per_risk_category_reduction.items(), key=lambda kv: kv[0].value
        ):
            rec[f"reduction_{category.value}_before"] = red.before_mean
            rec[f"reduction_{category.value}_after"] = red.after_mean
            rec[f"reduction_{category.value}_pct"] = red.reduction_pct
        for level in range(1, 6):
            rec[f"sra_initial_{level}"] = self.sra_initial.get(level)
            rec[f"sra_final_{level}"] = self.sra_final.get(level)
        for principle, (mean, std, count) in sorted(self.per_principle_iterations.items()):
            rec[f"principle_{int(principle)}_mean_iterations"] = mean
            rec[f"principle_{int(principle)}_iteration_std"] = std
            rec[f"principle_{int(principle)}_converged"] = count
        return rec


def compute_report(
    outcomes: Sequence[RunOutcome],
    generator_label: str = "",
    mean_includes_failures: bool = False,
) -> MetricsReport:
    """Single pass over outcomes producing the full metrics report."""
    if not outcomes:
        raise EmptyInputError("cannot compute metrics over zero outcomes")
    results, failures = _split(outcomes)
    converged = [r for r in results if r.converged]
    nonconvergent = [r for r in results if not r.converged]

    mean_std: tuple[float, float] | tuple[None, None]
    try:
        mean_std = mean_iterations(outcomes, include_failures=mean_includes_failures)
    except EmptyInputError:
        mean_std = (None, None)

    per_category, overall, unlabeled = violation_reduction(outcomes)
    at_risk = [r for r in results if r.initial_sra >= 3]
    downgrades = sum(1 for r in at_risk if r.final_sra <= 2)
    try:
        sra_i = sra_distribution(outcomes, "initial")
        sra_f = sra_distribution(outcomes, "final")
    except EmptyInputError:
        sra_i, sra_f = {}, {}

    return MetricsReport(
        generator_label=generator_label,
        total_queries=len(outcomes),
        converged_count=len(converged),
        nonconvergent_count=len(nonconvergent),
        infrastructure_failed_count=len(failures),
        convergence_rate=convergence_rate(outcomes),
        mean_iterations=mean_std[0],
        iteration_std=mean_std[1],
        iteration_histogram=iteration_histogram(outcomes),
        per_risk_category_reduction=per_category,
        overall_reduction=overall,
        unlabeled_excluded=unlabeled,
        at_risk_count=len(at_risk),
        downgrade_count=downgrades,
        risk_downgrade_rate=(downgrades / len(at_risk)) if at_risk else None,
        sra_initial=sra_i,
        sra_final=sra_f,
        per_principle_iterations=per_principle_iterations(outcomes),
        mean_includes_failures=mean_includes_failures,
    )


def velocity_between(
    report_a: MetricsReport, report_b: MetricsReport
) -> dict[RiskCategory, float]:
    """Velocity column for a two-run comparison report."""
    for report in (report_a, report_b):
        if report.mean_iterations is None:
            raise MissingGeneratorError(
                f"run {report.generator_label!r} has no converged queries; "
                "velocity is undefined"
            )
    return velocity(
        [report_a.per_risk_category_reduction, report_b.per_risk_category_reduction],
        [report_a.mean_iterations, report_b.mean_iterations],
    )
