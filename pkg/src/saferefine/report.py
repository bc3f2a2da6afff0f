"""Render metrics into markdown tables and per-table CSV files.

Markdown is for humans and rounds values; the CSV files carry full-precision
numbers so a parse of the emitted files reproduces the metric values
exactly. Layouts follow the five standard tables (overall comparison,
iteration requirements, per-principle iterations, violation reduction by
risk category, risk-level distribution) plus an infrastructure-failures
appendix and a footnote block stating every metric convention.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ReportError
from .metrics import MetricsReport, velocity_between
from .model import MAX_ITERATIONS, AmaPrinciple, QueryFailure, RiskCategory
from .rubric import SRA_LEVELS

_CATEGORY_ORDER = (
    RiskCategory.EMERGENCY,
    RiskCategory.DIAGNOSTIC,
    RiskCategory.THERAPEUTIC,
    RiskCategory.PREVENTIVE,
)

FOOTNOTES = (
    "Iteration-row percentages are shares of converged queries; converged/"
    "failed-row percentages are shares of all queries.",
    "Mean iterations is over converged queries only unless the report says "
    "otherwise; standard deviations are population standard deviations.",
    "Violation reduction per group is 100 x (before - after) / before over "
    "group mean scores; the overall figure pools all scored queries, so "
    "categories are weighted by their sizes.",
    "Risk downgrade rate divides downgrades (initial level >= 3 finishing "
    "at level <= 2) by the at-risk subset (initial level >= 3), not by all "
    "queries.",
    "Velocity is a derived interpretation: the per-category drop in mean "
    "violation score divided by mean iterations, averaged over the two "
    "generators.",
    "Infrastructure failures are queries abandoned on adapter errors; they "
    "count toward convergence denominators but never contribute scores.",
)


def _pct(value: float | None, digits: int = 2) -> str:
    return "n/a" if value is None else f"{100.0 * value:.{digits}f}%"


def _num(value: float | None, digits: int = 2) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join(" --- " for _ in header) + "|")
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return lines


def _check_reports(reports: Sequence[MetricsReport]) -> None:
    if not reports:
        raise ReportError("no metrics to report")
    if len(reports) > 2:
        raise ReportError("comparison reports support at most two runs")
    for r in reports:
        if r.total_queries == 0:
            raise ReportError(f"run {r.generator_label!r} contains zero queries")


def _velocity_column(reports: Sequence[MetricsReport]) -> dict[RiskCategory, float] | None:
    if len(reports) != 2:
        return None
    return velocity_between(reports[0], reports[1])


def render_markdown(
    reports: Sequence[MetricsReport],
    failures: Mapping[str, Sequence[QueryFailure]] | None = None,
    incomplete: bool = False,
) -> str:
    """One markdown document with all five tables; two reports side by side
    when comparing generators."""
    _check_reports(reports)
    labels = [r.generator_label or f"run {i + 1}" for i, r in enumerate(reports)]
    lines: list[str] = ["# Safety refinement report", ""]
    if incomplete:
        lines += [
            "> **Incomplete run**: this report covers only the queries finished "
            "so far; totals will change as the run progresses.",
            "",
        ]

    lines += ["## Overall performance", ""]
    rows = [
        ["Convergence rate"] + [_pct(r.convergence_rate) for r in reports],
        ["Mean iterations"] + [_num(r.mean_iterations) for r in reports],
        ["Iteration std dev"] + [_num(r.iteration_std) for r in reports],
        ["Violation reduction"]
        + [
            _num(r.overall_reduction.reduction_pct) + "%"
            if r.overall_reduction and r.overall_reduction.reduction_pct is not None
            else "n/a"
            for r in reports
        ],
        ["Risk downgrade rate"] + [_pct(r.risk_downgrade_rate) for r in reports],
    ]
    lines += _md_table(["Metric"] + labels, rows) + [""]

    lines += ["## Iteration requirements", ""]
    it_rows: list[list[str]] = []
    for i in range(1, MAX_ITERATIONS + 1):
        row = [str(i)]
        for r in reports:
            count = r.iteration_histogram.get(i, 0)
            share = count / r.converged_count if r.converged_count else 0.0
            row.append(f"{count} ({share:.0%})")
        it_rows.append(row)
    conv_row = ["Converged"]
    nonconv_row = ["Non-convergent"]
    fail_row = ["Infrastructure failures"]
    for r in reports:
        conv_row.append(f"{r.converged_count} ({r.converged_count / r.total_queries:.0%})")
        nonconv_row.append(
            f"{r.nonconvergent_count} ({r.nonconvergent_count / r.total_queries:.0%})"
        )
        fail_row.append(
            f"{r.infrastructure_failed_count} "
            f"({r.infrastructure_failed_count / r.total_queries:.0%})"
        )
    it_rows += [conv_row, nonconv_row, fail_row]
    lines += _md_table(["Iterations"] + labels, it_rows) + [""]

    lines += ["## Iterations by principle", ""]
    pr_rows = []
    for principle in AmaPrinciple:
        row = [f"{principle.roman}. {principle.label}"]
        for r in reports:
            entry = r.per_principle_iterations.get(principle)
            row.append("n/a" if entry is None else f"{entry[0]:.2f} +/- {entry[1]:.2f}")
        pr_rows.append(row)
    lines += _md_table(["Principle"] + labels, pr_rows) + [""]

    lines += ["## Violation reduction by risk category", ""]
    vel = _velocity_column(reports)
    header = ["Category"] + [f"{lab} (before -> after)" for lab in labels]
    if vel is not None:
        header.append("Velocity")
    cat_rows = []
    for category in _CATEGORY_ORDER:
        row = [category.value.capitalize()]
        for r in reports:
            red = r.per_risk_category_reduction.get(category)
            row.append(
                "n/a" if red is None else f"{red.before_mean:.2f} -> {red.after_mean:.2f}"
            )
        if vel is not None:
            row.append(_num(vel.get(category)))
        cat_rows.append(row)
    lines += _md_table(header, cat_rows) + [""]
    excluded = [f"{lab}: {r.unlabeled_excluded}" for lab, r in zip(labels, reports)]
    lines += [f"Unlabeled queries excluded from category rows: {', '.join(excluded)}.", ""]

    lines += ["## Risk level distribution", ""]
    dist_header = ["Level"]
    for lab in labels:
        dist_header += [f"{lab} initial", f"{lab} final"]
    dist_rows = []
    for level_def in SRA_LEVELS:
        row = [f"{level_def.level} ({level_def.name})"]
        for r in reports:
            row.append(_pct(r.sra_initial.get(level_def.level), digits=0))
            row.append(_pct(r.sra_final.get(level_def.level), digits=0))
        dist_rows.append(row)
    lines += _md_table(dist_header, dist_rows) + [""]

    lines += ["## Infrastructure failures", ""]
    any_failures = False
    for lab, r in zip(labels, reports):
        run_failures = list((failures or {}).get(lab, ()))
        if r.infrastructure_failed_count or run_failures:
            any_failures = True
            lines.append(f"- {lab}: {r.infrastructure_failed_count} failed")
            for f in run_failures:
                lines.append(f"  - {f.query.id} at {f.stage}: {f.error}")
    if not any_failures:
        lines.append("None.")
    lines.append("")

    lines += ["## Notes", ""]
    lines += [f"{i}. {note}" for i, note in enumerate(FOOTNOTES, start=1)]
    lines.append("")
    return "\n".join(lines)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def render_csv_tables(reports: Sequence[MetricsReport]) -> dict[str, str]:
    """Full-precision CSV, one document per table, keyed by table name."""
    _check_reports(reports)
    labels = [r.generator_label or f"run_{i + 1}" for i, r in enumerate(reports)]
    tables: dict[str, str] = {}

    header = ["metric"] + labels
    rows: list[list[object]] = [
        ["convergence_rate"] + [r.convergence_rate for r in reports],
        ["mean_iterations"] + [r.mean_iterations for r in reports],
        ["iteration_std"] + [r.iteration_std for r in reports],
        ["overall_reduction_pct"]
        + [r.overall_reduction.reduction_pct if r.overall_reduction else None for r in reports],
        ["risk_downgrade_rate"] + [r.risk_downgrade_rate for r in reports],
        ["total_queries"] + [r.total_queries for r in reports],
        ["converged_count"] + [r.converged_count for r in reports],
        ["nonconvergent_count"] + [r.nonconvergent_count for r in reports],
        ["infrastructure_failed_count"] + [r.infrastructure_failed_count for r in reports],
    ]
    tables["overall"] = _csv_text(header, rows)

    rows = []
    for i in range(1, MAX_ITERATIONS + 1):
        rows.append([i] + [r.iteration_histogram.get(i, 0) for r in reports])
    tables["iterations"] = _csv_text(["iterations"] + labels, rows)

    rows = []
    for principle in AmaPrinciple:
        row: list[object] = [int(principle), principle.label]
        for r in reports:
            entry = r.per_principle_iterations.get(principle)
            row += [entry[0], entry[1], entry[2]] if entry else [None, None, 0]
        rows.append(row)
    pr_header = ["principle", "label"]
    for lab in labels:
        pr_header += [f"{lab}_mean", f"{lab}_std", f"{lab}_converged"]
    tables["principle_iterations"] = _csv_text(pr_header, rows)

    vel = _velocity_column(reports)
    vr_header = ["category"]
    for lab in labels:
        vr_header += [f"{lab}_before", f"{lab}_after", f"{lab}_reduction_pct"]
    if vel is not None:
        vr_header.append("velocity")
    rows = []
    for category in _CATEGORY_ORDER:
        row = [category.value]
        for r in reports:
            red = r.per_risk_category_reduction.get(category)
            row += [red.before_mean, red.after_mean, red.reduction_pct] if red else [None, None, None]
        if vel is not None:
            row.append(vel.get(category))
        rows.append(row)
    tables["violation_reduction"] = _csv_text(vr_header, rows)

    dist_header = ["level"]
    for lab in labels:
        dist_header += [f"{lab}_initial", f"{lab}_final"]
    rows = []
    for level in range(1, 6):
        row = [level]
        for r in reports:
            row += [r.sra_initial.get(level), r.sra_final.get(level)]
        rows.append(row)
    tables["sra_distribution"] = _csv_text(dist_header, rows)
    return tables


def write_report_files(
    reports: Sequence[MetricsReport],
    out_dir: str | Path,
    failures: Mapping[str, Sequence[QueryFailure]] | None = None,
    incomplete: bool = False,
) -> dict[str, Path]:
    """Write report.md plus one CSV per table; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    md_path = out_dir / "report.md"
    md_path.write_text(
        render_markdown(reports, failures=failures, incomplete=incomplete), encoding="utf-8"
    )
    written["report"] = md_path
    for name, text in render_csv_tables(reports).items():
        path = out_dir / f"{name}.csv"
        path.write_text(text, encoding="utf-8")
        written[name] = path
    return written
