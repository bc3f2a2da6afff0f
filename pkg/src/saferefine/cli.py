"""Command-line entry point: validate, run, simulate, report.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime error or agent-failure budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig, load_run_config
from .dataset import check_balance, load_dataset, synthetic_dataset
from .engine import run_dataset
from .errors import (
    BalanceError,
    ConfigError,
    ConfigMismatchError,
    DuplicateIdError,
    EmptyInputError,
    ParseError,
    ReportError,
    SafeRefineError,
    StorageError,
    UnknownRunError,
)
from .metrics import compute_report
from .model import AmaPrinciple
from .report import render_markdown, write_report_files
from .rubric import rubric_text
from .store import (
    STATUS_IN_PROGRESS,
    RunWriter,
    digest_config,
    find_runs,
    load_run,
    resume_run,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this CLI reserves 2 for data."""

    def error(self, message):  # noqa: A003 - argparse API
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="saferefine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate a dataset file")
    p_validate.add_argument("dataset", nargs="?", help="line-delimited dataset file")
    p_validate.add_argument(
        "--strict", action="store_true", help="require equal per-principle counts"
    )
    p_validate.add_argument(
        "--show-rubric", action="store_true", help="print the scoring rubrics and exit"
    )

    p_run = sub.add_parser("run", help="run the refinement loop over a dataset")
    p_run.add_argument("config", help="run configuration JSON file")
    p_run.add_argument("--resume", action="store_true", help="resume an interrupted run")
    p_run.add_argument("--run-id", help="explicit run id (new runs) or run to resume")
    p_run.add_argument("--dataset", help="override the dataset path")
    p_run.add_argument("--output-dir", help="override the output directory")
    p_run.add_argument("--worker-limit", type=int, help="override the worker limit")
    p_run.add_argument("--seed", type=int, help="override the RNG seed")
    p_run.add_argument(
        "--mean-includes-failures",
        action="store_true",
        help="count non-convergent queries at the full budget in mean iterations",
    )

    p_sim = sub.add_parser("simulate", help="run the loop over a synthetic dataset")
    p_sim.add_argument("config", help="run configuration JSON file with simulator settings")
    p_sim.add_argument("--n", type=int, required=True, help="number of synthetic queries")
    p_sim.add_argument("--seed", type=int, help="override the RNG seed")
    p_sim.add_argument("--run-id", help="explicit run id")
    p_sim.add_argument("--output-dir", help="override the output directory")
    p_sim.add_argument("--worker-limit", type=int, help="override the worker limit")
    p_sim.add_argument("--mean-includes-failures", action="store_true")

    p_report = sub.add_parser("report", help="recompute and render metrics from run stores")
    p_report.add_argument("run_dirs", nargs="+", help="one run directory, or two to compare")
    p_report.add_argument(
        "--format", choices=("markdown", "csv"), default="markdown", dest="fmt"
    )
    p_report.add_argument("--out", help="write report files into this directory")
    p_report.add_argument("--mean-includes-failures", action="store_true")
    return parser


def cmd_validate(args) -> int:
    if args.show_rubric:
        print(rubric_text())
        if not args.dataset:
            return EXIT_OK
    if not args.dataset:
        print("error: a dataset path is required unless --show-rubric", file=sys.stderr)
        return EXIT_USAGE
    try:
        dataset = load_dataset(args.dataset)
    except FileNotFoundError:
        print(f"error: dataset file not found: {args.dataset}", file=sys.stderr)
        return EXIT_DATA
    except (ParseError, DuplicateIdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    counts = dataset.per_principle_counts
    for principle in AmaPrinciple:
        print(f"  {principle.roman:>4} {principle.label}: {counts[principle]}")
    print(f"total: {len(dataset)} queries")
    if args.strict:
        try:
            common = check_balance(dataset)
        except BalanceError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"balanced: 9 x {common} queries per principle")
    return EXIT_OK


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    if getattr(args, "dataset", None):
        config.dataset_path = Path(args.dataset)
    if getattr(args, "output_dir", None):
        config.output_dir = Path(args.output_dir)
    if getattr(args, "worker_limit", None):
        config.worker_limit = args.worker_limit
    if getattr(args, "seed", None) is not None:
        config.rng_seed = args.seed
    return config


def _execute(config: RunConfig, dataset, args, resume: bool) -> int:
    loop = config.build_loop()
    digest = digest_config(config.digest_record(dataset.digest()))
    label = config.generator_label

    if resume:
        run_id = args.run_id
        if not run_id:
            candidates = [
                m
                for m in find_runs(config.output_dir, status=STATUS_IN_PROGRESS)
                if m.config_digest == digest
            ]
            if not candidates:
                print("error: no in-progress run matches this configuration", file=sys.stderr)
                return EXIT_USAGE
            if len(candidates) > 1:
                ids = ", ".join(m.run_id for m in candidates)
                print(f"error: several runs match; pass --run-id ({ids})", file=sys.stderr)
                return EXIT_USAGE
            run_id = candidates[0].run_id
        pending_ids = set(resume_run(config.output_dir, run_id, dataset, digest))
        writer = RunWriter.reopen(config.output_dir, run_id, digest)
        queries = [q for q in dataset if q.id in pending_ids]
    else:
        writer = RunWriter.create(
            config.output_dir, digest, label, run_id=getattr(args, "run_id", None)
        )
        queries = list(dataset)

    run_dir = writer.run_dir
    try:
        run_dataset(queries, loop, worker_limit=config.worker_limit, sink=writer)
    except KeyboardInterrupt:
        writer.close()
        print(
            f"interrupted; run {writer.manifest.run_id} left in progress, "
            "finish it with run --resume",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    writer.seal()

    loaded = load_run(run_dir)
    report = compute_report(
        loaded.outcomes,
        generator_label=label,
        mean_includes_failures=args.mean_includes_failures,
    )
    write_report_files(
        [report], run_dir, failures={label or "run 1": loaded.failures}
    )
    summary_path = run_dir / "summary.json"
    summary_path.write_text(
        json.dumps(report.summary_record(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )

    mean_text = "n/a" if report.mean_iterations is None else f"{report.mean_iterations:.4f}"
    print(
        f"run {writer.manifest.run_id}: convergence {100.0 * report.convergence_rate:.2f}%, "
        f"mean iterations {mean_text} "
        f"({report.converged_count}/{report.total_queries} converged, "
        f"{report.infrastructure_failed_count} failures)"
    )
    print(f"report: {run_dir / 'report.md'}")
    if report.infrastructure_failed_count > config.failure_budget:
        print(
            f"error: {report.infrastructure_failed_count} agent failures exceed "
            f"the budget of {config.failure_budget}",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = _apply_overrides(load_run_config(args.config), args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if config.dataset_path is None:
        print("error: configuration has no dataset path", file=sys.stderr)
        return EXIT_USAGE
    try:
        dataset = load_dataset(config.dataset_path)
    except FileNotFoundError:
        print(f"error: dataset file not found: {config.dataset_path}", file=sys.stderr)
        return EXIT_DATA
    except (ParseError, DuplicateIdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        return _execute(config, dataset, args, resume=args.resume)
    except (ConfigError, ConfigMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except (ParseError, UnknownRunError, StorageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SafeRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_simulate(args) -> int:
    try:
        config = _apply_overrides(load_run_config(args.config), args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    simulate_backends = all(
        spec.get("backend") == "simulate" for spec in config.evaluator_specs
    )
    if not (config.simulator_spec or simulate_backends):
        print(
            "error: simulate needs a 'simulator' section or simulate-backend evaluators",
            file=sys.stderr,
        )
        return EXIT_USAGE
    if args.n < 1:
        print(f"error: cannot simulate over {args.n} queries", file=sys.stderr)
        return EXIT_DATA
    dataset = synthetic_dataset(args.n)
    try:
        return _execute(config, dataset, args, resume=False)
    except (ConfigError, ConfigMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except (ParseError, StorageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SafeRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_report(args) -> int:
    if len(args.run_dirs) > 2:
        print("error: report compares at most two runs", file=sys.stderr)
        return EXIT_USAGE
    if args.fmt == "csv" and not args.out:
        print("error: --format csv requires --out", file=sys.stderr)
        return EXIT_USAGE
    loadeds = []
    try:
        for run_dir in args.run_dirs:
            loadeds.append(load_run(run_dir))
    except (UnknownRunError, StorageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    labels: list[str] = []
    for loaded in loadeds:
        label = loaded.manifest.generator_label or loaded.manifest.run_id
        while label in labels:
            label += "*"
        labels.append(label)

    try:
        reports = [
            compute_report(
                loaded.outcomes,
                generator_label=label,
                mean_includes_failures=args.mean_includes_failures,
            )
            for loaded, label in zip(loadeds, labels)
        ]
    except EmptyInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    incomplete = any(
        loaded.manifest.status == STATUS_IN_PROGRESS or loaded.pending_query_ids
        for loaded in loadeds
    )
    for loaded in loadeds:
        if loaded.truncated_records:
            print(
                f"note: dropped {loaded.truncated_records} truncated record(s) from "
                f"{loaded.manifest.run_id}",
                file=sys.stderr,
            )
    failures = {label: loaded.failures for loaded, label in zip(loadeds, labels)}

    try:
        if args.out:
            written = write_report_files(
                reports, args.out, failures=failures, incomplete=incomplete
            )
            for name, path in sorted(written.items()):
                print(f"{name}: {path}")
        else:
            print(render_markdown(reports, failures=failures, incomplete=incomplete))
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "validate": cmd_validate,
        "run": cmd_run,
        "simulate": cmd_simulate,
        "report": cmd_report,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
