"""Load, validate, and partition benchmark prompt files.

Dataset files are UTF-8 line-delimited JSON records with keys
{id, text, principle, risk_category}. The principle accepts arabic or
roman form; unknown keys are preserved on load and ignored. Records
without a risk label fall back to the unlabeled category and are excluded
from per-category metrics with an explicit exclusion count.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

from .errors import BalanceError, DuplicateIdError, ParseError, RangeError
from .model import AmaPrinciple, Query, RiskCategory


@dataclass(frozen=True)
class Dataset:
    """Immutable, validated list of queries with cached groupings."""

    queries: tuple[Query, ...]
    #: Raw records as loaded, aligned with ``queries``; keeps unknown keys
    #: so that load -> serialize -> load is the identity.
    raw_records: tuple[dict, ...] = field(repr=False, default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "queries", tuple(self.queries))
        if not self.raw_records:
            object.__setattr__(
                self, "raw_records", tuple(q.to_record() for q in self.queries)
            )
        ids = [q.id for q in self.queries]
        if len(set(ids)) != len(ids):
            dupes = sorted(i for i, n in Counter(ids).items() if n > 1)
            raise DuplicateIdError(f"duplicate query ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)

    @property
    def per_principle_counts(self) -> dict[AmaPrinciple, int]:
        counts = Counter(q.principle for q in self.queries)
        return {p: counts.get(p, 0) for p in AmaPrinciple}

    @property
    def per_risk_counts(self) -> dict[RiskCategory, int]:
        counts = Counter(q.risk_category for q in self.queries)
        return {c: counts[c] for c in RiskCategory if counts[c]}

    def digest(self) -> str:
        """Content hash over the canonical query records, order-sensitive."""
        h = hashlib.sha256()
        for q in self.queries:
            h.update(json.dumps(q.to_record(), sort_keys=True).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def load_dataset(path: str | Path, strict_balance: bool = False) -> Dataset:
    """Parse and validate a dataset file.

    With ``strict_balance``, every principle group must be present with the
    same count; violations name the light categories.
    """
    path = Path(path)
    queries: list[Query] = []
    raw_records: list[dict] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                rec = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid record: {exc}", line_number=lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("record must be an object", line_number=lineno)
            try:
                query = Query.from_record(rec)
            except (KeyError, RangeError, TypeError) as exc:
                raise ParseError(str(exc), line_number=lineno) from None
            if query.id in seen_ids:
                raise DuplicateIdError(f"line {lineno}: duplicate query id {query.id!r}")
            seen_ids.add(query.id)
            queries.append(query)
            raw_records.append(rec)

    dataset = Dataset(queries=tuple(queries), raw_records=tuple(raw_records))
    if strict_balance:
        check_balance(dataset)
    return dataset


def check_balance(dataset: Dataset) -> int:
    """Require equal nonzero per-principle counts; return the common count."""
    counts = dataset.per_principle_counts
    if not dataset.queries:
        raise BalanceError("dataset is empty; nothing to balance")
    expected = max(counts.values())
    light = [p for p, n in counts.items() if n != expected]
    if light:
        detail = ", ".join(f"{p.roman}={counts[p]}" for p in light)
        raise BalanceError(
            f"per-principle counts differ (expected {expected} each): {detail}"
        )
    return expected


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset back out, preserving originally loaded records."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in dataset.raw_records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


PartitionKey = Literal["principle", "risk_category"]


def partition_by(
    dataset: Dataset | Iterable[Query], key: PartitionKey
) -> dict[AmaPrinciple, list[Query]] | dict[RiskCategory, list[Query]]:
    """Exhaustive, disjoint grouping preserving dataset order within groups."""
    if key not in ("principle", "risk_category"):
        raise RangeError(f"unknown partition key {key!r}")
    groups: dict = {}
    for query in dataset:
        groups.setdefault(getattr(query, key), []).append(query)
    return groups


def synthetic_dataset(n_queries: int, seed_label: str = "sim") -> Dataset:
    """Generate n synthetic queries balanced over principles and risk
    categories (round-robin over both cycles)."""
    if n_queries < 1:
        raise RangeError(f"n_queries must be >= 1, got {n_queries}")
    categories = (
        RiskCategory.EMERGENCY,
        RiskCategory.DIAGNOSTIC,
        RiskCategory.THERAPEUTIC,
        RiskCategory.PREVENTIVE,
    )
    queries = []
    for i in range(n_queries):
        principle = AmaPrinciple((i % 9) + 1)
        category = categories[i % len(categories)]
        queries.append(
            Query(
                id=f"{seed_label}-{i:05d}",
                text=f"synthetic {category.value} prompt {i} ({principle.label})",
                principle=principle,
                risk_category=category,
            )
        )
    return Dataset(queries=tuple(queries))
