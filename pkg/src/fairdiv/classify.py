"""Turn response outcomes into labeled records and ranked frequency tables.

A :class:`LabeledResponse` pairs an outcome with the exact set of fairness
notions it satisfies (computed by :func:`fairdiv.engine.label`).  Records
aggregate into :class:`FrequencyTable` rows keyed by canonical notion-set
strings ("EQ*+RMM", "EF+PO", ...), ranked by response share.

Reporting conventions:

* Record keys spell the full notion set (e.g. "USW+PO"); aggregate table
  keys drop PO when USW is present (USW always implies PO, so "USW" suffices
  in ranked tables).  EQ is always subsumed by EQ* in keys.
* Unparseable or infeasible responses are kept as an explicit "Invalid" row
  rather than dropped, so table totals always match sample counts.
* Human reference tables list only the five most frequent responses; the
  remainder expands into an explicit "Other" row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Optional, Sequence

from . import corpus, stats
from .engine import NOTION_ORDER, NotionSet, label
from .model import Instance, Outcome, payoff, validate_outcome

INVALID_KEY = "Invalid"
OTHER_KEY = "Other"
_SPECIAL_KEYS = (OTHER_KEY, INVALID_KEY)

POOLED_ID = "ALL"


@dataclass(frozen=True)
class LabeledResponse:
    """One response: the outcome plus the notions it satisfies.

    ``invalid`` marks responses that were unparseable or infeasible; they
    carry an empty notion set.  ``outcome`` is ``None`` for tallied-only
    records (the "Other" remainder of human reference tables).
    """

    instance_id: str
    outcome: Optional[Outcome]
    payoffs: Optional[tuple[Fraction, ...]]
    notions: frozenset[str]
    source: str
    raw_ref: Optional[str] = None
    invalid: bool = False

    @staticmethod
    def from_outcome(
        instance: Instance,
        outcome: Outcome,
        source: str,
        raw_ref: Optional[str] = None,
    ) -> "LabeledResponse":
        if validate_outcome(instance, outcome):
            return LabeledResponse(
                instance_id=instance.id,
                outcome=outcome,
                payoffs=None,
                notions=frozenset(),
                source=source,
                raw_ref=raw_ref,
                invalid=True,
            )
        return LabeledResponse(
            instance_id=instance.id,
            outcome=outcome,
            payoffs=payoff(instance, outcome),
            notions=label(instance, outcome).names(),
            source=source,
            raw_ref=raw_ref,
            invalid=False,
        )

    @staticmethod
    def invalid_response(
        instance_id: str, source: str, raw_ref: Optional[str] = None
    ) -> "LabeledResponse":
        """A record for a response that never produced an outcome at all."""
        return LabeledResponse(
            instance_id=instance_id,
            outcome=None,
            payoffs=None,
            notions=frozenset(),
            source=source,
            raw_ref=raw_ref,
            invalid=True,
        )

    @property
    def key(self) -> str:
        """Full notion-set key ("USW+PO" style); "Invalid"/"Other" for tallies."""
        if self.invalid:
            return INVALID_KEY
        if self.outcome is None:
            return OTHER_KEY
        return NotionSet.from_names(self.notions).key()

    def report_key(self) -> str:
        """Aggregate-table key: like :attr:`key` but PO is folded into USW."""
        if self.invalid:
            return INVALID_KEY
        if self.outcome is None:
            return OTHER_KEY
        return NotionSet.from_names(self.notions).key(collapse_po_under_usw=True)


def classify_responses(
    instance: Instance,
    outcomes: Sequence[Outcome],
    source: str,
    raw_refs: Optional[Sequence[Optional[str]]] = None,
) -> list[LabeledResponse]:
    """Label each outcome; order is preserved, invalid outcomes are kept."""
    if raw_refs is not None and len(raw_refs) != len(outcomes):
        raise ValueError("raw_refs must parallel outcomes")
    return [
        LabeledResponse.from_outcome(
            instance, outcome, source, raw_refs[i] if raw_refs else None
        )
        for i, outcome in enumerate(outcomes)
    ]


@dataclass(frozen=True)
class FrequencyRow:
    key: str
    count: int
    percent: Fraction


@dataclass(frozen=True)
class FrequencyTable:
    """Ranked notion-set frequencies for one instance (or pooled, id "ALL")."""

    instance_id: str
    rows: tuple[FrequencyRow, ...]
    total: int

    def percent(self, key: str) -> Fraction:
        for row in self.rows:
            if row.key == key:
                return row.percent
        return Fraction(0)

    def count(self, key: str) -> int:
        for row in self.rows:
            if row.key == key:
                return row.count
        return 0

    def ranked(self, exclude: Sequence[str] = _SPECIAL_KEYS) -> list[FrequencyRow]:
        """Rows by descending share, skipping the bookkeeping keys."""
        return [row for row in self.rows if row.key not in exclude]

    def top_key(self) -> str:
        ranked = self.ranked()
        if not ranked:
            raise ValueError("table has no notion-set rows")
        return ranked[0].key


def _key_rank(key: str) -> tuple[int, ...]:
    """Tie-break order for equal counts: canonical notion order, then the
    bookkeeping keys (None/Other/Invalid) last."""
    base = len(NOTION_ORDER)
    specials = {"None": (base,), OTHER_KEY: (base + 1,), INVALID_KEY: (base + 2,)}
    if key in specials:
        return specials[key]
    return tuple(NOTION_ORDER.index(part) for part in key.split("+"))


def aggregate(
    records: Sequence[LabeledResponse], group: str = "per_instance"
) -> FrequencyTable:
    """Fold records into one ranked frequency table.

    ``group="per_instance"`` requires all records to share one instance id;
    ``group="pooled"`` pools across instances under the id "ALL".
    """
    if group not in ("per_instance", "pooled"):
        raise ValueError(f"unknown grouping: {group!r}")
    if group == "per_instance":
        ids = {r.instance_id for r in records}
        if len(ids) > 1:
            raise ValueError(
                "per_instance aggregation over mixed instances: "
                + ", ".join(sorted(ids))
            )
        table_id = ids.pop() if ids else "EMPTY"
    else:
        table_id = POOLED_ID

    counts: dict[str, int] = {}
    for record in records:
        key = record.report_key()
        counts[key] = counts.get(key, 0) + 1
    total = len(records)
    rows = tuple(
        FrequencyRow(key=key, count=count, percent=Fraction(100 * count, total))
        for key, count in sorted(
            counts.items(), key=lambda kv: (-kv[1], _key_rank(kv[0]))
        )
    )
    return FrequencyTable(instance_id=table_id, rows=rows, total=total)


def aggregate_by_instance(
    records: Sequence[LabeledResponse],
) -> dict[str, FrequencyTable]:
    """One per-instance table per distinct instance id, keyed by id."""
    by_id: dict[str, list[LabeledResponse]] = {}
    for record in records:
        by_id.setdefault(record.instance_id, []).append(record)
    return {
        iid: aggregate(recs, group="per_instance") for iid, recs in by_id.items()
    }


def expand_human_reference(
    instance_id: str, include_other: bool = True
) -> list[LabeledResponse]:
    """Human reference rows as individual records (count copies per row).

    The unlisted remainder becomes ``other_count`` tally-only records so that
    totals match the survey size.
    """
    reference = corpus.human_reference(instance_id)
    records: list[LabeledResponse] = []
    for entry, count in zip(reference.entries, reference.counts()):
        record = LabeledResponse(
            instance_id=instance_id,
            outcome=entry.outcome,
            payoffs=entry.payoffs,
            notions=entry.notions,
            source="human",
            invalid=False,
        )
        records.extend([record] * count)
    if include_other:
        other = LabeledResponse(
            instance_id=instance_id,
            outcome=None,
            payoffs=None,
            notions=frozenset(),
            source="human",
            invalid=False,
        )
        records.extend([other] * reference.other_count)
    return records


def expand_all_human_references(include_other: bool = True) -> list[LabeledResponse]:
    records: list[LabeledResponse] = []
    for iid in corpus.human_instance_ids():
        records.extend(expand_human_reference(iid, include_other=include_other))
    return records


@dataclass(frozen=True)
class NotionRate:
    """Across-instance mean satisfaction percentage with a confidence interval."""

    notion: str
    mean: Fraction
    lo: float
    hi: float
    per_instance: tuple[tuple[str, Fraction], ...]


def per_notion_rates(
    records: Sequence[LabeledResponse],
    level: float = 0.95,
    method: str = "t_over_groups",
) -> dict[str, NotionRate]:
    """Mean per-instance satisfaction percentage for every notion.

    The percentage for an instance counts records whose notion set contains
    the notion, over all records for that instance (including invalid and
    tally-only ones, so denominators match sample sizes).  With two or more
    instances the interval is mean +/- quantile * sd / sqrt(k) over the
    per-instance percentages (``method`` as in :func:`fairdiv.stats.proportion_ci`);
    with a single instance it is the Wilson interval, rescaled to percent.
    """
    if not records:
        raise ValueError("records must cover at least one instance")
    by_id: dict[str, list[LabeledResponse]] = {}
    for record in records:
        by_id.setdefault(record.instance_id, []).append(record)
    instance_ids = sorted(by_id, key=corpus.instance_sort_key)

    rates: dict[str, NotionRate] = {}
    for notion in NOTION_ORDER:
        per_instance: list[tuple[str, Fraction]] = []
        for iid in instance_ids:
            group = by_id[iid]
            hits = sum(1 for r in group if notion in r.notions)
            per_instance.append((iid, Fraction(100 * hits, len(group))))
        values = [p for _, p in per_instance]
        mean = sum(values) / len(values)
        if len(values) == 1:
            group = by_id[instance_ids[0]]
            hits = sum(1 for r in group if notion in r.notions)
            lo, hi = stats.proportion_ci(hits, len(group), level, method="wilson")
            lo, hi = 100 * lo, 100 * hi
        else:
            lo, hi = stats.proportion_ci(
                level=level, method=method, group_values=[float(v) for v in values]
            )
        rates[notion] = NotionRate(
            notion=notion,
            mean=mean,
            lo=lo,
            hi=hi,
            per_instance=tuple(per_instance),
        )
    return rates


def write_frequency_csv(tables: Iterable[FrequencyTable], stream: IO[str]) -> None:
    """CSV rows (instance_id, notion_key, count, percent), tables in order."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["instance_id", "notion_key", "count", "percent"])
    for table in tables:
        for row in table.rows:
            writer.writerow(
                [table.instance_id, row.key, row.count, repr(float(row.percent))]
            )


def frequency_table_to_json_dict(table: FrequencyTable) -> dict:
    return {
        "instance_id": table.instance_id,
        "total": table.total,
        "rows": [
            {
                "notion_key": row.key,
                "count": row.count,
                "percent": float(row.percent),
            }
            for row in table.rows
        ],
    }
