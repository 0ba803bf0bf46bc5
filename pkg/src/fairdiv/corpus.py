"""Bundled instance catalog, human-response tables, and reference outcome tables.

Data files live under ``fairdiv/data``:

* ``instances/*.json`` -- one instance per file (indexed by the ``id`` field,
  not the filename).
* ``human/<id>.json`` -- the five most frequent human responses for an
  instance, with response percentages, fairness-notion sets, and payoffs.
* ``tables.json`` -- named reference tables of outcomes (curated option menus
  and deliberately inequitable outcomes), some annotated with disparities.

Percentages and exact quantities are stored as strings so they survive JSON
round-trips without floating-point drift; they are parsed into
:class:`fractions.Fraction` on load.

Setting the ``FAIRDIV_DATA_DIR`` environment variable to a directory that
contains ``*.json`` instance files makes those instances loadable as well
(files there override bundled instances with the same id).
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Optional

from .model import Instance, Outcome, as_fraction

_DATA_DIR = Path(__file__).parent / "data"
_ENV_DIR = "FAIRDIV_DATA_DIR"


@dataclass(frozen=True)
class ReferenceEntry:
    """One curated outcome: the outcome itself plus its published annotations."""

    outcome: Outcome
    notions: frozenset[str]
    payoffs: tuple[Fraction, ...]
    percent: Optional[Fraction] = None
    percent_text: Optional[str] = None
    disparity: Optional[Fraction] = None
    note: Optional[str] = None


@dataclass(frozen=True)
class ReferenceTable:
    """A named table of reference outcomes for a single instance."""

    name: str
    instance_id: str
    entries: tuple[ReferenceEntry, ...]

    def outcomes(self) -> list[Outcome]:
        return [entry.outcome for entry in self.entries]


@dataclass(frozen=True)
class HumanReference:
    """Top human responses for one instance, out of ``total`` survey answers."""

    instance_id: str
    total: int
    entries: tuple[ReferenceEntry, ...]

    @property
    def other_percent(self) -> Fraction:
        """Share of responses outside the listed entries."""
        return Fraction(100) - sum(e.percent for e in self.entries)

    def counts(self) -> list[int]:
        """Integer response counts for each entry (nearest-integer rounding)."""
        return [round(e.percent * self.total / 100) for e in self.entries]

    @property
    def other_count(self) -> int:
        return self.total - sum(self.counts())

    def outcomes(self) -> list[Outcome]:
        return [entry.outcome for entry in self.entries]


def instance_sort_key(instance_id: str) -> tuple:
    """Natural ordering for instance ids: I0, I0', I1, I1.1, ..., I10."""
    match = re.match(r"^I(\d+)(.*)$", instance_id)
    if match:
        return (0, int(match.group(1)), match.group(2))
    return (1, 0, instance_id)


_id_sort_key = instance_sort_key


def _instance_dirs() -> list[Path]:
    dirs = [_DATA_DIR / "instances"]
    extra = os.environ.get(_ENV_DIR)
    if extra:
        dirs.append(Path(extra))
    return dirs


@lru_cache(maxsize=None)
def _bundled_instances() -> dict[str, Instance]:
    catalog: dict[str, Instance] = {}
    for path in sorted((_DATA_DIR / "instances").glob("*.json")):
        instance = Instance.from_json_dict(json.loads(path.read_text()))
        catalog[instance.id] = instance
    return catalog


def _all_instances() -> dict[str, Instance]:
    catalog = dict(_bundled_instances())
    extra = os.environ.get(_ENV_DIR)
    if extra:
        for path in sorted(Path(extra).glob("*.json")):
            instance = Instance.from_json_dict(json.loads(path.read_text()))
            catalog[instance.id] = instance
    return catalog


def list_instances() -> list[str]:
    """All loadable instance ids, in natural order (I0, I0', I1, ..., I10)."""
    return sorted(_all_instances(), key=_id_sort_key)


def load_instance(instance_id: str) -> Instance:
    """Look up an instance by id; raises ``KeyError`` for unknown ids."""
    catalog = _all_instances()
    try:
        return catalog[instance_id]
    except KeyError:
        known = ", ".join(list_instances())
        raise KeyError(
            f"unknown instance id: {instance_id!r} (known: {known})"
        ) from None


def _parse_entry(instance: Instance, row: dict) -> ReferenceEntry:
    payments = [as_fraction(p) for p in row.get("payments", [])]
    outcome = Outcome.from_bundles(instance, row["bundles"], payments)
    percent_text = row.get("percent")
    return ReferenceEntry(
        outcome=outcome,
        notions=frozenset(row["notions"]),
        payoffs=tuple(as_fraction(x) for x in row["payoffs"]),
        percent=as_fraction(percent_text) if percent_text is not None else None,
        percent_text=percent_text,
        disparity=(
            as_fraction(row["disparity"]) if "disparity" in row else None
        ),
        note=row.get("note"),
    )


@lru_cache(maxsize=None)
def human_reference(instance_id: str) -> HumanReference:
    """The recorded human-response table for one of I1..I10."""
    path = _DATA_DIR / "human" / f"{instance_id}.json"
    if not path.exists():
        available = sorted(
            (p.stem for p in (_DATA_DIR / "human").glob("*.json")),
            key=_id_sort_key,
        )
        raise KeyError(
            f"no human-response table for {instance_id!r} "
            f"(available: {', '.join(available)})"
        )
    data = json.loads(path.read_text())
    instance = load_instance(data["instance"])
    entries = tuple(_parse_entry(instance, row) for row in data["entries"])
    return HumanReference(
        instance_id=data["instance"],
        total=data["total_responses"],
        entries=entries,
    )


def human_instance_ids() -> list[str]:
    """Ids of all instances that have a human-response table."""
    return sorted(
        (p.stem for p in (_DATA_DIR / "human").glob("*.json")),
        key=_id_sort_key,
    )


@lru_cache(maxsize=None)
def _tables() -> dict[str, dict]:
    return json.loads((_DATA_DIR / "tables.json").read_text())


def table_names() -> list[str]:
    return sorted(_tables())


@lru_cache(maxsize=None)
def reference_table(name: str) -> ReferenceTable:
    """A named curated outcome table; raises ``KeyError`` for unknown names."""
    try:
        data = _tables()[name]
    except KeyError:
        raise KeyError(
            f"unknown reference table: {name!r} (known: {', '.join(table_names())})"
        ) from None
    instance = load_instance(data["instance"])
    entries = tuple(_parse_entry(instance, row) for row in data["rows"])
    return ReferenceTable(
        name=name, instance_id=data["instance"], entries=entries
    )


_MENU_TABLES = {
    "I0": "I0_options",
    "I0'": "I0prime_allocs",
    "I2": "I2_menu",
    "I2*": "I2star_options",
    "I4*": "I4star_options",
    "I7": "I7_menu",
}

# Instances whose multiple-choice menu uses only the first k rows of the
# human-response table.
_MENU_LIMITS = {"I5": 4, "I6": 4}


def menu_options(name: str) -> list[Outcome]:
    """Option menus used by multiple-choice prompts.

    ``name`` may be a named table (see :func:`table_names`), an instance id
    with a curated menu (I0, I0', I2, I2*, I4*, I7), or an instance id with
    a human-response table — the menu is then that table's outcomes, first
    four only for I5 and I6.
    """
    if name in _tables():
        return reference_table(name).outcomes()
    if name in _MENU_TABLES:
        return reference_table(_MENU_TABLES[name]).outcomes()
    outcomes = human_reference(name).outcomes()
    return outcomes[: _MENU_LIMITS.get(name, len(outcomes))]


def clear_corpus_caches() -> None:
    """Drop memoized corpus data (mainly for tests that set FAIRDIV_DATA_DIR)."""
    _bundled_instances.cache_clear()
    human_reference.cache_clear()
    _tables.cache_clear()
    reference_table.cache_clear()
