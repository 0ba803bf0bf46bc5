"""Exhaustive search and exact notion checkers.

An outcome can satisfy any subset of six notions:

- EQ   equitable: its disparity equals the minimum disparity achievable by any
       non-empty outcome of the instance;
- EQ*  perfectly equitable: disparity exactly zero;
- EF   envy-free: no agent prefers another agent's bundle-plus-payment;
- RMM  Rawlsian maximin: its worst-off utility equals the best achievable;
- PO   Pareto-optimal: no outcome improves someone without hurting someone;
- USW  utilitarian-social-welfare-maximal: total utility at its maximum.

The continuous money sub-problems (best disparity / best worst-off utility for
a fixed goods allocation) are solved in closed form by water-filling, so every
comparison is an exact rational equality with no tolerance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Sequence, Union

from .model import (
    DISCARD,
    Instance,
    Outcome,
    ValidationError,
    disparity,
    payoff,
    require_valid,
)

NOTION_ORDER = ("EQ*", "EQ", "EF", "RMM", "USW", "PO")
NOTIONS = frozenset(NOTION_ORDER)

GoodsAllocation = tuple[Optional[int], ...]


@dataclass(frozen=True)
class NotionSet:
    """Which of the six notions an outcome satisfies."""

    eq: bool = False
    eq_star: bool = False
    ef: bool = False
    rmm: bool = False
    po: bool = False
    usw: bool = False

    def names(self) -> frozenset[str]:
        out = set()
        if self.eq:
            out.add("EQ")
        if self.eq_star:
            out.add("EQ*")
        if self.ef:
            out.add("EF")
        if self.rmm:
            out.add("RMM")
        if self.po:
            out.add("PO")
        if self.usw:
            out.add("USW")
        return frozenset(out)

    @staticmethod
    def from_names(names: Iterable[str]) -> "NotionSet":
        names = set(names)
        unknown = names - NOTIONS
        if unknown:
            raise ValidationError(f"unknown notions: {sorted(unknown)}")
        return NotionSet(
            eq="EQ" in names,
            eq_star="EQ*" in names,
            ef="EF" in names,
            rmm="RMM" in names,
            po="PO" in names,
            usw="USW" in names,
        )

    def __contains__(self, notion: str) -> bool:
        return notion in self.names()

    def key(self, collapse_po_under_usw: bool = False) -> str:
        """Canonical sorted key, e.g. "EF+RMM+PO"; empty set prints "None".

        EQ* subsumes EQ in the key (they are never printed together). With
        ``collapse_po_under_usw``, PO is dropped when USW is present — the
        convention used by aggregate report tables, where "USW" implies
        "USW+PO".
        """
        names = set(self.names())
        if "EQ*" in names:
            names.discard("EQ")
        if collapse_po_under_usw and "USW" in names:
            names.discard("PO")
        if not names:
            return "None"
        return "+".join(n for n in NOTION_ORDER if n in names)


@dataclass(frozen=True)
class InstanceSummary:
    """Instance-level optima that notion checks compare against."""

    min_disparity: Fraction
    maximin_value: Fraction
    max_welfare: Fraction
    goods_welfare_max: Fraction


def enumerate_goods_allocations(instance: Instance) -> Iterator[GoodsAllocation]:
    """All (n+1)^m ways to give each good to an agent or discard it.

    Deterministic mixed-radix order: goods in instance order, the first good
    most significant; per-good digit order is agent 1, ..., agent n, discard.
    """
    n = instance.n
    digits = list(range(n)) + [DISCARD]
    for combo in itertools.product(digits, repeat=instance.m):
        yield combo


def water_fill_min_disparity(
    goods_values: Sequence[Fraction], budget: Fraction
) -> tuple[tuple[Fraction, ...], Fraction]:
    """Distribute ``budget`` over base levels to minimize max − min.

    If the levels can be fully equalized, they are, and any surplus is split
    equally (full budget spent, disparity 0). Otherwise the lowest levels are
    raised to a common water level L and the disparity is max(w) − L.
    """
    w = [Fraction(x) for x in goods_values]
    if not w:
        raise ValidationError("water-filling needs at least one agent")
    budget = Fraction(budget)
    if budget < 0:
        raise ValidationError("budget must be nonnegative")
    top = max(w)
    deficit = sum((top - x for x in w), Fraction(0))
    n = len(w)
    if deficit <= budget:
        share = (budget - deficit) / n
        payments = tuple(top - x + share for x in w)
        return payments, Fraction(0)
    level = _water_level(w, budget)
    payments = tuple(max(Fraction(0), level - x) for x in w)
    return payments, top - level


def water_fill_maximin(
    goods_values: Sequence[Fraction], budget: Fraction
) -> tuple[tuple[Fraction, ...], Fraction]:
    """Distribute all of ``budget`` to maximize the minimum level.

    Returns the payments and the achieved minimum: the unique water level L
    with sum(max(0, L − w_i)) = budget (L may exceed max(w) when the budget is
    large enough to lift everyone past it).
    """
    w = [Fraction(x) for x in goods_values]
    if not w:
        raise ValidationError("water-filling needs at least one agent")
    budget = Fraction(budget)
    if budget < 0:
        raise ValidationError("budget must be nonnegative")
    if budget == 0:
        return (Fraction(0),) * len(w), min(w)
    level = _water_level(w, budget)
    payments = tuple(max(Fraction(0), level - x) for x in w)
    return payments, level


def _water_level(w: Sequence[Fraction], budget: Fraction) -> Fraction:
    """The level L with sum(max(0, L − w_i)) = budget (budget > 0 or L=min)."""
    levels = sorted(w)
    n = len(levels)
    spent = Fraction(0)
    for k in range(n):
        # Between levels[k] and the next breakpoint, k+1 agents are filled.
        nxt = levels[k + 1] if k + 1 < n else None
        step_cost = None if nxt is None else (nxt - levels[k]) * (k + 1)
        cost_to_here = spent
        if nxt is None or cost_to_here + step_cost >= budget:
            return levels[k] + (budget - cost_to_here) / (k + 1)
        spent += step_cost
    raise AssertionError("unreachable")


def _goods_values(instance: Instance, allocation: GoodsAllocation) -> tuple[Fraction, ...]:
    totals = [Fraction(0)] * instance.n
    for g, recipient in enumerate(allocation):
        if recipient is not DISCARD:
            totals[recipient] += instance.valuations[recipient][g]
    return tuple(totals)


@lru_cache(maxsize=None)
def _allocation_value_table(instance: Instance) -> tuple[tuple[Fraction, ...], ...]:
    """Per-goods-allocation utility vectors, in enumeration order (cached)."""
    return tuple(
        _goods_values(instance, alloc) for alloc in enumerate_goods_allocations(instance)
    )


@lru_cache(maxsize=None)
def summarize(instance: Instance) -> InstanceSummary:
    """Instance optima: min disparity, maximin value, welfare maxima.

    The disparity minimum ranges over non-empty outcomes only: with a zero
    budget the all-discard outcome (every utility zero) is excluded, otherwise
    the trivial all-zero outcome would be "most equitable" in every instance.
    With a positive budget every goods allocation admits non-empty outcomes
    (payments can be nonzero), so nothing is excluded. Degenerate case: no
    goods and no money means the empty outcome is the only outcome, and it is
    the reference.
    """
    P = instance.money
    values = _allocation_value_table(instance)

    goods_welfare_max = sum(
        (max(instance.valuations[i][g] for i in range(instance.n)) for g in range(instance.m)),
        Fraction(0),
    )

    best_disparity: Optional[Fraction] = None
    best_min: Optional[Fraction] = None
    for alloc, vec in zip(enumerate_goods_allocations(instance), values):
        _, level = water_fill_maximin(vec, P)
        if best_min is None or level > best_min:
            best_min = level
        if P == 0 and instance.m > 0 and all(r is DISCARD for r in alloc):
            # With no money, the all-discard allocation is exactly the empty
            # outcome; it never serves as the disparity reference. (A non-empty
            # allocation of worthless goods still counts.)
            continue
        _, delta = water_fill_min_disparity(vec, P)
        if best_disparity is None or delta < best_disparity:
            best_disparity = delta
    if best_disparity is None:
        # No goods and no money: the empty outcome is the whole space.
        best_disparity = Fraction(0)
    assert best_min is not None
    return InstanceSummary(
        min_disparity=best_disparity,
        maximin_value=best_min,
        max_welfare=goods_welfare_max + P,
        goods_welfare_max=goods_welfare_max,
    )


def _envy_free(instance: Instance, outcome: Outcome, u: tuple[Fraction, ...]) -> bool:
    pay = outcome.payments if outcome.payments else (Fraction(0),) * instance.n
    bundles = [outcome.bundle(i) for i in range(instance.n)]
    for i in range(instance.n):
        for j in range(instance.n):
            if i == j:
                continue
            if u[i] < instance.bundle_value(i, bundles[j]) + pay[j]:
                return False
    return True


def _pareto_optimal(instance: Instance, u: tuple[Fraction, ...]) -> bool:
    P = instance.money
    n = instance.n
    for vec in _allocation_value_table(instance):
        need = Fraction(0)
        someone_strictly_better = False
        feasible = True
        for i in range(n):
            gap = u[i] - vec[i]
            if gap > 0:
                need += gap
                if need > P:
                    feasible = False
                    break
            elif gap < 0:
                someone_strictly_better = True
        if not feasible:
            continue
        if need < P or someone_strictly_better:
            return False
    return True


def is_envy_free(instance: Instance, outcome: Outcome) -> bool:
    """No agent values another's bundle-plus-payment above their own utility."""
    require_valid(instance, outcome)
    return _envy_free(instance, outcome, payoff(instance, outcome))


def is_pareto_optimal(instance: Instance, outcome: Outcome) -> bool:
    """Need-sum dominance test over every goods allocation.

    A goods allocation A' dominates utilities u when the total top-up money
    needed to keep everyone at u, S = sum(max(0, u_i − v_i(A'_i))), satisfies
    S < P (the surplus then strictly improves everyone) or S <= P with some
    agent already strictly above u_i. Taking A' equal to the outcome's own
    goods allocation shows any outcome that leaves money unspent is dominated.
    """
    require_valid(instance, outcome)
    return _pareto_optimal(instance, payoff(instance, outcome))


def label(instance: Instance, outcome: Outcome) -> NotionSet:
    """The full notion set of an outcome (exact, no tolerances)."""
    require_valid(instance, outcome)
    summary = summarize(instance)
    u = payoff(instance, outcome)
    delta = disparity(u)
    empty = outcome.is_empty()
    degenerate = instance.m == 0 and instance.money == 0

    eq_star = delta == 0 and (not empty or degenerate)
    eq = delta == summary.min_disparity and (not empty or degenerate)
    ef = _envy_free(instance, outcome, u)
    rmm = min(u) == summary.maximin_value
    usw = sum(u, Fraction(0)) == summary.max_welfare
    po = _pareto_optimal(instance, u)
    result = NotionSet(eq=eq, eq_star=eq_star, ef=ef, rmm=rmm, po=po, usw=usw)
    # Structural invariants of the definitions themselves.
    assert not result.eq_star or result.eq
    assert not result.usw or result.po
    return result


def _payment_grid(
    n: int, budget: Fraction, denominator: int, full_money: bool
) -> Iterator[tuple[Fraction, ...]]:
    """Nonnegative payment vectors on the grid {k/denominator}, sum <= budget
    (or exactly == budget with ``full_money``)."""
    if budget == 0:
        # Canonical representation of "no payments" for money-less instances.
        yield ()
        return
    total_units = budget * denominator
    if total_units.denominator != 1 and full_money:
        return  # the budget is off-grid, an exact full spend is impossible
    cap = int(total_units)  # floor when off-grid (budget is nonnegative)
    unit = Fraction(1, denominator)

    if full_money:
        # Exact compositions of cap units into n parts.
        def rec_full(prefix: list[Fraction], remaining: int, slots: int):
            if slots == 1:
                yield tuple(prefix + [remaining * unit])
                return
            for k in range(remaining + 1):
                yield from rec_full(prefix + [k * unit], remaining - k, slots - 1)

        yield from rec_full([], cap, n)
    else:
        def rec_any(prefix: list[Fraction], used: int, slots: int):
            if slots == 0:
                yield tuple(prefix)
                return
            for k in range(cap - used + 1):
                yield from rec_any(prefix + [k * unit], used + k, slots - 1)

        yield from rec_any([], 0, n)


def optimal_outcomes(
    instance: Instance,
    notions: Union[str, Iterable[str]],
    money_denominator: int = 1,
    full_money: bool = False,
) -> list[Outcome]:
    """All outcomes on the payment grid satisfying every requested notion.

    With zero budget the grid is irrelevant and the result is exact over the
    full outcome space. Outcomes come back in deterministic enumeration order.
    """
    if isinstance(notions, str):
        wanted = frozenset({notions})
    else:
        wanted = frozenset(notions)
    unknown = wanted - NOTIONS
    if unknown:
        raise ValidationError(f"unknown notions: {sorted(unknown)}")
    if money_denominator < 1:
        raise ValidationError("money_denominator must be a positive integer")
    summary = summarize(instance)
    degenerate = instance.m == 0 and instance.money == 0
    results: list[Outcome] = []
    payment_vectors = list(
        _payment_grid(instance.n, instance.money, money_denominator, full_money)
    )
    values = _allocation_value_table(instance)
    for alloc, base in zip(enumerate_goods_allocations(instance), values):
        for payments in payment_vectors:
            if payments:
                u = tuple(base[i] + payments[i] for i in range(instance.n))
            else:
                u = base
            # Cheap notion checks first; the dominance scan only when needed.
            if "USW" in wanted and sum(u, Fraction(0)) != summary.max_welfare:
                continue
            if "RMM" in wanted and min(u) != summary.maximin_value:
                continue
            outcome = Outcome(assignment=alloc, payments=payments)
            if "EQ*" in wanted or "EQ" in wanted:
                empty = outcome.is_empty()
                if empty and not degenerate:
                    continue
                delta = disparity(u)
                if "EQ*" in wanted and delta != 0:
                    continue
                if "EQ" in wanted and delta != summary.min_disparity:
                    continue
            if "EF" in wanted and not _envy_free(instance, outcome, u):
                continue
            if "PO" in wanted and not _pareto_optimal(instance, u):
                continue
            results.append(outcome)
    return results


def clear_caches() -> None:
    """Drop memoized summaries (useful in long-lived sessions/tests)."""
    summarize.cache_clear()
    _allocation_value_table.cache_clear()
