"""Deterministic baseline decision-makers for head-to-head comparisons.

Five policies:

* ``round_robin(order)`` -- agents pick in cyclic order, each taking their
  highest-valued remaining good, until no goods remain.
* ``highest_bidder`` -- each good goes to the agent who values it most.
* ``equitable_waterfill`` -- the first allocation (in enumeration order)
  whose disparity after exact money water-filling is minimal, with those
  payments.
* ``maximin`` -- the first allocation attaining the maximin payoff level,
  with the exact maximin water-fill payments.
* ``welfare_max`` -- the first allocation maximizing total goods value.

Ties always break toward the lowest index, so every policy is deterministic.
The goods procedures are goods-only in origin; money handling is an
extension: round_robin, highest_bidder, and welfare_max split the budget
equally, while the water-filling policies spend it on their optimal payment
vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from typing import Iterator, Optional

from .engine import (
    enumerate_goods_allocations,
    summarize,
    water_fill_maximin,
    water_fill_min_disparity,
)
from .model import DISCARD, Instance, Outcome

POLICY_KINDS = (
    "round_robin",
    "highest_bidder",
    "equitable_waterfill",
    "maximin",
    "welfare_max",
)


@dataclass(frozen=True)
class Policy:
    """A named decision procedure; ``order`` applies to round_robin only."""

    kind: str
    order: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(
                f"unknown policy kind: {self.kind!r} (known: {', '.join(POLICY_KINDS)})"
            )
        if self.kind == "round_robin":
            if self.order is None:
                raise ValueError("round_robin requires an agent order")
        elif self.order is not None:
            raise ValueError(f"{self.kind} does not take an order")

    @property
    def name(self) -> str:
        if self.kind == "round_robin":
            return f"round_robin({','.join(str(i + 1) for i in self.order)})"
        return self.kind

    @staticmethod
    def round_robin(order) -> "Policy":
        return Policy(kind="round_robin", order=tuple(order))

    @staticmethod
    def highest_bidder() -> "Policy":
        return Policy(kind="highest_bidder")

    @staticmethod
    def equitable_waterfill() -> "Policy":
        return Policy(kind="equitable_waterfill")

    @staticmethod
    def maximin() -> "Policy":
        return Policy(kind="maximin")

    @staticmethod
    def welfare_max() -> "Policy":
        return Policy(kind="welfare_max")


def round_robin_orders(n: int) -> Iterator[tuple[int, ...]]:
    """All n! agent orders, lexicographically."""
    return permutations(range(n))


def _equal_split(instance: Instance) -> tuple[Fraction, ...]:
    if instance.money == 0:
        return ()
    share = instance.money / instance.n
    return (share,) * instance.n


def _run_round_robin(instance: Instance, order: tuple[int, ...]) -> Outcome:
    if sorted(order) != list(range(instance.n)):
        raise ValueError("order must be a permutation of all agents")
    remaining = list(range(instance.m))
    assignment: list[Optional[int]] = [DISCARD] * instance.m
    turn = 0
    while remaining:
        agent = order[turn % len(order)]
        pick = max(remaining, key=lambda g: (instance.valuations[agent][g], -g))
        assignment[pick] = agent
        remaining.remove(pick)
        turn += 1
    return Outcome.make(assignment, _equal_split(instance))


def _run_highest_bidder(instance: Instance) -> Outcome:
    assignment = [
        max(range(instance.n), key=lambda i: (instance.valuations[i][g], -i))
        for g in range(instance.m)
    ]
    return Outcome.make(assignment, _equal_split(instance))


def _run_equitable_waterfill(instance: Instance) -> Outcome:
    target = summarize(instance).min_disparity
    for alloc in enumerate_goods_allocations(instance):
        base = [
            sum(instance.valuations[i][g] for g, a in enumerate(alloc) if a == i)
            for i in range(instance.n)
        ]
        payments, delta = water_fill_min_disparity(tuple(base), instance.money)
        if delta == target:
            pay = payments if any(payments) else ()
            return Outcome.make(alloc, pay)
    raise AssertionError("unreachable: some allocation attains the minimum")


def _run_maximin(instance: Instance) -> Outcome:
    target = summarize(instance).maximin_value
    for alloc in enumerate_goods_allocations(instance):
        base = [
            sum(instance.valuations[i][g] for g, a in enumerate(alloc) if a == i)
            for i in range(instance.n)
        ]
        payments, level = water_fill_maximin(tuple(base), instance.money)
        if level == target:
            pay = payments if any(payments) else ()
            return Outcome.make(alloc, pay)
    raise AssertionError("unreachable: some allocation attains the maximin")


def _run_welfare_max(instance: Instance) -> Outcome:
    target = summarize(instance).goods_welfare_max
    for alloc in enumerate_goods_allocations(instance):
        welfare = sum(
            instance.valuations[a][g] for g, a in enumerate(alloc) if a is not DISCARD
        )
        if welfare == target:
            return Outcome.make(alloc, _equal_split(instance))
    raise AssertionError("unreachable: some allocation attains the maximum")


def run_agent(policy: Policy, instance: Instance) -> Outcome:
    """Execute a policy on an instance; always returns a valid outcome."""
    if policy.kind == "round_robin":
        return _run_round_robin(instance, policy.order)
    if policy.kind == "highest_bidder":
        return _run_highest_bidder(instance)
    if policy.kind == "equitable_waterfill":
        return _run_equitable_waterfill(instance)
    if policy.kind == "maximin":
        return _run_maximin(instance)
    return _run_welfare_max(instance)
