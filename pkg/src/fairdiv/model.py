"""Core domain types for allocation problems: instances, outcomes, payoffs.

All arithmetic is exact (`fractions.Fraction`); equality tests like
"disparity == 0" or "sum of payments == budget" must never suffer float error.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

Rational = Union[int, str, Fraction]

#: Recipient marker for a good that is not allocated to anyone.
DISCARD = None


class ValidationError(ValueError):
    """Raised when an instance or outcome violates a structural invariant."""


def as_fraction(value: Rational) -> Fraction:
    """Convert ints, Fractions, and exact decimal/ratio strings ("2.5", "1/3")."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"not a quantity: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # Floats come from JSON payloads; round-trip through the shortest
        # decimal repr so "2.5" stays exactly 5/2.
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"not a quantity: {value!r}") from exc
    raise ValidationError(f"not a quantity: {value!r}")


def format_quantity(value: Fraction) -> str:
    """Render exactly: int when integral, finite decimal when possible, else a/b."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    for p in (2, 5):
        while den % p == 0:
            den //= p
    if den == 1:  # finite decimal expansion
        from decimal import Decimal

        return str(Decimal(value.numerator) / Decimal(value.denominator))
    return f"{value.numerator}/{value.denominator}"


def person_name(index: int) -> str:
    return f"Person {index + 1}"


def good_name(index: int) -> str:
    """0 -> "Good A", 25 -> "Good Z", 26 -> "Good AA"."""
    letters = ""
    index += 1
    while index > 0:
        index, rem = divmod(index - 1, 26)
        letters = string.ascii_uppercase[rem] + letters
    return f"Good {letters}"


@dataclass(frozen=True)
class Instance:
    """An allocation problem: agents, goods, additive valuations, money budget."""

    id: str
    agents: tuple[str, ...]
    goods: tuple[str, ...]
    valuations: tuple[tuple[Fraction, ...], ...]
    money: Fraction = Fraction(0)
    decision_maker_role: Optional[int] = None

    def __post_init__(self) -> None:
        if len(self.agents) < 1:
            raise ValidationError("an instance needs at least one agent")
        if len(self.valuations) != len(self.agents):
            raise ValidationError("one valuation row per agent required")
        for row in self.valuations:
            if len(row) != len(self.goods):
                raise ValidationError("one valuation per (agent, good) required")
            for v in row:
                if v < 0:
                    raise ValidationError("valuations must be nonnegative")
        if self.money < 0:
            raise ValidationError("money budget must be nonnegative")
        if self.decision_maker_role is not None and not (
            0 <= self.decision_maker_role < len(self.agents)
        ):
            raise ValidationError("decision_maker_role must index an agent")

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return len(self.goods)

    def value(self, agent: int, good: int) -> Fraction:
        return self.valuations[agent][good]

    def bundle_value(self, agent: int, goods: Iterable[int]) -> Fraction:
        return sum((self.valuations[agent][g] for g in goods), Fraction(0))

    @staticmethod
    def make(
        id: str,
        valuations: Sequence[Sequence[Rational]],
        money: Rational = 0,
        decision_maker_role: Optional[int] = None,
        agents: Optional[Sequence[str]] = None,
        goods: Optional[Sequence[str]] = None,
    ) -> "Instance":
        """Build an instance with default "Person i" / "Good J" names."""
        n = len(valuations)
        m = len(valuations[0]) if n else 0
        agent_names = tuple(agents) if agents else tuple(person_name(i) for i in range(n))
        good_names = tuple(goods) if goods else tuple(good_name(j) for j in range(m))
        matrix = tuple(tuple(as_fraction(v) for v in row) for row in valuations)
        return Instance(
            id=id,
            agents=agent_names,
            goods=good_names,
            valuations=matrix,
            money=as_fraction(money),
            decision_maker_role=decision_maker_role,
        )

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "agents": list(self.agents),
            "goods": list(self.goods),
            "valuations": [[_quantity_json(v) for v in row] for row in self.valuations],
            "money": _quantity_json(self.money),
            "decision_maker_role": self.decision_maker_role,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "Instance":
        return Instance.make(
            id=data["id"],
            valuations=data["valuations"],
            money=data.get("money", 0),
            decision_maker_role=data.get("decision_maker_role"),
            agents=data.get("agents"),
            goods=data.get("goods"),
        )


def _quantity_json(value: Fraction) -> Union[int, str]:
    return value.numerator if value.denominator == 1 else format_quantity(value)


@dataclass(frozen=True)
class Outcome:
    """Goods assignment (recipient index or DISCARD per good) plus payments."""

    assignment: tuple[Optional[int], ...]
    payments: tuple[Fraction, ...] = ()

    @staticmethod
    def make(
        assignment: Sequence[Optional[int]],
        payments: Sequence[Rational] = (),
    ) -> "Outcome":
        return Outcome(
            assignment=tuple(assignment),
            payments=tuple(as_fraction(p) for p in payments),
        )

    @staticmethod
    def from_bundles(
        instance: Instance,
        bundles: Sequence[Sequence[int]],
        payments: Sequence[Rational] = (),
    ) -> "Outcome":
        """Build from per-agent lists of good indices; unlisted goods are discarded."""
        assignment: list[Optional[int]] = [DISCARD] * instance.m
        for agent, bundle in enumerate(bundles):
            for g in bundle:
                if assignment[g] is not None:
                    raise ValidationError(
                        f"good {instance.goods[g]} assigned to two agents"
                    )
                assignment[g] = agent
        return Outcome(
            assignment=tuple(assignment),
            payments=tuple(as_fraction(p) for p in payments),
        )

    def bundle(self, agent: int) -> tuple[int, ...]:
        return tuple(g for g, a in enumerate(self.assignment) if a == agent)

    def discarded(self) -> tuple[int, ...]:
        return tuple(g for g, a in enumerate(self.assignment) if a is DISCARD)

    def is_empty(self) -> bool:
        """True when every good is discarded and every payment is zero."""
        return all(a is DISCARD for a in self.assignment) and not any(self.payments)


def validate_outcome(instance: Instance, outcome: Outcome) -> list[str]:
    """Return all feasibility violations (empty list means the outcome is valid)."""
    violations: list[str] = []
    if len(outcome.assignment) != instance.m:
        violations.append(
            f"expected {instance.m} goods, outcome has {len(outcome.assignment)}"
        )
    else:
        for g, recipient in enumerate(outcome.assignment):
            if recipient is not DISCARD and not (0 <= recipient < instance.n):
                violations.append(f"unknown agent for {instance.goods[g]}: {recipient}")
    if outcome.payments and len(outcome.payments) != instance.n:
        # An empty payments tuple is shorthand for "no payments" (all zeros),
        # legal for any instance; a non-empty tuple must match the agent count.
        violations.append(
            f"expected {instance.n} payments, outcome has {len(outcome.payments)}"
        )
    else:
        for i, p in enumerate(outcome.payments):
            if p < 0:
                violations.append(
                    f"negative payment for {instance.agents[i]}: {format_quantity(p)}"
                )
        total = sum(outcome.payments, Fraction(0))
        if total > instance.money:
            violations.append(
                "money overspent: "
                f"sum of payments = {format_quantity(total)} > "
                f"budget = {format_quantity(instance.money)}"
            )
    return violations


def require_valid(instance: Instance, outcome: Outcome) -> None:
    violations = validate_outcome(instance, outcome)
    if violations:
        raise ValidationError("; ".join(violations))


def payoff(instance: Instance, outcome: Outcome) -> tuple[Fraction, ...]:
    """Quasi-linear utilities: u_i = value of own bundle + own payment."""
    require_valid(instance, outcome)
    if outcome.payments:
        totals = [Fraction(p) for p in outcome.payments]
    else:
        totals = [Fraction(0)] * instance.n
    for g, recipient in enumerate(outcome.assignment):
        if recipient is not DISCARD:
            totals[recipient] += instance.valuations[recipient][g]
    return tuple(totals)


def disparity(payoffs: Sequence[Fraction]) -> Fraction:
    """Inequality disparity: max payoff minus min payoff (0 for one agent)."""
    if not payoffs:
        raise ValidationError("disparity of an empty payoff vector is undefined")
    return max(payoffs) - min(payoffs)


# --- Outcome <-> response-format JSON -------------------------------------
#
# The exchange format mirrors the extraction prompt's skeleton:
#   {"Good A": "Person 1" | "None", ..., "Person 1 money": 2, ...}
# Money keys are present iff the instance has a positive budget.


def outcome_to_response_dict(instance: Instance, outcome: Outcome) -> dict:
    require_valid(instance, outcome)
    data: dict[str, object] = {}
    for g, recipient in enumerate(outcome.assignment):
        if recipient is DISCARD:
            data[instance.goods[g]] = "None"
        else:
            data[instance.goods[g]] = instance.agents[recipient]
    if instance.money > 0:
        for i, agent in enumerate(instance.agents):
            p = outcome.payments[i] if outcome.payments else Fraction(0)
            data[f"{agent} money"] = (
                p.numerator if p.denominator == 1 else format_quantity(p)
            )
    return data


def outcome_to_response_json(instance: Instance, outcome: Outcome) -> str:
    return json.dumps(outcome_to_response_dict(instance, outcome))


def outcome_sort_key(outcome: Outcome):
    """Deterministic ordering helper (goods digits, then payments)."""
    digits = tuple(-1 if a is DISCARD else a for a in outcome.assignment)
    return (digits, outcome.payments)


# --- Presentation-order permutations ---------------------------------------
#
# Ordering-robustness experiments present the same abstract problem with
# goods and/or agents listed in a different order.  The derived instance
# keeps canonical names ("Person 1", "Good A", ...) — only the underlying
# rows/columns move, so position j in the new instance is position
# ``order[j]`` in the original.


def _check_permutation(order: Sequence[int], size: int, what: str) -> tuple[int, ...]:
    order = tuple(order)
    if sorted(order) != list(range(size)):
        raise ValidationError(f"{what} order must be a permutation of 0..{size - 1}")
    return order


def permute_instance(
    instance: Instance,
    goods_order: Optional[Sequence[int]] = None,
    agents_order: Optional[Sequence[int]] = None,
    id: Optional[str] = None,
) -> Instance:
    """Reorder how goods/agents are presented; the problem itself is unchanged."""
    goods_order = _check_permutation(
        goods_order if goods_order is not None else range(instance.m),
        instance.m,
        "goods",
    )
    agents_order = _check_permutation(
        agents_order if agents_order is not None else range(instance.n),
        instance.n,
        "agents",
    )
    if id is None:
        id = (
            f"{instance.id}"
            f"[g{''.join(map(str, goods_order))}|a{''.join(map(str, agents_order))}]"
        )
    role = instance.decision_maker_role
    if role is not None:
        role = agents_order.index(role)
    return Instance.make(
        id=id,
        valuations=[
            [instance.valuations[agents_order[i]][goods_order[j]] for j in range(instance.m)]
            for i in range(instance.n)
        ],
        money=instance.money,
        decision_maker_role=role,
    )


def permute_outcome(
    outcome: Outcome,
    goods_order: Sequence[int],
    agents_order: Sequence[int],
) -> Outcome:
    """Re-express an outcome of an instance in its permuted presentation."""
    goods_order = _check_permutation(goods_order, len(outcome.assignment), "goods")
    n = len(agents_order)
    agents_order = _check_permutation(agents_order, n, "agents")
    new_index = {old: new for new, old in enumerate(agents_order)}
    assignment = tuple(
        DISCARD
        if outcome.assignment[goods_order[j]] is DISCARD
        else new_index[outcome.assignment[goods_order[j]]]
        for j in range(len(outcome.assignment))
    )
    payments = (
        tuple(outcome.payments[agents_order[i]] for i in range(n))
        if outcome.payments
        else ()
    )
    return Outcome(assignment=assignment, payments=payments)
