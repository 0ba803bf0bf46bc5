"""Core model: payoffs, disparity, validation, serialization."""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from fairdiv.model import (
    DISCARD,
    Instance,
    Outcome,
    ValidationError,
    as_fraction,
    disparity,
    format_quantity,
    good_name,
    outcome_to_response_dict,
    payoff,
    permute_instance,
    permute_outcome,
    person_name,
    validate_outcome,
)

I0 = Instance.make("I0", [[45, 20, 35], [35, 40, 25]])
I7 = Instance.make("I7", [[45, 30, 25], [35, 40, 25], [50, 5, 45]], money=5)


class TestPayoff:
    def test_goods_only_instance(self):
        # Agent 1 takes goods 1 and 3, agent 2 takes good 2.
        out = Outcome.make([0, 1, 0])
        assert payoff(I0, out) == (Fraction(80), Fraction(40))

    def test_split_row_of_two_agent_instance(self):
        out = Outcome.make([0, 1, DISCARD])
        assert payoff(I0, out) == (Fraction(45), Fraction(40))

    def test_money_raises_utilities(self):
        out = Outcome.make([0, 1, 2], [0, 5, 0])
        assert payoff(I7, out) == (Fraction(45), Fraction(45), Fraction(45))

    def test_all_discard_is_all_zero(self):
        out = Outcome.make([DISCARD, DISCARD, DISCARD], [0, 0, 0])
        assert payoff(I7, out) == (Fraction(0), Fraction(0), Fraction(0))

    @given(st.integers(0, 2))
    def test_additivity_over_bundles(self, agent_count_seed):
        inst = Instance.make("x", [[3, 5, 7], [2, 11, 1]])
        out = Outcome.make([0, 0, 1])
        u = payoff(inst, out)
        assert u[0] == inst.value(0, 0) + inst.value(0, 1)
        assert u[1] == inst.value(1, 2)


class TestDisparity:
    def test_equal_payoffs(self):
        assert disparity((Fraction(45), Fraction(45), Fraction(45))) == 0

    def test_spread(self):
        assert disparity((Fraction(80), Fraction(40))) == 40

    def test_known_values(self):
        assert disparity((Fraction(45), Fraction(45))) == 0
        assert disparity((Fraction(48), Fraction(45), Fraction(25))) == 23
        assert disparity((Fraction(125), Fraction(45), Fraction(20))) == 105

    def test_single_agent_zero(self):
        assert disparity((Fraction(7),)) == 0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            disparity(())

    @given(
        st.lists(st.fractions(min_value=0, max_value=100), min_size=1, max_size=5),
        st.fractions(min_value=-50, max_value=50),
    )
    def test_translation_invariance(self, values, shift):
        base = tuple(values)
        shifted = tuple(v + shift for v in values)
        assert disparity(base) == disparity(shifted)


class TestValidateOutcome:
    def test_overspent_money(self):
        out = Outcome.make([0, 1, 2], [3, 3, 0])
        problems = validate_outcome(I7, out)
        assert any("= 6 > budget = 5" in p for p in problems)

    def test_unknown_agent(self):
        out = Outcome(assignment=(0, 5, 2), payments=(Fraction(0),) * 3)
        problems = validate_outcome(I7, out)
        assert any("unknown agent" in p for p in problems)

    def test_negative_payment(self):
        out = Outcome(assignment=(0, 1, 2), payments=(Fraction(-1), Fraction(6), Fraction(0)))
        problems = validate_outcome(I7, out)
        assert any("negative" in p for p in problems)

    def test_ok(self):
        out = Outcome.make([0, 1, 2], [0, 5, 0])
        assert validate_outcome(I7, out) == []

    def test_zero_budget_requires_zero_payments(self):
        out = Outcome.make([0, 1, 0], [1, 0])
        assert validate_outcome(I0, out) != []

    def test_wrong_dimensions(self):
        assert validate_outcome(I0, Outcome.make([0, 1])) != []
        assert validate_outcome(I0, Outcome.make([0, 1, 0], [0, 0, 0])) != []


class TestInstance:
    def test_rejects_negative_valuation(self):
        with pytest.raises(ValidationError):
            Instance.make("bad", [[1, -2], [3, 4]])

    def test_rejects_ragged_matrix(self):
        with pytest.raises(ValidationError):
            Instance.make("bad", [[1, 2], [3]])

    def test_rejects_negative_money(self):
        with pytest.raises(ValidationError):
            Instance.make("bad", [[1]], money=-1)

    def test_allows_zero_goods(self):
        inst = Instance.make("empty", [[], []], money=4)
        assert inst.m == 0 and inst.n == 2

    def test_fractional_valuations_roundtrip(self):
        inst = Instance.make("frac", [[Fraction(1, 3), 2]], money=Fraction(5, 2))
        again = Instance.from_json_dict(inst.to_json_dict())
        assert again == inst

    def test_json_roundtrip_with_role(self):
        inst = Instance.make("r", [[1, 2], [3, 4]], money=5, decision_maker_role=0)
        again = Instance.from_json_dict(inst.to_json_dict())
        assert again == inst and again.decision_maker_role == 0

    def test_names(self):
        assert person_name(0) == "Person 1"
        assert good_name(0) == "Good A"
        assert good_name(25) == "Good Z"
        assert good_name(26) == "Good AA"


class TestFormatting:
    def test_integers_have_no_decimal_point(self):
        assert format_quantity(Fraction(45)) == "45"

    def test_finite_decimal(self):
        assert format_quantity(Fraction(5, 2)) == "2.5"

    def test_non_decimal_fraction(self):
        assert format_quantity(Fraction(1, 3)) == "1/3"

    def test_as_fraction_from_string(self):
        assert as_fraction("25/3") == Fraction(25, 3)
        assert as_fraction("2.5") == Fraction(5, 2)

    def test_as_fraction_rejects_bool(self):
        with pytest.raises(ValidationError):
            as_fraction(True)


class TestResponseDict:
    def test_goods_only(self):
        out = Outcome.make([0, 1, DISCARD])
        assert outcome_to_response_dict(I0, out) == {
            "Good A": "Person 1",
            "Good B": "Person 2",
            "Good C": "None",
        }

    def test_with_money_keys(self):
        out = Outcome.make([0, 1, 2], [0, 5, 0])
        d = outcome_to_response_dict(I7, out)
        assert d["Person 1 money"] == 0
        assert d["Person 2 money"] == 5

    def test_from_bundles(self):
        out = Outcome.from_bundles(I0, [[0, 2], [1]])
        assert out.assignment == (0, 1, 0)
        assert out.payments == ()
        assert out == Outcome.make([0, 1, 0])

    def test_from_bundles_rejects_duplicates(self):
        with pytest.raises(ValidationError):
            Outcome.from_bundles(I0, [[0], [0]])


class TestPermutation:
    def test_permuted_valuations_follow_both_orders(self):
        inst = permute_instance(I7, goods_order=[2, 0, 1], agents_order=[1, 2, 0])
        # New agent 1 is old agent 2; new good A is old good C.
        assert inst.valuations[0] == (
            Fraction(25),
            Fraction(35),
            Fraction(40),
        )
        assert inst.id == "I7[g201|a120]"
        assert inst.money == I7.money

    def test_identity_orders_by_default(self):
        inst = permute_instance(I0)
        assert inst.valuations == I0.valuations
        assert inst.id == "I0[g012|a01]"

    def test_custom_id(self):
        assert permute_instance(I0, id="I0-shuffled").id == "I0-shuffled"

    def test_role_follows_agent_order(self):
        base = Instance.make(
            "R", [[1, 2], [3, 4], [5, 6]], decision_maker_role=2
        )
        inst = permute_instance(base, agents_order=[2, 0, 1])
        assert inst.decision_maker_role == 0

    def test_rejects_non_permutations(self):
        with pytest.raises(ValidationError):
            permute_instance(I0, goods_order=[0, 1])
        with pytest.raises(ValidationError):
            permute_instance(I0, goods_order=[0, 0, 1])
        with pytest.raises(ValidationError):
            permute_instance(I0, agents_order=[1, 2])

    def test_outcome_moves_with_the_instance(self):
        goods_order, agents_order = [2, 0, 1], [1, 2, 0]
        out = Outcome.make([0, 1, 2], [0, 5, 0])
        permuted = permute_outcome(out, goods_order, agents_order)
        # Old good C went to old agent 3, who is new agent 2 (index 1).
        assert permuted.assignment == (1, 2, 0)
        assert permuted.payments == (Fraction(5), Fraction(0), Fraction(0))

    def test_discard_and_empty_payments_preserved(self):
        out = Outcome.make([DISCARD, 0, 1])
        permuted = permute_outcome(out, [1, 2, 0], [1, 0])
        assert permuted.assignment == (1, 0, DISCARD)
        assert permuted.payments == ()

    def test_payoffs_are_invariant_up_to_reordering(self):
        goods_order, agents_order = [1, 3, 0, 2], [2, 0, 1]
        inst = Instance.make(
            "P", [[5, 47, 45, 3], [45, 5, 48, 2], [23, 25, 32, 20]]
        )
        out = Outcome.make([1, 2, 0, 2])
        permuted_payoffs = payoff(
            permute_instance(inst, goods_order, agents_order),
            permute_outcome(out, goods_order, agents_order),
        )
        original = payoff(inst, out)
        assert permuted_payoffs == tuple(original[a] for a in agents_order)
