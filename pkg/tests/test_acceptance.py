"""Acceptance criteria for the whole package, one class per criterion.

Every labeling/arithmetic criterion is exact (Fractions, zero tolerance);
statistical criteria state their tolerances inline.  Known data corrections
(rows whose source printing is arithmetically inconsistent with its own
valuation profile) are stored engine-true in the bundled tables with a
``note`` documenting the printed value; the relevant tests assert those
notes exist rather than reproducing impossible numbers.
"""

import random
from fractions import Fraction
from pathlib import Path

import pytest

from fairdiv import agents, classify, corpus, stats
from fairdiv.cli import main as cli_main
from fairdiv.engine import (
    enumerate_goods_allocations,
    is_envy_free,
    is_pareto_optimal,
    label,
    optimal_outcomes,
    summarize,
    water_fill_maximin,
    water_fill_min_disparity,
)
from fairdiv.harness import ProviderConfig, refinement_loop, run_experiment
from fairdiv.model import (
    Instance,
    Outcome,
    disparity,
    outcome_to_response_json,
    payoff,
)
from fairdiv.prompts import (
    PromptFamily,
    extraction_skeleton,
    render_extraction_prompt,
    render_prompt,
)

GOLDEN_DIR = Path(__file__).parent / "golden"


class TestCriterion1GoldenLabeling:
    """Every curated table row labels exactly: notion set and payoff vector.

    Covers the ten human-response tables (5 rows each) plus all curated
    outcome tables.  Zero tolerance.  Rows where the source printing
    disagrees with its own valuation profile are stored engine-true with a
    documenting note; the one payoff misprint singled out below keeps its
    printed notion set.
    """

    def _rows(self):
        for iid in corpus.human_instance_ids():
            instance = corpus.load_instance(iid)
            for entry in corpus.human_reference(iid).entries:
                yield instance, entry
        for name in corpus.table_names():
            table = corpus.reference_table(name)
            instance = corpus.load_instance(table.instance_id)
            for entry in table.entries:
                yield instance, entry

    def test_at_least_sixty_rows(self):
        assert sum(1 for _ in self._rows()) >= 60

    def test_every_row_labels_exactly(self):
        count = 0
        for instance, entry in self._rows():
            assert label(instance, entry.outcome).names() == entry.notions, (
                instance.id,
                entry.outcome.assignment,
            )
            assert payoff(instance, entry.outcome) == entry.payoffs, (
                instance.id,
                entry.outcome.assignment,
            )
            count += 1
        assert count >= 60

    def test_documented_payoff_misprint_in_money_table(self):
        # One I7 row's printed payoff vector disagrees with the valuation
        # profile; the stored row keeps the printed notion set and the
        # engine-true payoffs, with the correction recorded on the entry.
        entries = [
            e
            for e in corpus.human_reference("I7").entries
            if e.note and "payoffs printed as (5,45,95)" in e.note
        ]
        assert len(entries) == 1
        instance = corpus.load_instance("I7")
        assert payoff(instance, entries[0].outcome) == (
            Fraction(5),
            Fraction(40),
            Fraction(95),
        )


class TestCriterion2Uniqueness:
    """On the integer payment grid, I7 has a unique {EQ*, RMM, PO} outcome
    under full money use and a unique {EF, PO} outcome."""

    def test_unique_eqstar_rmm_po_with_full_money(self):
        instance = corpus.load_instance("I7")
        outcomes = optimal_outcomes(
            instance, {"EQ*", "RMM", "PO"}, money_denominator=1, full_money=True
        )
        assert len(outcomes) == 1
        assert outcomes[0] == Outcome.make([0, 1, 2], [0, 5, 0])

    def test_unique_ef_po(self):
        instance = corpus.load_instance("I7")
        outcomes = optimal_outcomes(instance, {"EF", "PO"}, money_denominator=1)
        assert len(outcomes) == 1
        assert outcomes[0] == Outcome.make([0, 1, 2], [0, 0, 5])


class TestCriterion3MoneySplits:
    """Money-split characterizations for the I1.1-I1.4 family with goods
    fixed (first good to agent 1, second to agent 2).  Exact."""

    def test_i12_split_5_45_satisfies_eqstar_ef_usw(self):
        instance = corpus.load_instance("I1.2")
        notions = label(instance, Outcome.make([0, 1], [5, 45])).names()
        assert {"EQ*", "EF", "USW"} <= notions

    def test_i13_split_0_25_is_ef_but_not_eqstar(self):
        instance = corpus.load_instance("I1.3")
        notions = label(instance, Outcome.make([0, 1], [0, 25])).names()
        assert "EF" in notions
        assert "EQ*" not in notions

    def test_i11_ef_iff_second_payment_leads_by_twenty(self):
        instance = corpus.load_instance("I1.1")
        for p1 in range(51):
            for p2 in range(51 - p1):
                outcome = Outcome.make([0, 1], [p1, p2])
                assert is_envy_free(instance, outcome) == (p2 >= p1 + 20), (
                    p1,
                    p2,
                )


class TestCriterion4DisparityTables:
    """Recorded disparities of the five listed allocations: I2 and I2*."""

    def test_i2_disparities(self):
        assert [
            disparity(e.payoffs) for e in corpus.human_reference("I2").entries
        ] == [0, 5, 7, 73, 15]

    def test_i2star_disparities(self):
        table = corpus.reference_table("I2star_options")
        assert [disparity(e.payoffs) for e in table.entries] == [
            0,
            40,
            15,
            105,
            15,
        ]


class TestCriterion5SummaryConstants:
    def test_i2(self):
        summary = summarize(corpus.load_instance("I2"))
        assert summary.min_disparity == 0
        assert summary.maximin_value == 45
        assert summary.max_welfare == 160

    def test_i1(self):
        assert summarize(corpus.load_instance("I1")).min_disparity == 1

    def test_i0(self):
        summary = summarize(corpus.load_instance("I0"))
        assert summary.maximin_value == 45
        assert summary.max_welfare == 120


def _integer_splits(total, parts):
    if parts == 1:
        return [(x,) for x in range(total + 1)]
    return [
        (x,) + rest
        for x in range(total + 1)
        for rest in _integer_splits(total - x, parts - 1)
    ]


def _grid_dominated(base_vectors, u, money):
    """Brute-force search for a dominating outcome on the quarter-payment grid.

    For each candidate goods allocation with zero-payment payoffs ``b``, the
    cheapest grid payments reaching ``u`` pay the component-wise deficits
    (all quantities here are quarter-aligned, so no rounding is needed).
    Domination then needs either strict budget slack (a quarter can bump one
    coordinate) or an already-strict coordinate.
    """
    for b in base_vectors:
        deficit = Fraction(0)
        strict = False
        feasible = True
        for bi, ui in zip(b, u):
            if bi < ui:
                deficit += ui - bi
                if deficit > money:
                    feasible = False
                    break
            elif bi > ui:
                strict = True
        if feasible and (deficit < money or (deficit == money and strict)):
            return True
    return False


class TestCriterion6ParetoOracle:
    """is_pareto_optimal agrees with an independent grid dominance search.

    200 seeded random instances (n <= 3, m <= 4, integer values <= 50,
    budget in {0, 5}).  For budget 0, every goods allocation is checked; for
    budget 5, every goods allocation is checked under zero payments and two
    seeded integer payment vectors, against dominators drawn from the full
    quarter-denominator payment grid.
    """

    def test_agreement_on_200_instances(self):
        rng = random.Random(20240814)
        checked = 0
        for case in range(200):
            n = rng.randint(1, 3)
            m = rng.randint(1, 4)
            values = [[rng.randint(0, 50) for _ in range(m)] for _ in range(n)]
            money = rng.choice([0, 5])
            instance = Instance.make(f"po-oracle-{case}", values, money=money)
            allocations = list(enumerate_goods_allocations(instance))
            bases = [payoff(instance, Outcome.make(a)) for a in allocations]
            if money == 0:
                payments_choices = [()]
            else:
                splits = _integer_splits(money, n)
                payments_choices = [(), rng.choice(splits), rng.choice(splits)]
            for allocation in allocations:
                for payments in payments_choices:
                    outcome = Outcome.make(allocation, payments)
                    u = payoff(instance, outcome)
                    expected = not _grid_dominated(bases, u, Fraction(money))
                    assert is_pareto_optimal(instance, outcome) == expected, (
                        instance.id,
                        allocation,
                        payments,
                    )
                    checked += 1
        assert checked > 200


def _sixth_grid(total_sixths, parts):
    if parts == 1:
        return [(x,) for x in range(total_sixths + 1)]
    return [
        (x,) + rest
        for x in range(total_sixths + 1)
        for rest in _sixth_grid(total_sixths - x, parts - 1)
    ]


class TestCriterion7WaterFilling:
    """Closed-form water-filling dominates every sixth-denominator payment
    vector: no grid split achieves lower disparity or a higher minimum.
    200 seeded random (values, budget) cases; exact integer comparison in
    units of sixths."""

    def test_dominates_grid_on_200_cases(self):
        rng = random.Random(777)
        for _ in range(200):
            k = rng.randint(1, 3)
            w = [rng.randint(0, 20) for _ in range(k)]
            budget = rng.randint(0, 5)

            payments_d, best_disparity = water_fill_min_disparity(w, budget)
            levels_d = [Fraction(x) + p for x, p in zip(w, payments_d)]
            assert max(levels_d) - min(levels_d) == best_disparity
            assert sum(payments_d) == budget

            payments_m, best_min = water_fill_maximin(w, budget)
            levels_m = [Fraction(x) + p for x, p in zip(w, payments_m)]
            assert min(levels_m) == best_min
            assert sum(payments_m) == budget

            w6 = [6 * x for x in w]
            disparity6 = best_disparity * 6
            min6 = best_min * 6
            for q in _sixth_grid(6 * budget, k):
                levels = [a + b for a, b in zip(w6, q)]
                assert max(levels) - min(levels) >= disparity6
                assert min(levels) <= min6


class TestCriterion8BaselineAgents:
    def test_highest_bidder_is_usw_on_tie_free_instances(self):
        for iid in corpus.list_instances():
            instance = corpus.load_instance(iid)
            tie_free = all(
                sum(
                    1
                    for i in range(instance.n)
                    if instance.valuations[i][g]
                    == max(
                        instance.valuations[j][g] for j in range(instance.n)
                    )
                )
                == 1
                for g in range(instance.m)
            )
            if not tie_free:
                continue
            outcome = agents.run_agent(agents.Policy.highest_bidder(), instance)
            assert "USW" in label(instance, outcome).names(), iid

    def test_round_robin_identity_order_on_i0(self):
        instance = corpus.load_instance("I0")
        outcome = agents.run_agent(agents.Policy.round_robin((0, 1)), instance)
        assert payoff(instance, outcome) == (Fraction(80), Fraction(40))

    def test_report_prints_round_robin_ef_rate(self, capsys):
        # Descriptive only: the row must exist and parse; no threshold.
        assert cli_main(["report"]) == 0
        out = capsys.readouterr().out
        header = next(l for l in out.splitlines() if l.startswith("policy"))
        row = next(
            l
            for l in out.splitlines()
            if l.startswith("round_robin (all orders)")
        )
        # Header: "policy  EQ*  EQ  EF ..."; the row's policy name is three
        # tokens ("round_robin (all orders)"), so values start at token 3.
        ef_column = header.split().index("EF")
        ef_rate = float(row.split()[ef_column + 2])
        assert 0.0 <= ef_rate <= 100.0


class TestCriterion9Statistics:
    def test_fisher_exact_small_table(self):
        assert stats.fisher_exact_2x2([[2, 0], [0, 2]]) == Fraction(1, 3)

    def test_distribution_test_converges_to_exact_value(self):
        # Same table as above viewed as two count vectors; the Monte-Carlo
        # estimate must land within 0.01 of the exact 1/3 at 1e6 iterations.
        p = stats.distribution_test([2, 0], [0, 2], iterations=1_000_000, seed=0)
        assert abs(p - 1 / 3) <= 0.01

    def test_wilson_interval_matches_high_precision_evaluation(self):
        lo, hi = stats.proportion_ci(50, 100, 0.95, method="wilson")
        assert abs(lo - 0.4038315303659956) <= 1e-3
        assert abs(hi - 0.5961684696340044) <= 1e-3

    def test_human_eq_interval_matches_recorded_aggregate(self):
        """DELIBERATELY RED: the recorded aggregate is not reconstructible.

        The aggregate reported alongside the human survey data is an EQ rate
        of 29.0 (±12.8) across the ten instances.  That number was computed
        from the full per-response survey data, which is not published: only
        the five most frequent responses per instance are available, and the
        remaining ~20% tail carries unknown notion labels.  Reconstructing
        from the published rows (tail counted as non-EQ) gives per-instance
        EQ percentages (72.3, 26.2, 0, 16.5, 9.3, 32.6, 55.0, 22.5, 30.0,
        18.7): mean 28.31 (misses the +-0.5 tolerance by 0.19) and
        t-interval half-width 15.27 (misses the +-1.5 tolerance by ~1.0).
        Dropping the tail from denominators, using EQ* membership, or using
        printed percentages instead of derived counts all land further away;
        a normal (z) half-width over the same vector is 13.2, which fits the
        half-width tolerance but not the mean.  Corroboration that the
        recorded aggregate pooled unpublished data: its PO cell is 47.8
        versus 41.3 from published rows, RMM 34.8 versus 37.6.  The chosen
        tolerance is unattainable from the bundled data, so this test is
        left failing rather than weakened.
        """
        records = classify.expand_all_human_references()
        rates = classify.per_notion_rates(records, level=0.95, method="t_over_groups")
        eq = rates["EQ"]
        mean = float(eq.mean)
        half_width = (eq.hi - eq.lo) / 2
        assert abs(mean - 29.0) <= 0.5 and abs(half_width - 12.8) <= 1.5, (
            f"reconstructed mean {mean:.2f} (target 29.0 +-0.5), "
            f"t half-width {half_width:.2f} (target 12.8 +-1.5); "
            "the recorded aggregate used unpublished per-response data - "
            "see this test's docstring for the full analysis"
        )


class TestCriterion10HarnessEndToEnd:
    def test_four_answer_stub_splits_exactly(self):
        instance = corpus.load_instance("I2")
        cycle = [
            outcome_to_response_json(instance, Outcome.make(a))
            for a in ([1, 2, 0, 2], [2, 0, 1, 2], [1, 0, 2, 2], [1, 0, 1, 2])
        ]
        config = ProviderConfig(
            endpoint="scripted:", samples=100, script=tuple(cycle)
        )
        record = run_experiment(["I2"], PromptFamily.original(), config)[0]
        table = record.frequency_table()
        assert [(r.key, r.count) for r in table.rows] == [
            ("EQ*+RMM", 25),
            ("EF+PO", 25),
            ("RMM+PO", 25),
            ("USW", 25),
        ]

    def test_refinement_stub_converges_at_round_two(self):
        instance = corpus.load_instance("I2")
        script = (
            outcome_to_response_json(instance, Outcome.make([1, 0, 1, 2])),
            outcome_to_response_json(instance, Outcome.make([1, 2, 0, 2])),
        )
        record = refinement_loop(
            "I2",
            "EQ*",
            ProviderConfig(endpoint="scripted:", samples=1, script=script),
        )
        sample = record.samples[0]
        assert sample.rounds == 2
        # Both rounds recorded: prompt/answer/feedback/answer.
        assert [m["role"] for m in sample.transcript] == [
            "user",
            "assistant",
            "user",
            "assistant",
        ]

    @pytest.mark.parametrize(
        "name, instance_id, family",
        [
            ("original_I0", "I0", PromptFamily.original()),
            ("original_I7", "I7", PromptFamily.original()),
            ("menu_I2", "I2", None),  # menu options resolved from the corpus
            ("cot_I2", "I2", PromptFamily.chain_of_thought()),
        ],
    )
    def test_prompt_golden_files(self, name, instance_id, family):
        instance = corpus.load_instance(instance_id)
        if family is None:
            family = PromptFamily.menu(tuple(corpus.menu_options(instance_id)))
        rendered = render_prompt(instance, family)[0]["content"]
        assert rendered == (GOLDEN_DIR / f"{name}.txt").read_text()

    def test_extraction_skeleton_goldens(self):
        for instance_id in ("I0", "I7"):
            instance = corpus.load_instance(instance_id)
            golden = (GOLDEN_DIR / f"extraction_{instance_id}.txt").read_text()
            assert extraction_skeleton(instance) in golden

    def test_extraction_prompt_goldens(self):
        responses = {
            "I0": (
                "A fair allocation here is an envy-free one: Person 1 gets "
                "Good A, and Person 2 gets Goods B and C."
            ),
            "I7": (
                "I would give Good A to Person 1, Good B to Person 2 along "
                "with the 5 units of money, and Good C to Person 3."
            ),
        }
        for instance_id, response in responses.items():
            instance = corpus.load_instance(instance_id)
            first = render_prompt(instance, PromptFamily.original())[0]["content"]
            rendered = render_extraction_prompt(instance, first, response)
            golden = (GOLDEN_DIR / f"extraction_{instance_id}.txt").read_text()
            assert rendered[0]["content"] == golden


class TestCriterion11TableShapeOnly:
    """Live-model response percentages are NOT acceptance targets.

    Sampled model behavior drifts over time, so recorded model-row
    percentages are treated as illustrations; the pipeline is accepted by
    demonstrating it produces tables of exactly the recorded shape (ranked
    notion-set keys with counts and percentages per instance) from any
    provider, here a stub.
    """

    def test_stub_run_yields_fully_shaped_tables(self):
        instance = corpus.load_instance("I2")
        cycle = [
            outcome_to_response_json(instance, Outcome.make(a))
            for a in ([1, 2, 0, 2], [2, 0, 1, 2])
        ] + ["no JSON in this one"]
        config = ProviderConfig(endpoint="scripted:", samples=30, script=tuple(cycle))
        record = run_experiment(["I2"], PromptFamily.original(), config)[0]
        table = record.frequency_table()

        assert table.instance_id == "I2"
        assert table.total == 30
        assert sum(row.count for row in table.rows) == 30
        assert sum(row.percent for row in table.rows) == 100
        for row in table.rows:
            assert row.key == "Invalid" or all(
                part in ("EQ*", "EQ", "EF", "RMM", "USW", "PO", "None")
                for part in row.key.split("+")
            )
        # The same shape the recorded human tables use, so the two are
        # directly comparable rank-for-rank.
        human = classify.aggregate(classify.expand_human_reference("I2"))
        assert {type(r.percent) for r in human.rows} == {
            type(r.percent) for r in table.rows
        }

    def test_csv_contract_round_trips_the_shape(self, tmp_path):
        import io

        instance = corpus.load_instance("I2")
        config = ProviderConfig(
            endpoint="scripted:",
            samples=10,
            script=(outcome_to_response_json(instance, Outcome.make([1, 2, 0, 2])),),
        )
        record = run_experiment(["I2"], PromptFamily.original(), config)[0]
        stream = io.StringIO()
        classify.write_frequency_csv([record.frequency_table()], stream)
        lines = stream.getvalue().splitlines()
        assert lines[0] == "instance_id,notion_key,count,percent"
        assert lines[1] == "I2,EQ*+RMM,10,100.0"
