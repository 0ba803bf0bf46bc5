"""Command-line interface.

Subcommands: ``analyze`` (instance optima and labeled enumerations),
``classify`` (run JSONL to frequency tables), ``compare`` (two response
distributions, Monte-Carlo and per-notion exact tests), ``run`` (execute a
sampling run from a config file), ``agents`` (baseline decision procedures),
and ``report`` (deterministic descriptive summary).  CSV output is the
machine contract; the stdout tables are for humans.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Optional, Sequence

from . import agents as agents_mod
from . import classify as classify_mod
from . import corpus, stats
from .engine import NOTION_ORDER, label, optimal_outcomes, summarize
from .harness import (
    JsonlSink,
    load_run_config,
    outcome_from_json_dict,
    run_experiment,
)
from .model import (
    DISCARD,
    Instance,
    Outcome,
    ValidationError,
    format_quantity,
    payoff,
)

_NOTION_CHOICES = ("EQ", "EQ*", "EF", "RMM", "USW", "PO")


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _format_vector(values) -> str:
    return "(" + ", ".join(format_quantity(v) for v in values) + ")"


def _format_assignment(instance: Instance, outcome: Outcome) -> str:
    parts = []
    for g, recipient in enumerate(outcome.assignment):
        name = "-" if recipient is DISCARD else f"P{recipient + 1}"
        parts.append(f"{instance.goods[g][len('Good '):]}:{name}")
    text = " ".join(parts) if parts else "(no goods)"
    if instance.money > 0:
        payments = outcome.payments if outcome.payments else (0,) * instance.n
        text += f" money={_format_vector(payments)}"
    return text


def _outcome_row(instance: Instance, index: int, outcome: Outcome) -> str:
    notions = label(instance, outcome)
    return (
        f"{index:>4}. {_format_assignment(instance, outcome)}  "
        f"payoffs={_format_vector(payoff(instance, outcome))}  "
        f"{notions.key()}"
    )


def _write_outcome_csv(path: str, instance: Instance, outcomes: Sequence[Outcome]):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(
            ["instance_id", "assignment", "payments", "payoffs", "notions"]
        )
        for outcome in outcomes:
            writer.writerow(
                [
                    instance.id,
                    " ".join(
                        "discard" if a is DISCARD else str(a + 1)
                        for a in outcome.assignment
                    ),
                    " ".join(format_quantity(p) for p in outcome.payments),
                    " ".join(format_quantity(p) for p in payoff(instance, outcome)),
                    label(instance, outcome).key(),
                ]
            )


def _cmd_analyze(args) -> int:
    try:
        instance = corpus.load_instance(args.instance)
    except KeyError as exc:
        return _fail(str(exc))
    summary = summarize(instance)
    print(f"instance {instance.id}: n={instance.n} m={instance.m} "
          f"money={format_quantity(instance.money)}")
    print(f"min_disparity={format_quantity(summary.min_disparity)} "
          f"maximin={format_quantity(summary.maximin_value)} "
          f"max_welfare={format_quantity(summary.max_welfare)}")

    outcomes: list[Outcome] = []
    if args.full:
        outcomes = optimal_outcomes(
            instance, frozenset(), money_denominator=args.money_denominator
        )
        print(f"all outcomes ({len(outcomes)} rows):")
    elif args.notion:
        try:
            outcomes = optimal_outcomes(
                instance,
                args.notion,
                money_denominator=args.money_denominator,
                full_money=args.full_money,
            )
        except ValidationError as exc:
            return _fail(str(exc))
        wanted = "+".join(args.notion)
        print(f"outcomes satisfying {{{wanted}}} ({len(outcomes)} rows):")
    for index, outcome in enumerate(outcomes, start=1):
        print(_outcome_row(instance, index, outcome))
    if args.csv and outcomes:
        _write_outcome_csv(args.csv, instance, outcomes)
        print(f"wrote {args.csv}")
    return 0


def _load_run_records(path: str) -> list[classify_mod.LabeledResponse]:
    records = []
    with open(path, encoding="utf-8") as stream:
        for line_number, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{line_number}: bad JSON ({exc})")
            instance = corpus.load_instance(data["instance_id"])
            source = data.get("run_id", path)
            if data.get("outcome") is None:
                records.append(
                    classify_mod.LabeledResponse.invalid_response(
                        instance.id, source, raw_ref=data.get("failure")
                    )
                )
            else:
                records.append(
                    classify_mod.LabeledResponse.from_outcome(
                        instance, outcome_from_json_dict(data["outcome"]), source
                    )
                )
    return records


def _print_frequency_table(table: classify_mod.FrequencyTable) -> None:
    print(f"instance {table.instance_id}: {table.total} responses")
    for row in table.rows:
        print(f"  {row.key:<14} {row.count:>5}  {float(row.percent):.1f}%")


def _cmd_classify(args) -> int:
    try:
        records = _load_run_records(args.run)
    except (OSError, KeyError, ValidationError) as exc:
        return _fail(str(exc))
    if not records:
        return _fail(f"{args.run} contains no records")
    tables = classify_mod.aggregate_by_instance(records)
    ordered = [
        tables[iid] for iid in sorted(tables, key=corpus.instance_sort_key)
    ]
    for table in ordered:
        _print_frequency_table(table)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as stream:
            classify_mod.write_frequency_csv(ordered, stream)
        print(f"wrote {args.csv}")
    return 0


def _agents_source_records(
    selector: str, instance: Instance
) -> list[classify_mod.LabeledResponse]:
    kind = selector[len("agents:"):]
    source = selector
    if kind == "round_robin":
        policies = [
            agents_mod.Policy.round_robin(order)
            for order in agents_mod.round_robin_orders(instance.n)
        ]
    else:
        policies = [agents_mod.Policy(kind=kind)]
    return [
        classify_mod.LabeledResponse.from_outcome(
            instance, agents_mod.run_agent(policy, instance), source
        )
        for policy in policies
    ]


def _records_for_source(
    selector: str, instance: Instance
) -> list[classify_mod.LabeledResponse]:
    if selector == "human":
        return classify_mod.expand_human_reference(instance.id)
    if selector.startswith("agents:"):
        return _agents_source_records(selector, instance)
    records = [
        r for r in _load_run_records(selector) if r.instance_id == instance.id
    ]
    if not records:
        raise ValidationError(f"{selector} holds no records for {instance.id}")
    return records


def _category_counts(
    records_a: Sequence[classify_mod.LabeledResponse],
    records_b: Sequence[classify_mod.LabeledResponse],
) -> tuple[list[str], list[int], list[int]]:
    table_a = classify_mod.aggregate(records_a)
    table_b = classify_mod.aggregate(records_b)
    keys = {row.key for row in table_a.rows} | {row.key for row in table_b.rows}
    ordered = sorted(
        keys, key=lambda k: (-(table_a.count(k) + table_b.count(k)), k)
    )
    return (
        ordered,
        [table_a.count(k) for k in ordered],
        [table_b.count(k) for k in ordered],
    )


def _notion_rate(records, notion) -> Fraction:
    hits = sum(1 for r in records if notion in r.notions)
    return Fraction(100 * hits, len(records))


def _cmd_compare(args) -> int:
    try:
        instance = corpus.load_instance(args.instance)
        records_a = _records_for_source(args.source, instance)
        records_b = _records_for_source(args.against, instance)
    except (OSError, KeyError, ValidationError) as exc:
        return _fail(str(exc))

    keys, counts_a, counts_b = _category_counts(records_a, records_b)
    p_distribution = stats.distribution_test(
        counts_a, counts_b, iterations=args.iterations, seed=args.seed
    )
    print(
        f"comparison on {instance.id}: {args.source} "
        f"(n={len(records_a)}) vs {args.against} (n={len(records_b)})"
    )
    print(
        f"distribution p (Monte-Carlo, {args.iterations} iterations, "
        f"seed {args.seed}): {p_distribution:.4f}"
    )

    print("per-notion exact tests:")
    print(f"  {'notion':<7} {'rate_a':>7} {'rate_b':>7}  p")
    notion_rows = []
    for notion in NOTION_ORDER:
        hits_a = sum(1 for r in records_a if notion in r.notions)
        hits_b = sum(1 for r in records_b if notion in r.notions)
        p = stats.fisher_exact_2x2(
            [
                [hits_a, len(records_a) - hits_a],
                [hits_b, len(records_b) - hits_b],
            ]
        )
        rate_a = _notion_rate(records_a, notion)
        rate_b = _notion_rate(records_b, notion)
        notion_rows.append((notion, rate_a, rate_b, p))
        print(
            f"  {notion:<7} {float(rate_a):>6.1f}% {float(rate_b):>6.1f}%  "
            f"{float(p):.4g}"
        )

    print("top allocations:")
    for key, count_a, count_b in zip(keys, counts_a, counts_b):
        pct_a = 100 * count_a / len(records_a)
        pct_b = 100 * count_b / len(records_b)
        print(f"  {key:<14} a: {pct_a:>5.1f}%  b: {pct_b:>5.1f}%")

    if args.csv:
        import csv

        with open(args.csv, "w", newline="", encoding="utf-8") as stream:
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(
                ["instance_id", "measure", "rate_a", "rate_b", "p"]
            )
            writer.writerow(
                [
                    instance.id,
                    "distribution",
                    len(records_a),
                    len(records_b),
                    repr(p_distribution),
                ]
            )
            for notion, rate_a, rate_b, p in notion_rows:
                writer.writerow(
                    [
                        instance.id,
                        notion,
                        repr(float(rate_a)),
                        repr(float(rate_b)),
                        repr(float(p)),
                    ]
                )
        print(f"wrote {args.csv}")
    return 0


def _cmd_run(args) -> int:
    try:
        config = load_run_config(args.config)
    except (OSError, KeyError, ValidationError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    if not config.provider.is_scripted and not args.yes:
        print(
            "error: refusing to query a live endpoint without --yes "
            f"(endpoint: {config.provider.endpoint})",
            file=sys.stderr,
        )
        return 2
    try:
        for instance_id in config.instance_ids:
            corpus.load_instance(instance_id)
    except KeyError as exc:
        return _fail(str(exc))

    sink = JsonlSink(config.output_path) if config.output_path else None
    try:
        records = run_experiment(
            list(config.instance_ids), config.family, config.provider, sink=sink
        )
    except (ValueError, KeyError) as exc:
        return _fail(str(exc))
    invalid_total = 0
    for record in records:
        invalid_total += record.failure_count
        print(
            f"{record.instance.id}: {len(record.samples)} samples, "
            f"{record.failure_count} invalid"
        )
        _print_frequency_table(record.frequency_table())
    if config.output_path:
        print(f"wrote {config.output_path}")
    return 2 if invalid_total else 0


def _cmd_agents(args) -> int:
    try:
        instance = corpus.load_instance(args.instance)
    except KeyError as exc:
        return _fail(str(exc))
    policies = [
        agents_mod.Policy.highest_bidder(),
        agents_mod.Policy.equitable_waterfill(),
        agents_mod.Policy.maximin(),
        agents_mod.Policy.welfare_max(),
    ]
    if instance.n <= 3:
        orders = agents_mod.round_robin_orders(instance.n)
    else:
        orders = [tuple(range(instance.n))]
    policies.extend(agents_mod.Policy.round_robin(order) for order in orders)

    print(f"instance {instance.id}: baseline agents")
    rows = []
    for policy in policies:
        outcome = agents_mod.run_agent(policy, instance)
        rows.append((policy, outcome))
        print(
            f"  {policy.name:<22} {_format_assignment(instance, outcome)}  "
            f"payoffs={_format_vector(payoff(instance, outcome))}  "
            f"{label(instance, outcome).key()}"
        )
    if args.csv:
        import csv

        with open(args.csv, "w", newline="", encoding="utf-8") as stream:
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(
                ["instance_id", "policy", "assignment", "payments", "payoffs", "notions"]
            )
            for policy, outcome in rows:
                writer.writerow(
                    [
                        instance.id,
                        policy.name,
                        " ".join(
                            "discard" if a is DISCARD else str(a + 1)
                            for a in outcome.assignment
                        ),
                        " ".join(format_quantity(p) for p in outcome.payments),
                        " ".join(
                            format_quantity(p) for p in payoff(instance, outcome)
                        ),
                        label(instance, outcome).key(),
                    ]
                )
        print(f"wrote {args.csv}")
    return 0


def _report_agent_rates(instance_ids: Sequence[str]) -> list[tuple[str, dict]]:
    """Per-notion satisfaction percentages for every baseline policy."""
    named = [
        agents_mod.Policy.highest_bidder(),
        agents_mod.Policy.equitable_waterfill(),
        agents_mod.Policy.maximin(),
        agents_mod.Policy.welfare_max(),
    ]
    rows = []
    for policy in named:
        notion_hits = {notion: 0 for notion in NOTION_ORDER}
        total = 0
        for iid in instance_ids:
            instance = corpus.load_instance(iid)
            notions = label(instance, agents_mod.run_agent(policy, instance)).names()
            total += 1
            for notion in notions:
                notion_hits[notion] += 1
        rows.append(
            (
                policy.name,
                {n: Fraction(100 * c, total) for n, c in notion_hits.items()},
            )
        )
    # Round-robin pools every agent order of every instance.
    notion_hits = {notion: 0 for notion in NOTION_ORDER}
    total = 0
    for iid in instance_ids:
        instance = corpus.load_instance(iid)
        for order in agents_mod.round_robin_orders(instance.n):
            outcome = agents_mod.run_agent(
                agents_mod.Policy.round_robin(order), instance
            )
            notions = label(instance, outcome).names()
            total += 1
            for notion in notions:
                notion_hits[notion] += 1
    rows.append(
        (
            "round_robin (all orders)",
            {n: Fraction(100 * c, total) for n, c in notion_hits.items()},
        )
    )
    return rows


def _cmd_report(args) -> int:
    print(f"# Fair-division report (seed={args.seed})")
    print()
    print("## Instance summaries")
    print(f"{'id':<6} {'n':>2} {'m':>2} {'money':>6} "
          f"{'min_disp':>9} {'maximin':>8} {'max_welfare':>12}")
    for iid in corpus.list_instances():
        instance = corpus.load_instance(iid)
        summary = summarize(instance)
        print(
            f"{iid:<6} {instance.n:>2} {instance.m:>2} "
            f"{format_quantity(instance.money):>6} "
            f"{format_quantity(summary.min_disparity):>9} "
            f"{format_quantity(summary.maximin_value):>8} "
            f"{format_quantity(summary.max_welfare):>12}"
        )
    print()

    human_ids = corpus.human_instance_ids()
    print(f"## Human response rates ({human_ids[0]}-{human_ids[-1]})")
    human_records = classify_mod.expand_all_human_references()
    rates = classify_mod.per_notion_rates(human_records)
    print(f"{'notion':<7} {'mean%':>6}  95% CI (t over instances)")
    for notion in NOTION_ORDER:
        rate = rates[notion]
        print(
            f"{notion:<7} {float(rate.mean):>6.1f}  "
            f"({rate.lo:.1f}, {rate.hi:.1f})"
        )
    print()

    print("## Baseline agents (per-notion satisfaction, % of runs)")
    header = " ".join(f"{n:>6}" for n in NOTION_ORDER)
    print(f"{'policy':<26} {header}")
    for name, notion_rates in _report_agent_rates(human_ids):
        cells = " ".join(
            f"{float(notion_rates[n]):>6.1f}" for n in NOTION_ORDER
        )
        print(f"{name:<26} {cells}")
    print()

    for path in args.runs:
        print(f"## Run {path}")
        try:
            records = _load_run_records(path)
        except (OSError, KeyError, ValidationError) as exc:
            return _fail(str(exc))
        tables = classify_mod.aggregate_by_instance(records)
        for iid in sorted(tables, key=corpus.instance_sort_key):
            _print_frequency_table(tables[iid])
            if iid in human_ids:
                run_records = [r for r in records if r.instance_id == iid]
                human = classify_mod.expand_human_reference(iid)
                _, counts_a, counts_b = _category_counts(run_records, human)
                p = stats.distribution_test(
                    counts_a, counts_b, iterations=args.iterations, seed=args.seed
                )
                print(f"  vs human: distribution p = {p:.4f}")
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairdiv",
        description=(
            "Analyze fair-division instances, classify sampled responses, "
            "and compare response distributions."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="instance optima and labeled outcomes")
    p.add_argument("instance", help="instance id, e.g. I0")
    p.add_argument(
        "--notion",
        action="append",
        choices=_NOTION_CHOICES,
        help="list outcomes satisfying every named notion (repeatable)",
    )
    p.add_argument(
        "--money-denominator",
        type=int,
        default=1,
        help="payment grid resolution (payments in multiples of 1/K)",
    )
    p.add_argument(
        "--full-money",
        action="store_true",
        help="restrict the grid to payments using the whole budget",
    )
    p.add_argument(
        "--full", action="store_true", help="list the full labeled enumeration"
    )
    p.add_argument("--csv", help="also write the rows as CSV")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("classify", help="aggregate a run JSONL into tables")
    p.add_argument("run", help="path to a run JSONL file")
    p.add_argument("--csv", help="also write the tables as CSV")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("compare", help="compare two response distributions")
    p.add_argument(
        "source",
        help="run JSONL path, 'human', or 'agents:<policy>'",
    )
    p.add_argument(
        "--against",
        default="human",
        help="other side: run JSONL path, 'human', or 'agents:<policy>'",
    )
    p.add_argument("--instance", required=True, help="instance id to compare on")
    p.add_argument(
        "--iterations", type=int, default=100_000, help="Monte-Carlo iterations"
    )
    p.add_argument("--seed", type=int, default=0, help="Monte-Carlo seed")
    p.add_argument("--csv", help="also write the comparison as CSV")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("run", help="execute a sampling run from a config file")
    p.add_argument("config", help="path to a run-config JSON file")
    p.add_argument(
        "--yes",
        action="store_true",
        help="confirm querying a live (non-scripted) endpoint",
    )
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("agents", help="simulate baseline decision procedures")
    p.add_argument("instance", help="instance id")
    p.add_argument("--csv", help="also write the rows as CSV")
    p.set_defaults(func=_cmd_agents)

    p = sub.add_parser("report", help="deterministic descriptive report")
    p.add_argument(
        "runs", nargs="*", help="optional run JSONL files to summarize"
    )
    p.add_argument("--seed", type=int, default=0, help="Monte-Carlo seed")
    p.add_argument(
        "--iterations", type=int, default=100_000, help="Monte-Carlo iterations"
    )
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
