"""Prompt rendering for every experiment family.

All templates produce byte-stable plain text.  Conventions:

* Agents render as "Person i" (1-based) and goods as "Good J" with J the
  j-th capital letter; quantities render as integers whenever integral.
* Two-agent instances separate the per-agent value sentences with blank
  lines; larger instances put them on consecutive lines.
* When an instance has a decision-maker role, or a role is explicitly
  assigned, the prompt addresses the model as a participant ("You").

The first prompt of the two-stage strategy asks for a fair allocation in
free text; the extraction prompt then asks for a JSON object.  The template
family appends the JSON skeleton directly to the first prompt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .model import (
    DISCARD,
    Instance,
    Outcome,
    format_quantity,
    validate_outcome,
)

PROMPT_KINDS = (
    "original_two_stage",
    "template_single_stage",
    "modified_intention",
    "persona",
    "objective",
    "feedback_refinement",
    "chain_of_thought",
    "menu_selection",
    "role_assigned",
)

TASK_LINE = (
    "Your task is to determine the allocation that you consider to be the "
    "fairest - there are no 'correct' or 'incorrect' answers."
)

ROLE_TASK_LINE = (
    "Your task is to determine the allocation that you consider the fairest- "
    "no 'correct' or 'incorrect' answers exist."
)

INTENTION_LINES = {
    "fairest": TASK_LINE,
    "acceptable_by_all": (
        "Your task is to determine the allocation that you consider to be "
        "acceptable by all individuals involved - there are no 'correct' or "
        "'incorrect' answers."
    ),
    "most_desirable": (
        "Your task is to determine the allocation that you consider to be "
        "the most desirable - there are no 'correct' or 'incorrect' answers."
    ),
    "an_allocation": (
        "Your task is to determine an allocation - there are no 'correct' "
        "or 'incorrect' answers."
    ),
}

OBJECTIVE_LINES = {
    "EQ*": (
        "Your task is to determine the allocation in which all individuals "
        "have exactly the same value for their respective bundles. In other "
        "words, all individuals should value their bundles equally."
    ),
    "EF": (
        "Your task is to determine the allocation where each individual "
        "prefers their own bundle the most. In other words, there should be "
        "no envy between any pair of individuals."
    ),
    "RMM": (
        "Your task is to determine the allocation where the value derived "
        "by the worst-off individual is the most across all possible "
        'allocations. In other words, find the allocation that satisfies the '
        '"Max-Min" criterion.'
    ),
    "USW": (
        "Your task is to determine the allocation that maximizes the sum of "
        "values derived by all individuals from their respective bundles."
    ),
}

PERSONA_PHRASES = {
    "EQ*": (
        "equitability, i.e. that all individuals value their respective "
        "bundles equally"
    ),
    "EF": (
        "envy-freeness, i.e. that no individual prefers another "
        "individual's bundle over their own"
    ),
    "RMM": (
        "the maximin principle, i.e. that the value derived by the "
        "worst-off individual is as high as possible"
    ),
    "USW": (
        "overall utility, i.e. that the sum of values derived by all "
        "individuals is as high as possible"
    ),
}

FEEDBACK_TEXTS = {
    "EQ*": (
        "The allocation that you provided does not minimize the inequality "
        "between the individuals involved. Please return an allocation that "
        "does minimize the difference between the payoffs received by "
        "individuals."
    ),
    "RMM": (
        "The allocation that you provided does not maximize the payoff "
        "received by the worst-off individual. Please return an allocation "
        "that does maximize the payoff of the worst-off individual."
    ),
    "EF": (
        "The allocation that you provided does not minimize the envy "
        "between the individuals involved. Please return an allocation that "
        "does minimize the envy between individuals."
    ),
}

EXTRACTION_HEADER = (
    "Please present the allocation you have selected in the following JSON "
    "format:"
)

MENU_CLOSING_LINE = (
    "Please indicate the allocation you think is fairest and explain the "
    "reasons behind your choice."
)

# The worked two-agent example prepended by the chain-of-thought family,
# reproduced verbatim from the source experiment (including its misprints:
# "Person2", the missing space after "Good C.", and the dash references).
COT_EXAMPLE_ID = "I0"
COT_EXAMPLE_TEXT = """Consider the following problem where goods need to be allocated among different individuals:
Imagine that the individuals involved, i.e. Person 1 and Person2 approach you and ask you to determine a fair allocation of 3 goods, namely Good A, Good B, and Good C.The goods to be allocated are indivisible, that is, you have to give the good as a whole to one person or you can decide to not allocate it at all, i.e., you throw it away.

Person 1's value for Good A is 45, for Good B is 20, and for Good C is 35.
Person 2's value for Good A is 35, for Good B is 40, and for Good C is 25.

If your task is to determine the allocation you think is fairest, the following allocations are important:

Allocation-1: Person 1 gets Good A, and Person 2 gets Good B. Person 1 values their bundle at 45 and Person 2's bundle at 20, while Person 2 values their own bundle at 40 and Person 1's bundle at 35. Since each agent values their own bundle more than they value the other agent's bundle, this allocation is envy-free. However, this allocation does not maximize the overall utility (since all goods are not allocated to the agents who respectively value them the most), is not equitable (since the payoffs received by different agents are not identical), and does not satisfy the maximin rule (since there exists an allocation where the worst-off agent has a higher payoff - Allocation 3).

Allocation-2: Person 1 gets Good C, and Person 2 gets Good A. Both Person 1 and Person 2 value their respective bundles at 35. Since both individuals receive identical payoffs, this allocation is equitable. However, this allocation does not maximize the overall utility (since all goods are not allocated to the agents who respectively value them the most), is not envy-free (since Person 1 values Person 2's bundle more than their own), and does not satisfy the maximin rule (since there exists an allocation where the worst-off agent has a higher payoff - Allocation 3).

Allocation-3: Person 1 gets Good A, and Person 2 gets Goods B and C. Person 1 values their bundle at 45, and Person 2 values their bundle at 65. Since there is no other allocation where the payoff of the worst-off agent (in this case Person 1) is greater than 45, this allocation satisfies the maximin rule. However, this allocation does not maximize the overall utility (since all goods are not allocated to the agents who respectively value them the most), is not envy-free (since Person 1 values Person 2's bundle more than their own), and is not equitable (since the payoffs received by different agents are not identical).

Allocation-4: Person 1 gets Goods A and C, and Person 2 gets Good B. Person 1 values their bundle at 80 and Person 2 values their bundle at 40. Since each good is allocated to the individual who values it the most, this allocation maximizes the overall utility. However, this allocation is not envy-free (since Person 2 values Person 1's bundle more than their own), is not equitable (since the payoffs received by different agents are not identical), and does not satisfy the maximin rule (since there exists an allocation where the worst-off agent has a higher payoff - Allocation 3).

The allocation you choose shall depend on the criteria, among the above, that you think is fairest."""

COT_TASK_LINE = (
    "Your task is to determine the allocation that you think is fairest."
)

_NOTION_EXPLANATIONS = {
    "EQ*": ("is", "equitable", "it ensures perfect equality"),
    "EQ": (
        "minimizes",
        "inequality",
        "no allocation has a smaller difference between the highest and "
        "lowest payoffs",
    ),
    "EF": ("is", "envy-free", "no agent is envious of another"),
    "RMM": (
        "satisfies",
        "the maximin principle",
        "it maximizes the minimum payoff",
    ),
    "USW": ("maximizes", "the total utility", "it maximizes the sum of payoffs"),
    "PO": (
        "is",
        "Pareto-optimal",
        "there is no allocation where all agents are as well-off and at "
        "least one agent is strictly better-off",
    ),
}

_NO_PROPERTY_TEXT = (
    "This allocation satisfies none of the standard fairness or efficiency "
    "criteria considered here."
)


@dataclass(frozen=True)
class PromptFamily:
    """One experiment family plus its parameters.

    ``last_line`` overrides the closing paragraph of any single-prompt
    family, for callers that want wording other than the built-in presets.
    """

    kind: str
    notion: Optional[str] = None
    variant: Optional[str] = None
    example_instance_id: Optional[str] = None
    options: Optional[tuple[Outcome, ...]] = None
    context: str = "none"
    percents: Optional[tuple[str, ...]] = None
    role: Optional[int] = None
    max_retries: int = 2
    last_line: Optional[str] = None

    @staticmethod
    def original() -> "PromptFamily":
        return PromptFamily(kind="original_two_stage")

    @staticmethod
    def template() -> "PromptFamily":
        return PromptFamily(kind="template_single_stage")

    @staticmethod
    def intention(
        variant: Optional[str] = None, *, text: Optional[str] = None
    ) -> "PromptFamily":
        return PromptFamily(
            kind="modified_intention", variant=variant, last_line=text
        )

    @staticmethod
    def persona(notion: str, *, text: Optional[str] = None) -> "PromptFamily":
        return PromptFamily(
            kind="persona", notion=_normalize_notion(notion), last_line=text
        )

    @staticmethod
    def objective(notion: str) -> "PromptFamily":
        return PromptFamily(kind="objective", notion=_normalize_notion(notion))

    @staticmethod
    def feedback(notion: str, max_retries: int = 2) -> "PromptFamily":
        return PromptFamily(
            kind="feedback_refinement",
            notion=_normalize_notion(notion),
            max_retries=max_retries,
        )

    @staticmethod
    def chain_of_thought(example_instance_id: str = COT_EXAMPLE_ID) -> "PromptFamily":
        return PromptFamily(
            kind="chain_of_thought", example_instance_id=example_instance_id
        )

    @staticmethod
    def menu(
        options: Optional[Sequence[Outcome]] = None,
        context: str = "none",
        percents: Optional[Sequence[str]] = None,
    ) -> "PromptFamily":
        """``options=None`` defers to each instance's curated menu."""
        return PromptFamily(
            kind="menu_selection",
            options=tuple(options) if options is not None else None,
            context=context,
            percents=tuple(percents) if percents is not None else None,
        )

    @staticmethod
    def role_assigned(role: int) -> "PromptFamily":
        return PromptFamily(kind="role_assigned", role=role)


def _normalize_notion(notion: str) -> str:
    if notion == "EQ":
        return "EQ*"
    return notion


def _join_clauses(items: Sequence[str]) -> str:
    """Comma-separated list with ", and" before the final item."""
    if not items:
        return ""
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + ", and " + items[-1]


def _join_bare_goods(items: Sequence[str]) -> str:
    """Good letters inside a bundle: "A and D" but "A, B, and C"."""
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return _join_clauses(items)


def _quantity(value) -> str:
    return format_quantity(value)


def _intro_paragraph(instance: Instance) -> str:
    names = _join_clauses(list(instance.agents))
    goods = _join_clauses(list(instance.goods))
    return (
        "Consider a problem where goods need to be allocated among different "
        f"individuals. Imagine that the individuals involved, i.e. {names}, "
        "approach you and ask you to determine a fair allocation of "
        f"{instance.m} goods, namely {goods}. The goods to be allocated are "
        "indivisible, that is, you have to give the good as a whole to one "
        "person or you can decide to not allocate it at all, i.e., you throw "
        "it away."
    )


def _role_intro_paragraph(instance: Instance, role: int) -> str:
    goods = _join_clauses(list(instance.goods))
    others = [name for i, name in enumerate(instance.agents) if i != role]
    names = _join_clauses(others + ["You"])
    return (
        "Consider a problem where goods need to be allocated among different "
        f"individuals. Your task is to allocate {instance.m} goods, namely "
        f"{goods}, among the individuals involved, i.e. {names}. Pick an "
        "allocation you consider to be fair and that you think is acceptable "
        "to the other participants (assume that your proposal can only be "
        "realized if all participants agree). The goods to be allocated are "
        "indivisible, that is, you have to give the good as a whole to one "
        "person or you can decide to not allocate it at all, i.e., you throw "
        "it away."
    )


def _value_sentence(instance: Instance, agent: int, role: Optional[int]) -> str:
    clauses = [
        f"for {good} is {_quantity(instance.valuations[agent][g])}"
        for g, good in enumerate(instance.goods)
    ]
    owner = (
        "Your value" if role is not None and agent == role
        else f"{instance.agents[agent]}'s value"
    )
    return f"{owner} {_join_clauses(clauses)}."


def _values_block(instance: Instance, role: Optional[int] = None) -> str:
    sentences = [
        _value_sentence(instance, i, role) for i in range(instance.n)
    ]
    separator = "\n\n" if instance.n == 2 else "\n"
    return separator.join(sentences)


def _money_paragraph(instance: Instance) -> str:
    amount = _quantity(instance.money)
    return (
        f"A total of {amount} units of money are also available for "
        "allocation. This amount of money is worth exactly as much as a good "
        "of the same value, for each individual. Since this is a divisible "
        "resource, parts of it can be allocated to different agents, although "
        f"the total money allocated cannot exceed {amount} units."
    )


def _body_paragraphs(instance: Instance, role: Optional[int] = None) -> list[str]:
    parts = []
    if role is None:
        parts.append(_intro_paragraph(instance))
    else:
        parts.append(_role_intro_paragraph(instance, role))
    if instance.m:
        parts.append(_values_block(instance, role))
    if instance.money > 0:
        parts.append(_money_paragraph(instance))
    return parts


def _effective_role(instance: Instance, family: PromptFamily) -> Optional[int]:
    if family.kind == "role_assigned":
        if family.role is None or not 0 <= family.role < instance.n:
            raise ValueError(f"role index out of range: {family.role!r}")
        return family.role
    return instance.decision_maker_role


def _standard_prompt(instance: Instance, last_line: str, role: Optional[int]) -> str:
    return "\n\n".join(_body_paragraphs(instance, role) + [last_line])


def describe_outcome(instance: Instance, outcome: Outcome) -> str:
    """One-sentence allocation description used by menu options.

    Example: "Person 1 gets Good B, Person 2 gets Goods A and C, and Good D
    is discarded."
    """
    items = []
    for i, name in enumerate(instance.agents):
        goods = [instance.goods[g] for g in outcome.bundle(i)]
        if len(goods) == 0:
            goods_text = None
        elif len(goods) == 1:
            goods_text = goods[0]
        else:
            bare = [g.split(" ", 1)[1] for g in goods]
            goods_text = "Goods " + _join_bare_goods(bare)
        money = outcome.payments[i] if outcome.payments else 0
        if money > 0:
            unit = "unit" if money == 1 else "units"
            money_text = f"{_quantity(money)} {unit} of money"
        else:
            money_text = None
        received = " and ".join(t for t in (goods_text, money_text) if t)
        items.append(f"{name} gets {received or 'nothing'}")
    discarded = [instance.goods[g] for g in outcome.discarded()]
    if len(discarded) == 1:
        items.append(f"{discarded[0]} is discarded")
    elif len(discarded) > 1:
        bare = [g.split(" ", 1)[1] for g in discarded]
        items.append("Goods " + _join_bare_goods(bare) + " are discarded")
    return _join_clauses(items) + "."


def _payoffs_sentence(instance: Instance, payoffs: Sequence) -> str:
    if len(set(payoffs)) == 1:
        return f"Each Person gets {_quantity(payoffs[0])} units of utility."
    items = []
    for i, value in enumerate(payoffs):
        amount = _quantity(value)
        if i == 0:
            items.append(f"{instance.agents[i]} gets {amount} units of utility")
        elif i < len(payoffs) - 1:
            items.append(f"{instance.agents[i]} gets {amount} units")
        else:
            items.append(f"{instance.agents[i]} gets {amount}")
    return _join_clauses(items) + "."


def _properties_sentence(notions: frozenset[str]) -> str:
    from .engine import NotionSet

    shown = NotionSet.from_names(notions).key(collapse_po_under_usw=False)
    if shown == "None":
        return _NO_PROPERTY_TEXT
    parts = shown.split("+")
    verbs = []
    clauses = []
    for k, part in enumerate(parts):
        aux, predicate, clause = _NOTION_EXPLANATIONS[part]
        prev_aux = _NOTION_EXPLANATIONS[parts[k - 1]][0] if k else None
        # Repeated copulas and subjects are elided: "is envy-free and
        # Pareto-optimal", "it ensures perfect equality and maximizes ...".
        if aux == "is" and prev_aux == "is":
            verbs.append(predicate)
        else:
            verbs.append(f"{aux} {predicate}")
        prev_clause = _NOTION_EXPLANATIONS[parts[k - 1]][2] if k else ""
        if clause.startswith("it ") and prev_clause.startswith("it "):
            clauses.append(clause[len("it "):])
        else:
            clauses.append(clause)
    return (
        "This allocation "
        + " and ".join(verbs)
        + ", i.e. "
        + " and ".join(clauses)
        + "."
    )


def _menu_body(instance: Instance, family: PromptFamily) -> list[str]:
    from .engine import label
    from .model import payoff

    if not family.options:
        raise ValueError("menu_selection requires options")
    for k, option in enumerate(family.options, start=1):
        violations = validate_outcome(instance, option)
        if violations:
            raise ValueError(
                f"menu option {k} is not a valid outcome: {violations[0]}"
            )

    if family.context == "none":
        task = (
            "Your task is to determine the allocation that you consider to "
            "be the fairest among the options given below:"
        )
        lines = [
            f"Allocation-{k}: {describe_outcome(instance, option)}"
            for k, option in enumerate(family.options, start=1)
        ]
        return [task, "\n".join(lines), MENU_CLOSING_LINE]

    if family.context == "human_percentages":
        if family.percents is None or len(family.percents) != len(family.options):
            raise ValueError(
                "human_percentages context requires one percent per option"
            )
        task = (
            "Your task is to determine the allocation that you consider "
            "fairest. For your reference, human respondents chose the "
            "following allocations more frequently (with the percentage of "
            "responses corresponding to each allocation indicated in "
            "brackets):"
        )
        lines = [
            f"Allocation-{k} ({float(percent):.1f}% responses): "
            f"{describe_outcome(instance, option)}"
            for k, (option, percent) in enumerate(
                zip(family.options, [float(p) for p in family.percents]), start=1
            )
        ]
        return [task, "\n".join(lines), MENU_CLOSING_LINE]

    if family.context == "explanations":
        task = (
            "Your task is to determine the allocation that you consider "
            "fairest among the options given below:"
        )
        blocks = []
        for k, option in enumerate(family.options, start=1):
            notions = label(instance, option).names()
            blocks.append(
                "\n".join(
                    [
                        f"Option {k}:",
                        "{",
                        f"Allocation: {describe_outcome(instance, option)}",
                        f"Payoffs: {_payoffs_sentence(instance, payoff(instance, option))}",
                        f"Properties: {_properties_sentence(notions)}",
                        "}",
                    ]
                )
            )
        return [task, "\n".join(blocks), MENU_CLOSING_LINE]

    raise ValueError(f"unknown menu context: {family.context!r}")


def _chain_of_thought_prompt(instance: Instance) -> str:
    target_intro = _intro_paragraph(instance).replace(
        "Consider a problem", "Now, consider another problem", 1
    )
    parts = [COT_EXAMPLE_TEXT, target_intro]
    if instance.m:
        parts.append(_values_block(instance))
    if instance.money > 0:
        parts.append(_money_paragraph(instance))
    parts.append(COT_TASK_LINE)
    return "\n\n".join(parts)


def render_prompt(instance: Instance, family: PromptFamily) -> list[dict]:
    """First-stage message list (a single user message) for a family."""
    if family.kind not in PROMPT_KINDS:
        raise ValueError(f"unknown prompt family: {family.kind!r}")

    role = _effective_role(instance, family)

    if family.kind in ("original_two_stage", "role_assigned"):
        last = family.last_line or (
            ROLE_TASK_LINE if role is not None else TASK_LINE
        )
        text = _standard_prompt(instance, last, role)
    elif family.kind == "template_single_stage":
        last = family.last_line or (
            ROLE_TASK_LINE if role is not None else TASK_LINE
        )
        text = (
            _standard_prompt(instance, last, role)
            + "\n\n"
            + EXTRACTION_HEADER
            + "\n"
            + extraction_skeleton(instance)
        )
    elif family.kind == "modified_intention":
        if family.last_line is not None:
            last = family.last_line
        elif family.variant in INTENTION_LINES:
            last = INTENTION_LINES[family.variant]
        else:
            raise ValueError(
                f"unknown intention variant: {family.variant!r} "
                f"(known: {', '.join(INTENTION_LINES)})"
            )
        text = _standard_prompt(instance, last, role)
    elif family.kind == "objective":
        if family.last_line is not None:
            last = family.last_line
        elif family.notion in OBJECTIVE_LINES:
            last = OBJECTIVE_LINES[family.notion]
        else:
            raise ValueError(f"no objective wording for notion: {family.notion!r}")
        text = _standard_prompt(instance, last, role)
    elif family.kind in ("persona", "feedback_refinement"):
        if family.last_line is not None:
            last = family.last_line
        elif family.notion in PERSONA_PHRASES:
            last = (
                f"You are an individual who cares deeply about "
                f"{PERSONA_PHRASES[family.notion]}. {TASK_LINE}"
            )
        else:
            raise ValueError(f"no persona wording for notion: {family.notion!r}")
        text = _standard_prompt(instance, last, role)
    elif family.kind == "chain_of_thought":
        if family.example_instance_id != COT_EXAMPLE_ID:
            raise ValueError(
                "chain-of-thought example text is available only for "
                f"{COT_EXAMPLE_ID!r}, not {family.example_instance_id!r}"
            )
        text = _chain_of_thought_prompt(instance)
    elif family.kind == "menu_selection":
        text = "\n\n".join(_body_paragraphs(instance, role) + _menu_body(instance, family))
    else:  # pragma: no cover - all kinds handled above
        raise AssertionError(family.kind)

    return [{"role": "user", "content": text}]


def extraction_skeleton(instance: Instance) -> str:
    """The JSON-shaped answer skeleton (money keys only when money exists)."""
    lines = ["{"]
    for good in instance.goods:
        lines.append(
            f'"{good}": "<person to whom {good} is allocated, '
            f'"None" if {good} is discarded>",'
        )
    if instance.money > 0:
        for i, agent in enumerate(instance.agents):
            trailing = "," if i < instance.n - 1 else ""
            lines.append(
                f'"{agent} money": "<money allocated to {agent}, '
                f'0 if no money was allocated to {agent}>"{trailing}'
            )
    lines.append("}")
    return "\n".join(lines)


def render_extraction_prompt(
    instance: Instance, first_prompt: str, response: str
) -> list[dict]:
    """Second-stage message asking for the chosen allocation as JSON."""
    text = (
        "Previously, I asked you the following question:\n"
        f'"{first_prompt}"\n'
        "\n"
        "And this was your response\n"
        f'"{response}"\n'
        "\n"
        f"{EXTRACTION_HEADER}\n"
        f"{extraction_skeleton(instance)}"
    )
    return [{"role": "user", "content": text}]


def render_feedback_prompt(
    notion: str, first_prompt: str, latest_response: str
) -> list[dict]:
    """Feedback message for the refinement loop (EQ*/RMM/EF only)."""
    canonical = _normalize_notion(notion)
    if canonical not in FEEDBACK_TEXTS:
        raise ValueError(f"unsupported feedback notion: {notion!r}")
    text = (
        "Previously, I asked you the following question:\n"
        f'"{first_prompt}"\n'
        "\n"
        "And this was your response\n"
        f'"{latest_response}"\n'
        "\n"
        f"{FEEDBACK_TEXTS[canonical]}"
    )
    return [{"role": "user", "content": text}]
