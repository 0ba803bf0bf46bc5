"""Exact analysis of allocations of indivisible goods with money, plus a
harness for eliciting and classifying allocation choices from chat models."""

from .model import (
    DISCARD,
    Instance,
    Outcome,
    ValidationError,
    as_fraction,
    disparity,
    format_quantity,
    payoff,
    require_valid,
    validate_outcome,
)
from .engine import (
    InstanceSummary,
    NotionSet,
    enumerate_goods_allocations,
    is_envy_free,
    is_pareto_optimal,
    label,
    optimal_outcomes,
    summarize,
    water_fill_maximin,
    water_fill_min_disparity,
)

__version__ = "0.1.0"

__all__ = [
    "DISCARD",
    "Instance",
    "InstanceSummary",
    "NotionSet",
    "Outcome",
    "ValidationError",
    "as_fraction",
    "disparity",
    "enumerate_goods_allocations",
    "format_quantity",
    "is_envy_free",
    "is_pareto_optimal",
    "label",
    "optimal_outcomes",
    "payoff",
    "require_valid",
    "summarize",
    "validate_outcome",
    "water_fill_maximin",
    "water_fill_min_disparity",
    "__version__",
]
