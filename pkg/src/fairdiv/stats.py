"""Exact and Monte-Carlo significance tests plus interval estimates.

Three tools used when comparing response distributions:

* :func:`fisher_exact_2x2` -- Fisher's exact test on a 2x2 table, computed
  with exact rational arithmetic (returns a ``Fraction``).
* :func:`distribution_test` -- a seeded Monte-Carlo generalization of
  Fisher's test (Fisher-Freeman-Halton) for two count vectors over the same
  categories.
* :func:`proportion_ci` -- interval estimates: the Wilson score interval for
  a single proportion, or mean +/- quantile * sd / sqrt(k) over per-group
  percentages (Student-t or normal quantile).

Two-sided convention throughout: the probability-mass criterion (sum the
probabilities of all margin-preserving tables that are no more probable than
the observed one).
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm as _norm
from scipy.stats import t as _student_t

__all__ = ["fisher_exact_2x2", "distribution_test", "proportion_ci"]

# Log-probability tie tolerance for the Monte-Carlo test: sampled tables whose
# log-probability exceeds the observed one by less than this are ties.
_LOG_TIE_EPS = 1e-9


def _binom(n: int, k: int) -> int:
    return math.comb(n, k)


def fisher_exact_2x2(table: Sequence[Sequence[int]]) -> Fraction:
    """Two-sided Fisher's exact test for a 2x2 contingency table.

    Returns the exact p-value as a ``Fraction``: the total hypergeometric
    probability of all tables with the same margins whose probability does
    not exceed the observed table's.
    """
    if len(table) != 2 or any(len(row) != 2 for row in table):
        raise ValueError("fisher_exact_2x2 requires a 2x2 table")
    (a, b), (c, d) = ((int(x) for x in row) for row in table)
    if min(a, b, c, d) < 0:
        raise ValueError("counts must be nonnegative")
    r1, r2 = a + b, c + d
    c1, c2 = a + c, b + d
    if min(r1, r2, c1, c2) == 0:
        raise ValueError("degenerate margins: every row and column sum must be positive")
    n = r1 + r2
    denom = _binom(n, r1)

    def prob(top_left: int) -> Fraction:
        return Fraction(_binom(c1, top_left) * _binom(c2, r1 - top_left), denom)

    observed = prob(a)
    lo = max(0, r1 - c2)
    hi = min(r1, c1)
    total = Fraction(0)
    for k in range(lo, hi + 1):
        p = prob(k)
        if p <= observed:
            total += p
    return total


def _log_table_probability(row_a: np.ndarray, row_b: np.ndarray) -> np.ndarray:
    """Null log-probability of 2xC tables with rows ``row_a``/``row_b``.

    Margins are fixed by the inputs; the constant margin term is included so
    the value is a genuine log-probability.  ``row_a`` may be a batch
    (iterations x C); ``row_b`` must broadcast against it.
    """
    cols = row_a + row_b
    n1 = row_a.sum(axis=-1)
    n2 = row_b.sum(axis=-1)
    n = n1 + n2
    const = (
        gammaln(n1 + 1)
        + gammaln(n2 + 1)
        + gammaln(cols + 1).sum(axis=-1)
        - gammaln(n + 1)
    )
    cells = gammaln(row_a + 1).sum(axis=-1) + gammaln(row_b + 1).sum(axis=-1)
    return const - cells


def distribution_test(
    counts_a: Sequence[int],
    counts_b: Sequence[int],
    iterations: int = 100_000,
    seed: int = 0,
) -> float:
    """Monte-Carlo Fisher-Freeman-Halton test for two count vectors.

    Both vectors index the same categories.  ``iterations`` margin-preserving
    tables are sampled under the null; the p-value is the add-one-smoothed
    fraction whose probability does not exceed the observed table's:
    ``(1 + hits) / (iterations + 1)``.  Deterministic for a fixed seed.
    """
    a = np.asarray(list(counts_a), dtype=np.int64)
    b = np.asarray(list(counts_b), dtype=np.int64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("count vectors must be one-dimensional and equal length")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("counts must be nonnegative")
    n1 = int(a.sum())
    n2 = int(b.sum())
    if n1 == 0 or n2 == 0:
        raise ValueError("each sample must contain at least one response")
    if iterations <= 0:
        raise ValueError("iterations must be positive")

    cols = a + b
    observed = _log_table_probability(a, b)
    rng = np.random.default_rng(seed)
    sampled_a = rng.multivariate_hypergeometric(cols, n1, size=iterations)
    sampled_b = cols - sampled_a
    log_probs = _log_table_probability(sampled_a, sampled_b)
    hits = int(np.count_nonzero(log_probs <= observed + _LOG_TIE_EPS))
    return (1 + hits) / (iterations + 1)


def proportion_ci(
    successes: int | None = None,
    n: int | None = None,
    level: float = 0.95,
    method: str = "wilson",
    group_values: Sequence[float] | None = None,
) -> tuple[float, float]:
    """Confidence interval for a proportion or a mean of group percentages.

    * ``method="wilson"``: score interval for ``successes`` out of ``n``
      trials, returned on the [0, 1] proportion scale.
    * ``method="t_over_groups"``: ``mean +/- t_{level,k-1} * sd / sqrt(k)``
      over ``group_values`` (k >= 2 per-group percentages), returned on the
      same scale as the inputs.
    * ``method="normal_over_groups"``: as above with the normal quantile in
      place of the Student-t quantile.
    """
    if not 0 < level < 1:
        raise ValueError("level must be strictly between 0 and 1")
    if method == "wilson":
        if successes is None or n is None:
            raise ValueError("wilson method requires successes and n")
        if n <= 0:
            raise ValueError("n must be positive")
        if not 0 <= successes <= n:
            raise ValueError("successes must lie in [0, n]")
        z = float(_norm.ppf((1 + level) / 2))
        p_hat = successes / n
        denom = 1 + z * z / n
        center = (p_hat + z * z / (2 * n)) / denom
        half = (z / denom) * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n))
        lo = 0.0 if successes == 0 else max(0.0, center - half)
        hi = 1.0 if successes == n else min(1.0, center + half)
        return (lo, hi)
    if method in ("t_over_groups", "normal_over_groups"):
        if group_values is None or len(group_values) < 2:
            raise ValueError(f"{method} requires at least two group values")
        values = [float(v) for v in group_values]
        k = len(values)
        mean = sum(values) / k
        variance = sum((v - mean) ** 2 for v in values) / (k - 1)
        if method == "t_over_groups":
            q = float(_student_t.ppf((1 + level) / 2, k - 1))
        else:
            q = float(_norm.ppf((1 + level) / 2))
        half = q * math.sqrt(variance / k)
        return (mean - half, mean + half)
    raise ValueError(
        f"unknown method: {method!r} "
        "(expected wilson, t_over_groups, or normal_over_groups)"
    )
