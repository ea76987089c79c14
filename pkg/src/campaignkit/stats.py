"""Rank and variance statistics used by the analytics module.

Self-contained on purpose: the F-distribution tail comes from a
continued-fraction evaluation of the regularized incomplete beta function,
checked in the test suite against a brute-force quadrature oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

from .model import CampaignError


class DegenerateInput(CampaignError):
    """The input cannot support the requested decomposition."""


class EmptyInput(CampaignError):
    pass


class DegenerateMarginals(CampaignError):
    """Chance agreement is 1 while observed agreement is not; kappa undefined."""


# -- regularized incomplete beta ------------------------------------------------

_MAX_CF_ITERATIONS = 300
_CF_EPS = 1e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz method).

    Evaluates the fraction in

        I_x(a, b) = x^a (1-x)^b / (a B(a, b)) * [1/(1+ d_1/(1+ d_2/(1+ ...)))]

    with the standard even/odd coefficients

        d_{2m}   = m (b-m) x / ((a+2m-1)(a+2m))
        d_{2m+1} = -(a+m)(a+b+m) x / ((a+2m)(a+2m+1)).
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITERATIONS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise DegenerateInput(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise DegenerateInput("incomplete beta requires positive shape parameters")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        a * math.log(x)
        + b * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    front = math.exp(log_front)
    # Use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) where the fraction
    # converges fastest; the front factor is invariant under that swap.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f_value: float, df_between: int, df_within: int) -> float:
    """Upper-tail probability of the F distribution: P(F' >= f_value)."""
    if math.isinf(f_value):
        return 0.0
    if f_value <= 0.0:
        return 1.0
    x = df_within / (df_within + df_between * f_value)
    return incomplete_beta(df_within / 2.0, df_between / 2.0, x)


# -- one-way ANOVA ------------------------------------------------------------

@dataclass(frozen=True)
class AnovaResult:
    df_between: int
    df_within: int
    F: float
    p_value: float


def one_way_anova(samples: Sequence[Sequence[float]]) -> AnovaResult:
    """Classical between/within decomposition over k groups.

    F = MS_between / MS_within with df (k-1, N-k); the p-value is the upper
    tail of the F distribution. A zero within-group variance with nonzero
    between-group variance yields F = +inf (p = 0); identical constant groups
    yield F = 0 (p = 1).
    """
    if len(samples) < 2:
        raise DegenerateInput("need at least two groups")
    groups = [list(map(float, group)) for group in samples]
    if any(len(group) == 0 for group in groups):
        raise DegenerateInput("every group needs at least one observation")
    n_total = sum(len(group) for group in groups)
    k = len(groups)
    df_between = k - 1
    df_within = n_total - k
    if df_within < 1:
        raise DegenerateInput("no residual degrees of freedom")
    grand_mean = sum(sum(group) for group in groups) / n_total
    ss_between = sum(len(g) * (sum(g) / len(g) - grand_mean) ** 2 for g in groups)
    ss_within = sum(sum((x - sum(g) / len(g)) ** 2 for x in g) for g in groups)
    if ss_within == 0.0:
        if ss_between == 0.0:
            return AnovaResult(df_between, df_within, 0.0, 1.0)
        return AnovaResult(df_between, df_within, math.inf, 0.0)
    f_value = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(df_between, df_within, f_value, f_sf(f_value, df_between, df_within))


# -- Cohen's kappa ---------------------------------------------------------------

def cohen_kappa(
    labels_a: Mapping[Hashable, Hashable], labels_b: Mapping[Hashable, Hashable]
) -> float:
    """Two-coder agreement corrected for chance.

    kappa = (p_o - p_e) / (1 - p_e), where p_o is the observed fraction of
    agreeing items and p_e the chance agreement from the product of the two
    coders' marginal distributions. Both coders must label the same items.
    """
    if not labels_a or not labels_b:
        raise EmptyInput("both coders must provide labels")
    if set(labels_a) != set(labels_b):
        raise DegenerateInput("coders labeled different item sets")
    n = len(labels_a)
    observed = sum(1 for item in labels_a if labels_a[item] == labels_b[item]) / n
    categories = set(labels_a.values()) | set(labels_b.values())
    marginal_a = {c: 0 for c in categories}
    marginal_b = {c: 0 for c in categories}
    for item in labels_a:
        marginal_a[labels_a[item]] += 1
        marginal_b[labels_b[item]] += 1
    expected = sum(marginal_a[c] * marginal_b[c] for c in categories) / (n * n)
    if expected == 1.0:
        if observed == 1.0:
            return 1.0
        raise DegenerateMarginals("chance agreement is 1 but coders disagree")
    return (observed - expected) / (1.0 - expected)


# -- Mann-Whitney rank machinery ----------------------------------------------------

def average_ranks(values: Sequence[float]) -> list[float]:
    """Fractional ranking: 1-based ranks, ties share the mean of their ranks."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def mann_whitney_rho(values_a: Sequence[float], values_b: Sequence[float]) -> float:
    """Normalized Mann-Whitney statistic for group A over group B.

    Ranks the pooled values with tie averaging, computes
    U_A = R_A - n_A (n_A + 1) / 2, and returns rho = U_A / (n_A n_B) in
    [0, 1]. rho > 0.5 means A's values tend to exceed B's; identical pooled
    distributions give exactly 0.5. Invariant under any strictly monotone
    transform of the values, since only ranks enter.
    """
    n_a = len(values_a)
    n_b = len(values_b)
    if n_a == 0 or n_b == 0:
        raise DegenerateInput("both groups need at least one value")
    ranks = average_ranks(list(values_a) + list(values_b))
    rank_sum_a = sum(ranks[:n_a])
    u_a = rank_sum_a - n_a * (n_a + 1) / 2.0
    return u_a / (n_a * n_b)
