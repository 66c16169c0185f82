"""Nonparametric tests, binomial tails, Lorenz/Gini, chi-square and odds ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EXACT_MW_MAX_N = 12


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def chi2_sf_1dof(x: float) -> float:
    return math.erfc(math.sqrt(max(x, 0.0) / 2.0))


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ascending ranks with ties given the mean rank of their block."""
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a), dtype=float)
    sorted_a = a[order]
    i = 0
    n = len(a)
    while i < n:
        j = i
        while j + 1 < n and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class MWResult:
    U: float
    z: float
    p_two_tailed: float
    effect_rank_biserial: float
    effect_cles: float
    n1: int
    n2: int
    exact: bool


def _exact_u_distribution(doubled_ranks: np.ndarray, n1: int) -> dict[int, int]:
    """Count size-n1 subsets by their doubled rank sum (subset-sum DP)."""
    # table[k] maps doubled rank sum -> number of k-subsets
    table: list[dict[int, int]] = [dict() for _ in range(n1 + 1)]
    table[0][0] = 1
    for r in doubled_ranks:
        r = int(r)
        for k in range(n1, 0, -1):
            prev = table[k - 1]
            if not prev:
                continue
            cur = table[k]
            for s, cnt in prev.items():
                cur[s + r] = cur.get(s + r, 0) + cnt
    return table[n1]


def mann_whitney(xs: Sequence[float], ys: Sequence[float]) -> MWResult:
    """Two-sided Mann-Whitney U test of xs against ys.

    ``U`` is U_x, the number of (x, y) pairs with x > y plus half the ties.
    The permutation distribution is enumerated exactly when n1 + n2 <= 12;
    otherwise a tie-corrected normal approximation with continuity
    correction 0.5 is used. ``z`` is always the normal-approximation value.
    """
    n1, n2 = len(xs), len(ys)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    pooled = list(xs) + list(ys)
    ranks = fractional_ranks(pooled)
    u_x = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    mean_u = n1 * n2 / 2.0

    _, tie_counts = np.unique(np.asarray(pooled, dtype=float), return_counts=True)
    tie_term = float(((tie_counts ** 3) - tie_counts).sum())
    var_u = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var_u > 0:
        z = max(abs(u_x - mean_u) - 0.5, 0.0) / math.sqrt(var_u)
        z = math.copysign(z, u_x - mean_u)
    else:
        z = 0.0

    if n <= EXACT_MW_MAX_N:
        doubled = np.rint(ranks * 2).astype(int)
        dist = _exact_u_distribution(doubled, n1)
        total = sum(dist.values())
        # doubled U = doubled rank sum - n1(n1+1)
        observed = int(round(2 * u_x))
        offset = n1 * (n1 + 1)
        lower = sum(c for s, c in dist.items() if s - offset <= observed)
        upper = sum(c for s, c in dist.items() if s - offset >= observed)
        p = min(1.0, 2.0 * min(lower, upper) / total)
        exact = True
    else:
        p = min(1.0, 2.0 * normal_sf(abs(z))) if var_u > 0 else 1.0
        exact = False

    cles = u_x / (n1 * n2)
    return MWResult(
        U=u_x,
        z=z,
        p_two_tailed=p,
        effect_rank_biserial=2.0 * cles - 1.0,
        effect_cles=cles,
        n1=n1,
        n2=n2,
        exact=exact,
    )


def bonferroni(pvals: Sequence[float], m: int | None = None) -> list[float]:
    m = len(pvals) if m is None else m
    return [min(1.0, m * p) for p in pvals]


def _log_binom_pmf(k: np.ndarray, n: int, p0: float) -> np.ndarray:
    lgamma = np.vectorize(math.lgamma, otypes=[float])
    return (
        math.lgamma(n + 1)
        - lgamma(k + 1.0)
        - lgamma(n - k + 1.0)
        + k * math.log(p0)
        + (n - k) * math.log1p(-p0)
    )


def binomial_test_one_sided(k_neg: int, n: int, p0: float) -> float:
    """Upper-tail binomial p-value P(X >= k_neg) for X ~ Binomial(n, p0).

    Terms are summed in log space so large n does not underflow early.
    """
    if not 0 <= k_neg <= n:
        raise ValueError("need 0 <= k_neg <= n")
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0, 1)")
    if k_neg == 0:
        return 1.0
    ks = np.arange(k_neg, n + 1, dtype=float)
    logs = _log_binom_pmf(ks, n, p0)
    top = logs.max()
    p = math.exp(top) * math.fsum(np.exp(logs - top))
    return min(1.0, p)


@dataclass(frozen=True)
class LorenzResult:
    population_share: np.ndarray
    quantity_share: np.ndarray
    gini: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.population_share.tolist(), self.quantity_share.tolist()))


def gini_pairwise(quantities: Sequence[float]) -> float:
    x = np.asarray(quantities, dtype=float)
    n = len(x)
    diffs = np.abs(x[:, None] - x[None, :]).sum()
    return float(diffs / (2.0 * n * n * x.mean()))


def lorenz_gini(quantities: Sequence[float], check_tol: float = 1e-12) -> LorenzResult:
    """Lorenz curve points and Gini coefficient of nonnegative quantities.

    The Gini value comes from the trapezoidal area under the curve and is
    cross-checked against the mean pairwise absolute difference form.
    """
    x = np.sort(np.asarray(quantities, dtype=float))
    if x.size == 0:
        raise ValueError("need at least one quantity")
    if (x < 0).any():
        raise ValueError("quantities must be nonnegative")
    total = x.sum()
    if total <= 0:
        raise ValueError("at least one quantity must be positive")
    n = x.size
    pop = np.arange(n + 1, dtype=float) / n
    share = np.concatenate([[0.0], np.cumsum(x) / total])
    share[-1] = 1.0
    area = float(((share[1:] + share[:-1]) / 2.0).sum() / n)
    gini = 1.0 - 2.0 * area
    if n <= 2000:
        other = gini_pairwise(x)
        if abs(other - gini) > check_tol:
            raise ArithmeticError(f"gini cross-check failed: {gini} vs {other}")
    return LorenzResult(pop, share, gini)


@dataclass(frozen=True)
class Chi2Result:
    chi2: float
    dof: int
    p: float
    phi: float
    n: int


def chi_square_phi(table) -> Chi2Result:
    """Uncorrected chi-square test of independence and phi for a 2x2 table."""
    t = np.asarray(table, dtype=np.int64)
    if t.shape != (2, 2):
        raise ValueError("expected a 2x2 table")
    if (t < 0).any():
        raise ValueError("counts must be nonnegative")
    a, b, c, d = (int(v) for v in t.ravel())
    margins = [(a + b), (c + d), (a + c), (b + d)]
    if min(margins) == 0:
        raise ValueError("every row and column marginal must be positive")
    n = a + b + c + d
    # exact integer numerator before the single float division
    chi2 = n * (a * d - b * c) ** 2 / (margins[0] * margins[1] * margins[2] * margins[3])
    return Chi2Result(chi2=float(chi2), dof=1, p=chi2_sf_1dof(chi2), phi=math.sqrt(chi2 / n), n=n)


def odds_ratio_percent(coefficient: float) -> float:
    """Percent change in odds for a unit change of a logit coefficient."""
    if not math.isfinite(coefficient):
        raise ValueError("coefficient must be finite")
    return 100.0 * math.expm1(coefficient)
