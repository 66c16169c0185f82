"""Rank-turbulence divergence between two term distributions.

Per-term divergence is ``|r1**-alpha - r2**-alpha| ** (1 / (alpha + 1))``
over tie-averaged ranks. A term missing from one system takes that system's
exclusive-type rank ``N_other + (N_exclusive + 1) / 2``. Contributions are
normalized by the summed divergence the two systems would produce if they
shared no types, so the total lies in [0, 1].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping

from .labels import Valence, strip_label_prefix
from .text import TermDistribution, tokenize

DEFAULT_ALPHA = 1.0 / 3.0


@dataclass(frozen=True)
class RankedDistribution:
    counts: Mapping[str, int]
    ranks: Mapping[str, float]

    @property
    def n_types(self) -> int:
        return len(self.ranks)


def rank_terms(dist: Mapping[str, int]) -> RankedDistribution:
    """Descending-count ranks starting at 1; tied counts share their mean rank."""
    if not dist:
        raise ValueError("cannot rank an empty distribution")
    ordered = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
    ranks: dict[str, float] = {}
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1][1] == ordered[i][1]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for term, _ in ordered[i:j + 1]:
            ranks[term] = shared
        i = j + 1
    return RankedDistribution(counts=dict(dist), ranks=ranks)


def _raw(r1: float, r2: float, alpha: float) -> float:
    if r1 == r2:
        return 0.0
    return abs(r1 ** -alpha - r2 ** -alpha) ** (1.0 / (alpha + 1.0))


@dataclass(frozen=True)
class RTDResult:
    alpha: float
    contributions: dict[str, float]
    ranks_1: dict[str, float]
    ranks_2: dict[str, float]
    normalization: float

    @property
    def total(self) -> float:
        return math.fsum(abs(v) for v in self.contributions.values())


def _disjoint_normalization(rd1: RankedDistribution, rd2: RankedDistribution, alpha: float) -> float:
    n1, n2 = rd1.n_types, rd2.n_types
    # in a disjoint pairing every type of one system is exclusive in the other
    other_for_1 = n2 + (n1 + 1) / 2.0
    other_for_2 = n1 + (n2 + 1) / 2.0
    s = math.fsum(_raw(r, other_for_1, alpha) for r in rd1.ranks.values())
    s += math.fsum(_raw(other_for_2, r, alpha) for r in rd2.ranks.values())
    return s


def rtd_contributions(
    d1: Mapping[str, int], d2: Mapping[str, int], alpha: float = DEFAULT_ALPHA
) -> RTDResult:
    """Signed per-term rank-turbulence contributions (positive = more salient in d1)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rd1, rd2 = rank_terms(d1), rank_terms(d2)
    n1, n2 = rd1.n_types, rd2.n_types
    only_1 = sum(1 for t in rd1.ranks if t not in rd2.ranks)
    only_2 = sum(1 for t in rd2.ranks if t not in rd1.ranks)
    missing_in_1 = n1 + (only_2 + 1) / 2.0
    missing_in_2 = n2 + (only_1 + 1) / 2.0

    norm = _disjoint_normalization(rd1, rd2, alpha)
    ranks_1: dict[str, float] = {}
    ranks_2: dict[str, float] = {}
    contributions: dict[str, float] = {}
    for term in sorted(set(rd1.ranks) | set(rd2.ranks)):
        r1 = rd1.ranks.get(term, missing_in_1)
        r2 = rd2.ranks.get(term, missing_in_2)
        ranks_1[term] = r1
        ranks_2[term] = r2
        raw = _raw(r1, r2, alpha)
        contributions[term] = (raw if r1 < r2 else -raw) / norm if raw else 0.0
    return RTDResult(alpha, contributions, ranks_1, ranks_2, norm)


def top_divergent_terms(result: RTDResult, k: int, side: int = 1) -> list[tuple[str, float]]:
    """Top-k terms by |contribution| on one side (1 = corpus 1, 2 = corpus 2)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if side not in (1, 2):
        raise ValueError("side must be 1 or 2")
    sign = 1.0 if side == 1 else -1.0
    hits = [(t, c) for t, c in result.contributions.items() if c * sign > 0]
    hits.sort(key=lambda tc: (-abs(tc[1]), tc[0]))
    return hits[:k]


def write_rtd_csv(result: RTDResult, path, labels: tuple[str, str] = ("positive", "negative")) -> None:
    """term, rank_pos, rank_neg, contribution, side; sorted by |contribution|."""
    rows = sorted(result.contributions.items(), key=lambda tc: (-abs(tc[1]), tc[0]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", f"rank_{labels[0][:3]}", f"rank_{labels[1][:3]}", "contribution", "side"])
        for term, c in rows:
            side = labels[0] if c > 0 else labels[1] if c < 0 else "none"
            w.writerow([term, repr(result.ranks_1[term]), repr(result.ranks_2[term]), repr(c), side])


def class_distributions(corpus, strip_prefix: bool = False) -> tuple[TermDistribution, TermDistribution]:
    """Positive-class and negative-class 1-gram distributions of a labeled corpus."""
    pos, neg = TermDistribution(), TermDistribution()
    for lc in corpus:
        text = strip_label_prefix(lc.body) if strip_prefix else lc.body
        (pos if lc.valence is Valence.POSITIVE else neg).update(tokenize(text))
    return pos, neg
