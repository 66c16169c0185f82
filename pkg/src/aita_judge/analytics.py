"""Post- and user-level valence assignment plus the popularity and inequality analyses.

A ``classify`` argument is any callable mapping a comment to a Valence, or
to None when no judgement is available (e.g. a missing external prediction).
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .ingest import RawComment, Thread, is_deleted
from .labels import Valence
from .stats import MWResult, binomial_test_one_sided, bonferroni, mann_whitney

Classify = Callable[[RawComment], Optional[Valence]]

SIGNIFICANCE = 0.05
POPULARITY_CUMULATION = "ratio among posts with score >= threshold"
NEGATIVITY_DENOMINATOR = "per-subreddit comments by tallied users"


def top_scoring(comments: Iterable[RawComment]) -> Optional[RawComment]:
    """Highest score; ties go to the earliest created_utc, then the smallest id."""
    return min(comments, key=lambda c: (-c.score, c.created_utc, c.id), default=None)


@dataclass(frozen=True)
class PostJudgement:
    post_id: str
    subreddit: str
    post_score: int
    valence: Valence
    judging_comment_id: str
    author: str = ""


def assign_post_valence(thread: Thread, classify: Classify) -> Optional[PostJudgement]:
    """Judge a post by classifying its highest-scoring top-level comment.

    Returns None when the thread has no top-level comment or the classifier
    has no answer for the chosen comment.
    """
    judge = top_scoring(thread.top_level())
    if judge is None:
        return None
    valence = classify(judge)
    if valence is None:
        return None
    post = thread.post
    return PostJudgement(post.id, post.subreddit, post.score, valence, judge.id, post.author)


@dataclass
class AssignStats:
    judged: int = 0
    no_top_level: int = 0
    unclassified: int = 0


def assign_post_valences(threads: Iterable[Thread], classify: Classify) -> tuple[list[PostJudgement], AssignStats]:
    stats = AssignStats()
    out = []
    for thread in threads:
        if not thread.top_level():
            stats.no_top_level += 1
            continue
        pj = assign_post_valence(thread, classify)
        if pj is None:
            stats.unclassified += 1
            continue
        stats.judged += 1
        out.append(pj)
    return out, stats


def assign_user_judgements(thread: Thread, classify: Classify) -> list[tuple[str, Valence]]:
    """(author, valence) pairs for the post author and every replied-to commenter.

    Each comment with at least one reply is judged by its highest-scoring
    reply. Deleted authors are skipped.
    """
    out: list[tuple[str, Valence]] = []
    pj = assign_post_valence(thread, classify)
    if pj is not None and not is_deleted(thread.post.author):
        out.append((thread.post.author, pj.valence))
    for comment in sorted(thread.comments.values(), key=lambda c: (c.created_utc, c.id)):
        if is_deleted(comment.author):
            continue
        reply = top_scoring(thread.replies(comment.id))
        if reply is None:
            continue
        valence = classify(reply)
        if valence is not None:
            out.append((comment.author, valence))
    return out


def count_authored_comments(threads: Iterable[Thread]) -> dict[str, Counter]:
    """user -> Counter(subreddit -> comments authored), deleted authors skipped."""
    out: dict[str, Counter] = defaultdict(Counter)
    for thread in threads:
        for c in thread.comments.values():
            if not is_deleted(c.author):
                out[c.author][thread.subreddit] += 1
    return dict(out)


@dataclass
class UserTally:
    user: str
    n_pos: int
    n_neg: int
    negativity_p: float = 1.0
    comments_by_subreddit: dict[str, int] = field(default_factory=dict)

    @property
    def n_judged(self) -> int:
        return self.n_pos + self.n_neg

    @property
    def n_comments_authored(self) -> int:
        return sum(self.comments_by_subreddit.values())


def tally_users(
    judgements: Iterable[tuple[str, Valence]],
    min_n: int = 50,
    p0: Optional[float] = None,
    comment_counts: Optional[Mapping[str, Mapping[str, int]]] = None,
) -> tuple[list[UserTally], float]:
    """Aggregate judgements per user and attach the one-sided negativity p-value.

    Users judged fewer than ``min_n`` times are dropped. When ``p0`` is not
    given it is the NEGATIVE fraction among the retained judgements. Returns
    the tallies sorted by user and the null rate actually used.
    """
    pos: Counter = Counter()
    neg: Counter = Counter()
    for author, valence in judgements:
        if is_deleted(author):
            continue
        (neg if valence is Valence.NEGATIVE else pos)[author] += 1
    users = sorted(u for u in set(pos) | set(neg) if pos[u] + neg[u] >= min_n)
    if p0 is None:
        total = sum(pos[u] + neg[u] for u in users)
        p0 = sum(neg[u] for u in users) / total if total else 0.5
    comment_counts = comment_counts or {}
    tallies = []
    for u in users:
        n = pos[u] + neg[u]
        if 0.0 < p0 < 1.0:
            p = binomial_test_one_sided(neg[u], n, p0)
        else:
            # degenerate null: every judgement is certain under it
            p = 1.0 if (p0 >= 1.0 or neg[u] == 0) else 0.0
        tallies.append(UserTally(u, pos[u], neg[u], p, dict(sorted(comment_counts.get(u, {}).items()))))
    return tallies, p0


@dataclass(frozen=True)
class CumulativeCurve:
    points: tuple[tuple[float, float], ...]
    convention: str = ""

    @property
    def thresholds(self) -> list[float]:
        return [t for t, _ in self.points]

    @property
    def ratios(self) -> list[float]:
        return [r for _, r in self.points]

    def at(self, threshold: float) -> float:
        for t, r in self.points:
            if t == threshold:
                return r
        raise KeyError(threshold)


def negativity_comment_fraction(
    tallies: Sequence[UserTally], thresholds: Sequence[float]
) -> dict[str, CumulativeCurve]:
    """Per subreddit: share of tallied users' comments written by users with p <= t."""
    grid = sorted(set(float(t) for t in thresholds))
    subreddits = sorted({s for t in tallies for s in t.comments_by_subreddit})
    curves = {}
    for sub in subreddits:
        holders = [(t.negativity_p, t.comments_by_subreddit.get(sub, 0)) for t in tallies]
        denom = sum(n for _, n in holders)
        if denom == 0:
            continue
        pts = tuple((t, sum(n for p, n in holders if p <= t) / denom) for t in grid)
        curves[sub] = CumulativeCurve(pts, NEGATIVITY_DENOMINATOR)
    return curves


def cumulative_positive_ratio(judgements: Sequence[PostJudgement]) -> CumulativeCurve:
    """Share of POSITIVE judgements among posts scoring at least each distinct score."""
    if not judgements:
        raise ValueError("need at least one judgement")
    by_score = sorted(judgements, key=lambda j: j.post_score)
    scores = sorted({j.post_score for j in by_score})
    pts = []
    # sweep from the highest score down, accumulating the >= s population
    n_total = n_pos = 0
    i = len(by_score) - 1
    for s in reversed(scores):
        while i >= 0 and by_score[i].post_score >= s:
            n_total += 1
            n_pos += by_score[i].valence is Valence.POSITIVE
            i -= 1
        pts.append((float(s), n_pos / n_total))
    return CumulativeCurve(tuple(reversed(pts)), POPULARITY_CUMULATION)


def group_by_subreddit(judgements: Iterable[PostJudgement]) -> dict[str, list[PostJudgement]]:
    out: dict[str, list[PostJudgement]] = defaultdict(list)
    for j in judgements:
        out[j.subreddit].append(j)
    return dict(sorted(out.items()))


@dataclass
class PopularityResult:
    tests: dict[str, MWResult]
    adjusted_p: dict[str, float]
    excluded: list[str]

    @property
    def m(self) -> int:
        return len(self.tests)


def popularity_significance(by_subreddit: Mapping[str, Sequence[PostJudgement]]) -> PopularityResult:
    """Mann-Whitney of POSITIVE-judged vs NEGATIVE-judged post scores per subreddit.

    Subreddits missing either group are excluded from the Bonferroni family.
    """
    tests: dict[str, MWResult] = {}
    excluded = []
    for sub in sorted(by_subreddit):
        pos = [j.post_score for j in by_subreddit[sub] if j.valence is Valence.POSITIVE]
        neg = [j.post_score for j in by_subreddit[sub] if j.valence is Valence.NEGATIVE]
        if not pos or not neg:
            excluded.append(sub)
            continue
        tests[sub] = mann_whitney(pos, neg)
    subs = list(tests)
    adjusted = bonferroni([tests[s].p_two_tailed for s in subs])
    return PopularityResult(tests, dict(zip(subs, adjusted)), excluded)
