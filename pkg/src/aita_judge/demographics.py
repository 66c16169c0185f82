"""Self-reported gender/age tags in post titles and the gender and age association analyses."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .analytics import Classify, assign_post_valence
from .classifiers import LogRegConfig, LogRegFit, logreg_fit
from .ingest import Thread
from .labels import Valence
from .stats import Chi2Result, chi_square_phi, odds_ratio_percent

MIN_PARSE_AGE = 13
MAX_PARSE_AGE = 120
MIN_DATASET_AGE = 18

# [M27], (27M), M 27, 27f ... bracket optional on both sides
_TAG_RE = re.compile(
    r"(?<![A-Za-z0-9])[\[(]?\s*"
    r"(?:(?P<g1>[MFmf])\s?(?P<a1>\d{1,3})|(?P<a2>\d{1,3})\s?(?P<g2>[MFmf]))"
    r"(?![A-Za-z0-9])\s*[\])]?"
)
_FIRST_PERSON = {"i", "me", "my", "i'm", "im", "myself"}
_WORD_RE = re.compile(r"[A-Za-z']+")


class Attribution(str, enum.Enum):
    FIRST_TAG = "first-tag"
    FIRST_PERSON_TAG = "first-person-tag"


@dataclass(frozen=True)
class DemoTag:
    gender: str  # "M" or "F"
    age: int
    start: int = 0
    end: int = 0


def _iter_tags(title: str):
    for m in _TAG_RE.finditer(title):
        gender = (m.group("g1") or m.group("g2")).upper()
        age = int(m.group("a1") or m.group("a2"))
        if MIN_PARSE_AGE <= age <= MAX_PARSE_AGE:
            yield DemoTag(gender, age, m.start(), m.end())


def parse_demo_tag(title: str) -> Optional[DemoTag]:
    """First gender/age tag in the title, scanning left to right.

    >>> parse_demo_tag("I (27M) need advice")
    DemoTag(gender='M', age=27, start=2, end=7)
    """
    return next(_iter_tags(title), None)


def poster_tag(title: str, attribution: Attribution = Attribution.FIRST_PERSON_TAG) -> Optional[DemoTag]:
    """Pick the tag that describes the poster.

    Under first-person attribution the first tag directly preceded by a
    first-person word ("I [M27]", "My (27M) girlfriend") wins; otherwise the
    first tag does.
    """
    tags = list(_iter_tags(title))
    if not tags:
        return None
    if attribution is Attribution.FIRST_PERSON_TAG:
        for tag in tags:
            words = _WORD_RE.findall(title[:tag.start])
            if words and words[-1].lower() in _FIRST_PERSON:
                return tag
    return tags[0]


@dataclass(frozen=True)
class DemographicRecord:
    post_id: str
    gender_code: int  # 0 female, 1 male
    age: int
    valence: Valence


@dataclass
class DemoStats:
    kept: int = 0
    no_tag: int = 0
    underage: int = 0
    unjudged: int = 0


def build_demo_dataset(
    threads: Iterable[Thread],
    classify: Classify,
    attribution: Attribution = Attribution.FIRST_PERSON_TAG,
) -> tuple[list[DemographicRecord], DemoStats]:
    stats = DemoStats()
    records = []
    for thread in threads:
        tag = poster_tag(thread.post.title, attribution)
        if tag is None:
            stats.no_tag += 1
            continue
        if tag.age < MIN_DATASET_AGE:
            stats.underage += 1
            continue
        pj = assign_post_valence(thread, classify)
        if pj is None:
            stats.unjudged += 1
            continue
        records.append(DemographicRecord(thread.post.id, 1 if tag.gender == "M" else 0, tag.age, pj.valence))
        stats.kept += 1
    return records, stats


def demo_contingency(records: Sequence[DemographicRecord]) -> np.ndarray:
    """Counts as [[male pos, male neg], [female pos, female neg]]."""
    if not records:
        raise ValueError("no demographic records")
    table = np.zeros((2, 2), dtype=np.int64)
    for r in records:
        row = 0 if r.gender_code == 1 else 1
        col = 0 if r.valence is Valence.POSITIVE else 1
        table[row, col] += 1
    return table


def demo_chi_square(records: Sequence[DemographicRecord]) -> tuple[np.ndarray, Chi2Result]:
    table = demo_contingency(records)
    return table, chi_square_phi(table)


@dataclass
class DemoRegression:
    fit: LogRegFit
    names: tuple[str, ...] = ("(Constant)", "Gender", "Age")

    @property
    def ci(self) -> np.ndarray:
        return self.fit.confidence_intervals(1.96)

    @property
    def odds_percent(self) -> dict[str, float]:
        return {name: odds_ratio_percent(c) for name, c in zip(self.names[1:], self.fit.weights)}

    def rows(self) -> list[dict]:
        ci = self.ci
        pv = self.fit.p_values()
        odds = self.odds_percent
        out = []
        for i, name in enumerate(self.names):
            out.append(
                {
                    "variable": name,
                    "coefficient": float(self.fit.coefficients[i]),
                    "se": float(self.fit.standard_errors[i]),
                    "p_value": float(pv[i]),
                    "ci_low": float(ci[i, 0]),
                    "ci_high": float(ci[i, 1]),
                    "odds_percent": odds.get(name),
                }
            )
        return out


def demo_regression(records: Sequence[DemographicRecord], config: LogRegConfig = LogRegConfig()) -> DemoRegression:
    """Logit of a NEGATIVE judgement on gender code and age."""
    if len(records) < 3:
        raise ValueError("need at least 3 records")
    genders = {r.gender_code for r in records}
    if genders != {0, 1}:
        raise ValueError("both genders must be present")
    X = np.array([[r.gender_code, r.age] for r in records], dtype=float)
    y = np.array([1.0 if r.valence is Valence.NEGATIVE else 0.0 for r in records])
    fit = logreg_fit(X, y, config)
    if not np.isfinite(fit.coefficients).all():
        raise ValueError(f"degenerate design: {fit.diagnostic}")
    return DemoRegression(fit)
