"""Judgement prefix extraction and valence mapping."""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from .ingest import RawComment, Thread


class JudgementLabel(str, enum.Enum):
    NTA = "NTA"
    YTA = "YTA"
    NAH = "NAH"
    ESH = "ESH"
    INFO = "INFO"


class Valence(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    @classmethod
    def parse(cls, text: str) -> "Valence":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown valence {text!r}") from None

    def flipped(self) -> "Valence":
        return Valence.NEGATIVE if self is Valence.POSITIVE else Valence.POSITIVE


# fixed class order used by models and reports
CLASS_ORDER = (Valence.POSITIVE, Valence.NEGATIVE)

_LEADING_MARKERS = " \t\r\n\f\v>*[("
_PREFIX_RE = re.compile(r"(NTA|YTA|NAH|ESH|INFO)(?![A-Za-z0-9_])", re.IGNORECASE)


def extract_label(text: str) -> Optional[JudgementLabel]:
    """Return the judgement prefix a comment opens with, if any.

    Leading whitespace, quote markers, asterisks and opening brackets are
    skipped; the label must then start the text and end at a word boundary.

    >>> extract_label("**ESH.** Both of you behaved badly")
    <JudgementLabel.ESH: 'ESH'>
    >>> extract_label("you are definitely NTA") is None
    True
    """
    stripped = text.lstrip(_LEADING_MARKERS)
    m = _PREFIX_RE.match(stripped)
    if m is None:
        return None
    return JudgementLabel(m.group(1).upper())


_PREFIX_SPAN_RE = re.compile(
    r"^[\s>*\[(]*(?:NTA|YTA|NAH|ESH|INFO)(?![A-Za-z0-9_])[\s*\])\.,:;!\-\u2014\u2013/]*", re.IGNORECASE
)


def strip_label_prefix(text: str) -> str:
    """Remove the opening judgement label (and its markup) from a comment.

    Used when training on labeled comments so a model cannot key on the
    label token itself.
    """
    return _PREFIX_SPAN_RE.sub("", text, count=1)


def label_valence(label: JudgementLabel) -> Valence:
    if label in (JudgementLabel.NTA, JudgementLabel.NAH):
        return Valence.POSITIVE
    if label in (JudgementLabel.YTA, JudgementLabel.ESH):
        return Valence.NEGATIVE
    raise ValueError("INFO carries no valence; filter it out first")


@dataclass(frozen=True)
class LabeledComment:
    comment: RawComment
    label: JudgementLabel
    valence: Valence
    post_id: str

    @property
    def body(self) -> str:
        return self.comment.body

    def to_record(self) -> dict:
        c = self.comment
        return {
            "post_id": self.post_id,
            "comment_id": c.id,
            "label": self.label.value,
            "valence": self.valence.value,
            "body": c.body,
            "author": c.author,
            "score": c.score,
            "created_utc": c.created_utc,
        }

    @classmethod
    def from_record(cls, record: dict) -> "LabeledComment":
        post_id = str(record["post_id"])
        comment = RawComment(
            id=str(record["comment_id"]),
            link_id=post_id,
            parent_id=post_id,
            body=str(record["body"]),
            score=int(record.get("score", 0)),
            created_utc=int(record.get("created_utc", 1)),
            author=str(record.get("author", "[deleted]")),
        )
        label = JudgementLabel(record["label"])
        valence = Valence.parse(record["valence"])
        if valence is not label_valence(label):
            raise ValueError(f"valence {valence.value} disagrees with label {label.value}")
        return cls(comment=comment, label=label, valence=valence, post_id=post_id)


@dataclass
class LabelHistogram:
    counts: Counter
    dropped_no_prefix: int = 0
    dropped_info: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def positive(self) -> int:
        return self.counts[JudgementLabel.NTA] + self.counts[JudgementLabel.NAH]

    @property
    def negative(self) -> int:
        return self.counts[JudgementLabel.YTA] + self.counts[JudgementLabel.ESH]

    def as_dict(self) -> dict:
        out = {lab.value: self.counts[lab] for lab in JudgementLabel if lab is not JudgementLabel.INFO}
        out.update(
            total=self.total,
            positive=self.positive,
            negative=self.negative,
            dropped_no_prefix=self.dropped_no_prefix,
            dropped_info=self.dropped_info,
        )
        return out


def build_labeled_corpus(threads: Iterable[Thread]) -> tuple[list[LabeledComment], LabelHistogram]:
    """Label the top-level comments of every thread by their prefix.

    Replies are never scanned. Unprefixed and INFO comments are dropped and
    counted.
    """
    out: list[LabeledComment] = []
    hist = LabelHistogram(counts=Counter())
    for thread in threads:
        for comment in thread.top_level():
            label = extract_label(comment.body)
            if label is None:
                hist.dropped_no_prefix += 1
                continue
            if label is JudgementLabel.INFO:
                hist.dropped_info += 1
                continue
            hist.counts[label] += 1
            out.append(LabeledComment(comment, label, label_valence(label), thread.post.id))
    return out, hist
