"""Tokenization, vocabularies, count vectors and 1-gram term distributions."""

from __future__ import annotations

import re
from collections import Counter
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character.

    >>> tokenize("NTA—she's 27")
    ['nta', 'she', 's', '27']
    """
    return _TOKEN_RE.findall(text.lower())


class TermDistribution(Counter):
    """Term -> occurrence count. Zero and negative counts are never stored."""

    @property
    def total_count(self) -> int:
        return sum(self.values())

    def merge(self, other: "TermDistribution") -> "TermDistribution":
        out = TermDistribution(self)
        out.update(other)
        return out

    def rows(self) -> list[tuple[str, int]]:
        """(term, count) rows, most frequent first, for two-column CSV export."""
        return sorted(self.items(), key=lambda kv: (-kv[1], kv[0]))


def term_distribution(documents: Iterable[Sequence[str]]) -> TermDistribution:
    dist = TermDistribution()
    for tokens in documents:
        dist.update(tokens)
    return dist


class Vocabulary:
    """Frozen term -> index map with indices 0..V-1."""

    def __init__(self, terms: Iterable[str]):
        index: dict[str, int] = {}
        for term in terms:
            if term not in index:
                index[term] = len(index)
        self._index = MappingProxyType(index)
        self._terms = tuple(index)

    @classmethod
    def from_documents(cls, documents: Iterable[Sequence[str]]) -> "Vocabulary":
        seen: set[str] = set()
        for tokens in documents:
            seen.update(tokens)
        return cls(sorted(seen))

    @property
    def index(self) -> Mapping[str, int]:
        return self._index

    @property
    def terms(self) -> tuple[str, ...]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __contains__(self, term: object) -> bool:
        return term in self._index

    def get(self, term: str, default=None):
        return self._index.get(term, default)


def count_vector(tokens: Iterable[str], vocab: Vocabulary) -> np.ndarray:
    vec = np.zeros(len(vocab), dtype=np.int64)
    for tok in tokens:
        i = vocab.get(tok)
        if i is not None:
            vec[i] += 1
    return vec
