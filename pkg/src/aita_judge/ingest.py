"""Pushshift-style dump parsing, comment-tree reconstruction and corpus filters."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import BinaryIO, Iterable, Iterator, Optional

log = logging.getLogger(__name__)

DELETED_AUTHORS = frozenset({"[deleted]", "[removed]", ""})
_ID_PREFIXES = ("t1_", "t3_")


class IngestionError(RuntimeError):
    """Raised when a dump stream cannot be read."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def strip_prefix(identifier: str) -> str:
    """Drop a Reddit kind prefix such as ``t3_`` or ``t1_``."""
    for prefix in _ID_PREFIXES:
        if identifier.startswith(prefix):
            return identifier[len(prefix):]
    return identifier


def is_deleted(author: Optional[str]) -> bool:
    return author is None or author in DELETED_AUTHORS


@dataclass(frozen=True)
class RawPost:
    id: str
    subreddit: str
    title: str
    selftext: str
    score: int
    created_utc: int
    author: str

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RawComment:
    id: str
    link_id: str
    parent_id: str
    body: str
    score: int
    created_utc: int
    author: str

    @property
    def is_top_level(self) -> bool:
        return self.parent_id == self.link_id

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class ParseStats:
    parsed: int = 0
    malformed: int = 0
    missing_score: int = 0
    bytes_read: int = 0


class _Malformed(ValueError):
    pass


def _require_str(record: dict, key: str) -> str:
    value = record.get(key)
    if value is None:
        raise _Malformed(f"missing {key}")
    value = str(value)
    if not value:
        raise _Malformed(f"empty {key}")
    return value


def _as_int(value, key: str) -> int:
    try:
        return int(float(value))
    except (TypeError, ValueError):
        raise _Malformed(f"bad {key}: {value!r}") from None


def _score(record: dict, stats: ParseStats) -> int:
    if record.get("score") is None:
        stats.missing_score += 1
        return 0
    return _as_int(record["score"], "score")


def _timestamp(record: dict) -> int:
    if record.get("created_utc") is None:
        raise _Malformed("missing created_utc")
    ts = _as_int(record["created_utc"], "created_utc")
    if ts <= 0:
        raise _Malformed("created_utc must be positive")
    return ts


def _post_from_record(record: dict, stats: ParseStats) -> RawPost:
    return RawPost(
        id=strip_prefix(_require_str(record, "id")),
        subreddit=_require_str(record, "subreddit"),
        title=str(record.get("title") or ""),
        selftext=str(record.get("selftext") or ""),
        score=_score(record, stats),
        created_utc=_timestamp(record),
        author=str(record.get("author") or "[deleted]"),
    )


def _comment_from_record(record: dict, stats: ParseStats) -> RawComment:
    if record.get("body") is None:
        raise _Malformed("missing body")
    return RawComment(
        id=strip_prefix(_require_str(record, "id")),
        link_id=strip_prefix(_require_str(record, "link_id")),
        parent_id=strip_prefix(_require_str(record, "parent_id")),
        body=str(record["body"]),
        score=_score(record, stats),
        created_utc=_timestamp(record),
        author=str(record.get("author") or "[deleted]"),
    )


def _iter_records(stream: BinaryIO, build, stats: ParseStats) -> Iterator:
    offset = 0
    lineno = 0
    while True:
        try:
            raw = stream.readline()
        except OSError as exc:
            raise IngestionError(f"read failed: {exc}", offset) from exc
        if not raw:
            break
        lineno += 1
        offset += len(raw)
        stats.bytes_read = offset
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
        if not raw.strip():
            continue
        try:
            record = json.loads(raw.decode("utf-8"))
            if not isinstance(record, dict):
                raise _Malformed("record is not an object")
            item = build(record, stats)
        except (UnicodeDecodeError, json.JSONDecodeError, _Malformed) as exc:
            stats.malformed += 1
            log.debug("skipping malformed line %d: %s", lineno, exc)
            continue
        stats.parsed += 1
        yield item


def parse_posts(stream: BinaryIO, stats: Optional[ParseStats] = None) -> Iterator[RawPost]:
    """Yield one RawPost per well-formed line of a posts dump.

    Malformed lines are skipped and counted in ``stats``; a missing score
    becomes 0 and bumps ``stats.missing_score``.
    """
    return _iter_records(stream, _post_from_record, stats if stats is not None else ParseStats())


def parse_comments(stream: BinaryIO, stats: Optional[ParseStats] = None) -> Iterator[RawComment]:
    """Comment-dump counterpart of :func:`parse_posts`."""
    return _iter_records(stream, _comment_from_record, stats if stats is not None else ParseStats())


@dataclass
class Thread:
    """A post with its comments arranged as a forest.

    ``roots`` holds top-level comments followed by orphans (comments whose
    parent is missing or that sit on a parent cycle); ``orphans`` flags the
    latter.
    """

    post: RawPost
    comments: dict[str, RawComment] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)
    roots: list[str] = field(default_factory=list)
    orphans: set[str] = field(default_factory=set)

    @property
    def comment_count(self) -> int:
        return len(self.comments)

    @property
    def subreddit(self) -> str:
        return self.post.subreddit

    def top_level(self) -> list[RawComment]:
        return [self.comments[cid] for cid in self.roots if cid not in self.orphans]

    def replies(self, comment_id: str) -> list[RawComment]:
        return [self.comments[cid] for cid in self.children.get(comment_id, ())]


@dataclass
class BuildStats:
    threads: int = 0
    comments_attached: int = 0
    excluded_no_post: int = 0
    duplicates: int = 0
    duplicate_posts: int = 0
    orphans: int = 0
    cycles: int = 0


def _link_forest(thread: Thread, stats: BuildStats) -> None:
    post_id = thread.post.id
    comments = thread.comments
    # 0 = unvisited, 1 = on current path, 2 = resolved
    state: dict[str, int] = {}
    orphan_ids: set[str] = set()

    for start in comments:
        if state.get(start) == 2:
            continue
        path = []
        node = start
        while True:
            if state.get(node) == 2:
                break
            if state.get(node) == 1:
                cycle = path[path.index(node):]
                orphan_ids.update(cycle)
                stats.cycles += 1
                break
            state[node] = 1
            path.append(node)
            parent = comments[node].parent_id
            if parent == post_id:
                break
            if parent not in comments:
                orphan_ids.add(node)
                break
            node = parent
        for n in path:
            state[n] = 2

    ordered = sorted(comments.values(), key=lambda c: (c.created_utc, c.id))
    for c in ordered:
        if c.id in orphan_ids:
            continue
        if c.parent_id == post_id:
            thread.roots.append(c.id)
        else:
            thread.children.setdefault(c.parent_id, []).append(c.id)
    for c in ordered:
        if c.id in orphan_ids:
            thread.roots.append(c.id)
    thread.orphans = orphan_ids
    stats.orphans += len(orphan_ids)


def build_threads(
    posts: Iterable[RawPost], comments: Iterable[RawComment]
) -> tuple[list[Thread], BuildStats]:
    """Join comments to posts and link each thread's comments into a forest.

    Threads come back in post order. Duplicate comment ids keep their first
    occurrence. Comments whose ``link_id`` names no post are dropped and
    counted in ``excluded_no_post``.
    """
    stats = BuildStats()
    threads: dict[str, Thread] = {}
    for post in posts:
        if post.id in threads:
            stats.duplicate_posts += 1
            continue
        threads[post.id] = Thread(post=post)

    seen: set[str] = set()
    for c in comments:
        if c.id in seen:
            stats.duplicates += 1
            continue
        seen.add(c.id)
        thread = threads.get(c.link_id)
        if thread is None:
            stats.excluded_no_post += 1
            continue
        thread.comments[c.id] = c

    for thread in threads.values():
        _link_forest(thread, stats)
        stats.comments_attached += thread.comment_count
    stats.threads = len(threads)
    return list(threads.values()), stats


@dataclass(frozen=True)
class CorpusFilter:
    date_from: Optional[int] = None
    date_to: Optional[int] = None
    min_comments: int = 0
    subreddits: Optional[frozenset[str]] = None

    def __post_init__(self):
        if self.min_comments < 0:
            raise ValueError("min_comments must be >= 0")
        if self.date_from is not None and self.date_to is not None and self.date_from > self.date_to:
            raise ValueError("date_from must not exceed date_to")
        if self.subreddits is not None:
            object.__setattr__(self, "subreddits", frozenset(s.lower() for s in self.subreddits))

    def accepts(self, thread: Thread) -> bool:
        ts = thread.post.created_utc
        if self.date_from is not None and ts < self.date_from:
            return False
        if self.date_to is not None and ts > self.date_to:
            return False
        if thread.comment_count < self.min_comments:
            return False
        if self.subreddits is not None and thread.post.subreddit.lower() not in self.subreddits:
            return False
        return True


def filter_corpus(threads: Iterable[Thread], corpus_filter: CorpusFilter) -> list[Thread]:
    return [t for t in threads if corpus_filter.accepts(t)]


def thread_to_record(thread: Thread) -> dict:
    """Flat, order-stable serialisation used by the on-disk corpus."""
    ordered = sorted(thread.comments.values(), key=lambda c: (c.created_utc, c.id))
    return {
        "post": thread.post.to_record(),
        "comments": [c.to_record() for c in ordered],
    }


def thread_from_record(record: dict) -> Thread:
    post = RawPost(**record["post"])
    comments = [RawComment(**c) for c in record["comments"]]
    threads, _ = build_threads([post], comments)
    return threads[0]
