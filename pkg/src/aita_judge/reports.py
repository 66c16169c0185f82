"""Atomic, deterministic report and corpus persistence."""

from __future__ import annotations

import contextlib
import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .ingest import Thread, thread_from_record, thread_to_record
from .labels import LabeledComment

REPORT_FORMAT_VERSION = 1
THREADS_FILE = "threads.ndjson"
INDEX_FILE = "index.json"
LABELED_FILE = "labeled.ndjson"

log = logging.getLogger(__name__)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write_text(path, csv_text(header, rows))


def file_fingerprint(path) -> dict:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return {"name": Path(path).name, "sha256": h.hexdigest()}


def write_report(out_dir, name: str, config: dict, metadata: dict, results: dict, summary: Sequence[str]) -> None:
    """Write ``<name>.json`` (machine-readable manifest) and ``<name>.txt`` (summary)."""
    manifest = {
        "format_version": REPORT_FORMAT_VERSION,
        "report": name,
        "config": config,
        "seed": config.get("seed"),
        "metadata": metadata,
        "results": results,
    }
    out_dir = Path(out_dir)
    atomic_write_text(out_dir / f"{name}.json", dumps(manifest))
    atomic_write_text(out_dir / f"{name}.txt", "\n".join(summary) + "\n")
    log.info("wrote %s", out_dir / f"{name}.json")


def save_threads(out_dir, threads: Sequence[Thread]) -> None:
    out_dir = Path(out_dir)
    lines = [json.dumps(thread_to_record(t), sort_keys=True, ensure_ascii=False) for t in threads]
    atomic_write_text(out_dir / THREADS_FILE, "".join(line + "\n" for line in lines))
    subs: dict[str, int] = {}
    for t in threads:
        subs[t.subreddit] = subs.get(t.subreddit, 0) + 1
    index = {
        "format_version": REPORT_FORMAT_VERSION,
        "threads": len(threads),
        "comments": sum(t.comment_count for t in threads),
        "subreddits": dict(sorted(subs.items())),
        "posts": [[t.post.id, t.subreddit, i + 1] for i, t in enumerate(threads)],
    }
    atomic_write_text(out_dir / INDEX_FILE, dumps(index))


def iter_threads(corpus_dir) -> Iterator[Thread]:
    path = Path(corpus_dir) / THREADS_FILE
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield thread_from_record(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad thread record ({exc})") from None


def save_labeled(path, corpus: Sequence[LabeledComment]) -> None:
    atomic_write_text(
        path, "".join(json.dumps(lc.to_record(), sort_keys=True, ensure_ascii=False) + "\n" for lc in corpus)
    )


def load_labeled(path) -> list[LabeledComment]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(LabeledComment.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad labeled record ({exc})") from None
    return out
