"""Conversation-derailment transfer evaluation.

Offline mode classifies only the second utterance. Online mode streams the
replies from utterance 2 onward and stops at the first NEGATIVE prediction.
Utterance indices are 1-based.

Converting the public derailment corpora: each conversation becomes one
line ``{"id": ..., "utterances": [{"author": ..., "text": ...}, ...],
"derails": bool}``. For the Wikipedia talk-page and change-my-view corpora
use the conversation id, the utterances in reply order (dropping the final
attacking or moderated comment when the source marks it), and the
conversation-level attack label as ``derails``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from .classifiers import EvalMetrics, confusion
from .labels import Valence

TextClassify = Callable[[str], Valence]

ONLINE_START_INDEX = 2


class ConversationSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ConversationRecord:
    id: str
    utterances: tuple[tuple[str, str], ...]
    derails: bool

    @property
    def offline_eligible(self) -> bool:
        return len(self.utterances) >= 2


def load_conversations(path) -> list[ConversationRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConversationSchemaError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ConversationSchemaError(f"line {lineno}: record is not an object")
            for key in ("id", "utterances", "derails"):
                if key not in rec:
                    raise ConversationSchemaError(f"line {lineno}: missing field {key!r}")
            if not isinstance(rec["derails"], bool):
                raise ConversationSchemaError(f"line {lineno}: derails must be a boolean")
            try:
                utts = tuple((str(u.get("author", "")), str(u["text"])) for u in rec["utterances"])
            except (TypeError, KeyError, AttributeError):
                raise ConversationSchemaError(f"line {lineno}: utterances must be objects with a text field") from None
            out.append(ConversationRecord(str(rec["id"]), utts, rec["derails"]))
    return out


@dataclass(frozen=True)
class AwryPrediction:
    conversation_id: str
    predicted_derail: bool
    trigger_index: Optional[int] = None


def predict_offline(conv: ConversationRecord, classify: TextClassify) -> Optional[AwryPrediction]:
    """Derail iff the second utterance is judged NEGATIVE; None if too short."""
    if not conv.offline_eligible:
        return None
    verdict = classify(conv.utterances[1][1])
    return AwryPrediction(conv.id, verdict is Valence.NEGATIVE)


def predict_online(conv: ConversationRecord, classify: TextClassify) -> AwryPrediction:
    for index in range(ONLINE_START_INDEX, len(conv.utterances) + 1):
        if classify(conv.utterances[index - 1][1]) is Valence.NEGATIVE:
            return AwryPrediction(conv.id, True, index)
    return AwryPrediction(conv.id, False)


@dataclass
class AwryRun:
    predictions: list[AwryPrediction]
    skipped: int


def run_awry(convs: Sequence[ConversationRecord], classify: TextClassify, mode: str) -> AwryRun:
    if mode not in ("offline", "online"):
        raise ValueError(f"unknown mode {mode!r}")
    preds, skipped = [], 0
    for conv in convs:
        if mode == "offline":
            p = predict_offline(conv, classify)
        else:
            p = predict_online(conv, classify) if conv.utterances else None
        if p is None:
            skipped += 1
        else:
            preds.append(p)
    return AwryRun(preds, skipped)


def evaluate_awry(predictions: Sequence[AwryPrediction], truths: Mapping[str, bool]) -> EvalMetrics:
    """A/P/R/FPR/F1 with derailment as the detected class."""
    ids = [p.conversation_id for p in predictions]
    missing = [i for i in ids if i not in truths]
    extra = set(truths) - set(ids)
    if missing or extra:
        raise ValueError(
            f"prediction/truth id mismatch: {len(missing)} without truth, {len(extra)} without prediction"
        )
    return confusion([p.predicted_derail for p in predictions], [truths[i] for i in ids])


RESULTS_HEADER = ["model", "mode", "A", "P", "R", "FPR", "F1"]


def results_row(model: str, mode: str, m: EvalMetrics) -> list[str]:
    """One row of a derailment results table, metrics to one decimal."""
    return [model, mode] + [f"{v:.1f}" for v in (m.accuracy, m.precision, m.recall, m.fpr, m.f1)]
