"""Small builders shared by the test modules."""

from aita_judge.ingest import RawComment
from aita_judge.labels import JudgementLabel, LabeledComment, Valence, extract_label, label_valence


def labeled(body: str, cid: str = "c", post_id: str = "p", valence: Valence | None = None) -> LabeledComment:
    comment = RawComment(cid, post_id, post_id, body, 1, 1, "u")
    label = extract_label(body)
    if label is None:
        # unprefixed body: pick a label consistent with the requested valence
        label = JudgementLabel.YTA if valence is Valence.NEGATIVE else JudgementLabel.NTA
    return LabeledComment(comment, label, valence or label_valence(label), post_id)
