"""Valence classifiers, evaluation metrics and the k-fold harness.

Multinomial naive Bayes is trained natively. Embedding baselines enter as
imported feature vectors fitted with IRLS logistic regression, and
externally fine-tuned models enter as imported prediction files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import numpy as np

from .ingest import RawComment
from .labels import CLASS_ORDER, LabeledComment, Valence, strip_label_prefix
from .text import Vocabulary, tokenize

MODEL_FORMAT_VERSION = 1
# log-posterior gaps this small (relative) are rounding noise and count as ties
TIE_RTOL = 1e-12

T = TypeVar("T")


class ModelFormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# multinomial naive Bayes


@dataclass(frozen=True)
class NBModel:
    vocab: Vocabulary
    log_priors: np.ndarray  # shape (2,), CLASS_ORDER
    log_likelihoods: np.ndarray  # shape (2, V)
    alpha: float

    def log_posteriors(self, tokens: Iterable[str]) -> np.ndarray:
        idx = [i for i in (self.vocab.get(t) for t in tokens) if i is not None]
        scores = self.log_priors.copy()
        if idx:
            counts = np.bincount(idx, minlength=len(self.vocab))
            scores = scores + self.log_likelihoods @ counts
        return scores

    def predict(self, text: str) -> tuple[Valence, dict[Valence, float]]:
        scores = self.log_posteriors(tokenize(text))
        # ties go to POSITIVE (index 0)
        margin = TIE_RTOL * max(1.0, abs(scores[0]), abs(scores[1]))
        winner = CLASS_ORDER[1] if scores[1] - scores[0] > margin else CLASS_ORDER[0]
        return winner, {cls: float(s) for cls, s in zip(CLASS_ORDER, scores)}

    def classify(self, text: str) -> Valence:
        return self.predict(text)[0]

    def negative_probability(self, text: str) -> float:
        s = self.log_posteriors(tokenize(text))
        return float(1.0 / (1.0 + math.exp(s[0] - s[1]))) if s[0] - s[1] < 700 else 0.0

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "multinomial_nb",
            "alpha": self.alpha,
            "class_order": [c.value for c in CLASS_ORDER],
            "vocab": dict(self.vocab.index),
            "log_priors": self.log_priors.tolist(),
            "log_likelihoods": self.log_likelihoods.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NBModel":
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelFormatError(
                f"unsupported model format_version {doc.get('format_version')!r}; "
                f"expected {MODEL_FORMAT_VERSION}"
            )
        if doc.get("kind") != "multinomial_nb":
            raise ModelFormatError(f"not a naive Bayes model: kind={doc.get('kind')!r}")
        if doc.get("class_order") != [c.value for c in CLASS_ORDER]:
            raise ModelFormatError("unexpected class order")
        terms = sorted(doc["vocab"], key=doc["vocab"].__getitem__)
        vocab = Vocabulary(terms)
        if [vocab.index[t] for t in terms] != [doc["vocab"][t] for t in terms]:
            raise ModelFormatError("vocabulary indices are not 0..V-1")
        return cls(
            vocab=vocab,
            log_priors=np.asarray(doc["log_priors"], dtype=float),
            log_likelihoods=np.asarray(doc["log_likelihoods"], dtype=float),
            alpha=float(doc["alpha"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NBModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def nb_train_tokens(docs: Sequence[Sequence[str]], labels: Sequence[Valence], alpha: float = 1.0) -> NBModel:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if len(docs) != len(labels):
        raise ValueError("docs and labels differ in length")
    class_docs = Counter(labels)
    if len(docs) == 0 or any(class_docs[c] == 0 for c in CLASS_ORDER):
        raise ValueError("training needs documents from both classes")
    vocab = Vocabulary.from_documents(docs)
    V = len(vocab)
    counts = np.zeros((2, V), dtype=float)
    for tokens, label in zip(docs, labels):
        row = CLASS_ORDER.index(label)
        for tok, n in Counter(tokens).items():
            counts[row, vocab.index[tok]] += n
    totals = counts.sum(axis=1, keepdims=True)
    log_lik = np.log(counts + alpha) - np.log(totals + alpha * V)
    n = len(docs)
    log_priors = np.log(np.array([class_docs[c] / n for c in CLASS_ORDER]))
    return NBModel(vocab=vocab, log_priors=log_priors, log_likelihoods=log_lik, alpha=float(alpha))


def _training_text(lc: LabeledComment, strip_prefix: bool) -> str:
    return strip_label_prefix(lc.body) if strip_prefix else lc.body


def nb_train(corpus: Sequence[LabeledComment], alpha: float = 1.0, strip_prefix: bool = False) -> NBModel:
    """Fit add-alpha smoothed multinomial naive Bayes on labeled comments.

    With ``strip_prefix`` the opening judgement label is removed from each
    body before tokenizing.
    """
    docs = [tokenize(_training_text(lc, strip_prefix)) for lc in corpus]
    return nb_train_tokens(docs, [lc.valence for lc in corpus], alpha)


def nb_predict(model: NBModel, text: str) -> tuple[Valence, dict[Valence, float]]:
    return model.predict(text)


# --------------------------------------------------------------------------
# logistic regression (IRLS)


@dataclass(frozen=True)
class LogRegConfig:
    max_iter: int = 100
    tol: float = 1e-8
    ridge: float = 1e-8


@dataclass
class LogRegFit:
    weights: np.ndarray
    intercept: float
    standard_errors: np.ndarray  # intercept first
    converged: bool
    iterations: int
    deviance: float
    diagnostic: str = ""

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.weights])

    def z_scores(self) -> np.ndarray:
        return self.coefficients / self.standard_errors

    def p_values(self) -> np.ndarray:
        return np.array([math.erfc(abs(z) / math.sqrt(2.0)) for z in self.z_scores()])

    def confidence_intervals(self, z: float = 1.96) -> np.ndarray:
        c = self.coefficients
        return np.column_stack([c - z * self.standard_errors, c + z * self.standard_errors])


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_likelihood(X: np.ndarray, y: np.ndarray, coef: np.ndarray) -> float:
    """Bernoulli log-likelihood; ``coef`` is intercept followed by weights."""
    eta = coef[0] + X @ coef[1:]
    # log(1 + e^eta) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def log_likelihood_gradient(X: np.ndarray, y: np.ndarray, coef: np.ndarray) -> np.ndarray:
    eta = coef[0] + X @ coef[1:]
    resid = y - _sigmoid(eta)
    return np.concatenate([[resid.sum()], X.T @ resid])


def _deviance(y: np.ndarray, mu: np.ndarray) -> float:
    eps = 1e-300
    return float(-2.0 * np.sum(y * np.log(np.maximum(mu, eps)) + (1 - y) * np.log(np.maximum(1 - mu, eps))))


def logreg_fit(X, y, config: LogRegConfig = LogRegConfig()) -> LogRegFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    An intercept is always added. Standard errors come from the inverse
    information matrix at the optimum. The ridge term only touches the
    non-intercept weights.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError("y must have one label per row of X")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in design matrix or labels")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if n <= d:
        raise ValueError("need more observations than features")

    A = np.column_stack([np.ones(n), X])
    penalty = np.full(d + 1, config.ridge)
    penalty[0] = 0.0
    mean = min(max(y.mean(), 1e-6), 1 - 1e-6)
    beta = np.zeros(d + 1)
    beta[0] = math.log(mean / (1 - mean))
    mu = _sigmoid(A @ beta)
    dev = _deviance(y, mu)
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        w = mu * (1 - mu)
        grad = A.T @ (y - mu) - penalty * beta
        H = (A * w[:, None]).T @ A + np.diag(penalty)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        beta = beta + step
        mu = _sigmoid(A @ beta)
        new_dev = _deviance(y, mu)
        delta = abs(dev - new_dev)
        dev = new_dev
        if delta < config.tol:
            converged = True
            break

    diagnostic = ""
    if dev < 1e-6 * n or np.max(np.abs(y - mu)) < 1e-8:
        converged = False
        diagnostic = "perfect or quasi-perfect separation: coefficients diverge"
    elif not converged:
        diagnostic = f"no convergence after {config.max_iter} iterations"

    w = mu * (1 - mu)
    info = (A * w[:, None]).T @ A
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(info)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return LogRegFit(
        weights=beta[1:].copy(),
        intercept=float(beta[0]),
        standard_errors=se,
        converged=converged,
        iterations=it,
        deviance=dev,
        diagnostic=diagnostic,
    )


def logreg_predict(fit: LogRegFit, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != fit.weights.shape[0]:
        raise ValueError("feature dimension mismatch")
    eta = fit.intercept + float(x @ fit.weights)
    return float(_sigmoid(np.array([eta]))[0])


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalMetrics:
    """Percent metrics where the detected ("positive") class is NEGATIVE valence."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return 100.0 * (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return 100.0 * self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return 100.0 * self.tp / d if d else 0.0

    @property
    def fpr(self) -> float:
        d = self.fp + self.tn
        return 100.0 * self.fp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "fpr": self.fpr,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


METRIC_NAMES = ("accuracy", "precision", "recall", "fpr", "f1")


def confusion(predicted: Sequence[bool], actual: Sequence[bool]) -> EvalMetrics:
    """Confusion counts for boolean detections (True = detected class)."""
    if len(predicted) != len(actual):
        raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(actual)} truths")
    tp = fp = fn = tn = 0
    for p, a in zip(predicted, actual):
        if p and a:
            tp += 1
        elif p:
            fp += 1
        elif a:
            fn += 1
        else:
            tn += 1
    return EvalMetrics(tp, fp, fn, tn)


def evaluate(predictions: Sequence[Valence], truth: Sequence[Valence]) -> EvalMetrics:
    if len(predictions) != len(truth):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(truth)} truths")
    if not predictions:
        raise ValueError("nothing to evaluate")
    neg = Valence.NEGATIVE
    return confusion([p is neg for p in predictions], [t is neg for t in truth])


# --------------------------------------------------------------------------
# cross-validation


@dataclass
class FoldReport:
    folds: list[EvalMetrics]
    seed: int
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in METRIC_NAMES:
            values = [getattr(m, name) for m in self.folds]
            self.mean[name] = statistics.fmean(values)
            self.std[name] = statistics.pstdev(values)

    @property
    def k(self) -> int:
        return len(self.folds)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "std_convention": "population",
            "folds": [m.as_dict() for m in self.folds],
            "mean": self.mean,
            "std": self.std,
        }


def kfold_indices(n: int, k: int, seed: int) -> list[list[int]]:
    """Seeded shuffle of range(n) split into k folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < k:
        raise ValueError(f"need at least k={k} items, got {n}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    base, extra = divmod(n, k)
    folds, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(order[start:start + size])
        start += size
    return folds


Trainer = Callable[[Sequence[T]], Callable[[T], Valence]]


def cross_validate(
    corpus: Sequence[T],
    trainer: Trainer,
    k: int = 5,
    seed: int = 42,
    truth: Callable[[T], Valence] = lambda item: item.valence,
) -> FoldReport:
    """k-fold cross-validation.

    ``trainer`` receives the training items of a fold and returns a
    predictor for single items, so anything fitted (vocabulary included)
    only ever sees training folds.
    """
    folds = kfold_indices(len(corpus), k, seed)
    results = []
    for i, test_idx in enumerate(folds):
        held = set(test_idx)
        train = [corpus[j] for j in range(len(corpus)) if j not in held]
        predict = trainer(train)
        test = [corpus[j] for j in test_idx]
        results.append(evaluate([predict(item) for item in test], [truth(item) for item in test]))
    return FoldReport(results, seed)


def nb_trainer(alpha: float = 1.0, strip_prefix: bool = False) -> Trainer:
    def train(items: Sequence[LabeledComment]):
        model = nb_train(items, alpha, strip_prefix)
        return lambda item: model.classify(_training_text(item, strip_prefix))

    return train


# --------------------------------------------------------------------------
# imported predictions and feature vectors


class ExternalPredictions(dict):
    """comment_id -> (Valence, optional score) loaded from a predictions CSV."""

    def classify_comment(self, comment: RawComment) -> Optional[Valence]:
        hit = self.get(comment.id)
        return hit[0] if hit is not None else None


PREDICTION_HEADER = ["comment_id", "valence", "score"]


def load_external_predictions(source) -> ExternalPredictions:
    """Read ``comment_id,valence,score`` rows; the score column may be blank."""
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    out = ExternalPredictions()
    if not text.strip():
        return out
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != PREDICTION_HEADER:
        raise ValueError(f"line 1: expected header {','.join(PREDICTION_HEADER)}, got {','.join(header)}")
    dupes: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) not in (2, 3):
            raise ValueError(f"line {lineno}: expected 3 columns, got {len(row)}")
        cid = row[0].strip()
        try:
            valence = Valence.parse(row[1])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        score_txt = row[2].strip() if len(row) == 3 else ""
        try:
            score = float(score_txt) if score_txt else None
        except ValueError:
            raise ValueError(f"line {lineno}: bad score {score_txt!r}") from None
        if cid in out:
            dupes.append(cid)
            continue
        out[cid] = (valence, score)
    if dupes:
        raise ValueError(f"duplicate comment ids: {', '.join(sorted(set(dupes)))}")
    return out


def load_feature_vectors(path) -> dict[str, np.ndarray]:
    """Read ``comment_id,f0,...,f{d-1}`` rows into comment_id -> vector."""
    out: dict[str, np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        d = len(header) - 1
        if header[0].strip() != "comment_id" or [h.strip() for h in header[1:]] != [f"f{i}" for i in range(d)]:
            raise ValueError("line 1: expected header comment_id,f0,...,f{d-1}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValueError(f"line {lineno}: expected {d + 1} columns, got {len(row)}")
            try:
                vec = np.array([float(v) for v in row[1:]])
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric feature") from None
            if not np.isfinite(vec).all():
                raise ValueError(f"line {lineno}: non-finite feature")
            if row[0] in out:
                raise ValueError(f"line {lineno}: duplicate comment id {row[0]}")
            out[row[0]] = vec
    return out


@dataclass(frozen=True)
class FeatureRow:
    comment_id: str
    vector: np.ndarray
    valence: Valence


def logreg_trainer(config: LogRegConfig = LogRegConfig(), threshold: float = 0.5) -> Trainer:
    """Embedding baseline: logistic regression on imported vectors, NEGATIVE = 1."""

    def train(rows: Sequence[FeatureRow]):
        X = np.vstack([r.vector for r in rows])
        y = np.array([1.0 if r.valence is Valence.NEGATIVE else 0.0 for r in rows])
        fit = logreg_fit(X, y, config)

        def predict(row: FeatureRow) -> Valence:
            return Valence.NEGATIVE if logreg_predict(fit, row.vector) > threshold else Valence.POSITIVE

        return predict

    return train
