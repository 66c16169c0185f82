"""Acceptance criteria, one marked group per criterion.

The terminal summary prints one PASS/FAIL line per criterion (see conftest).
"""

import filecmp
import itertools
import json
import math
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from aita_judge.allotax import DEFAULT_ALPHA, class_distributions, rtd_contributions, top_divergent_terms
from aita_judge.awry import (
    RESULTS_HEADER,
    AwryPrediction,
    ConversationRecord,
    evaluate_awry,
    predict_online,
    run_awry,
    results_row,
)
from aita_judge.classifiers import (
    EvalMetrics,
    cross_validate,
    kfold_indices,
    log_likelihood,
    log_likelihood_gradient,
    logreg_fit,
    nb_predict,
    nb_train,
    nb_trainer,
)
from aita_judge.cli import dispatch
from aita_judge.labels import Valence
from aita_judge.reports import load_labeled
from aita_judge.stats import (
    binomial_test_one_sided,
    bonferroni,
    chi_square_phi,
    lorenz_gini,
    mann_whitney,
    odds_ratio_percent,
)

from conftest import FIXTURES
from helpers import labeled

sys.path.insert(0, str(FIXTURES))
import make_fixtures  # noqa: E402

POS, NEG = Valence.POSITIVE, Valence.NEGATIVE

c1 = pytest.mark.criterion(1, "chi-square / phi reproduction")
c2 = pytest.mark.criterion(2, "odds-ratio reproduction")
c3 = pytest.mark.criterion(3, "logistic-regression recovery")
c4 = pytest.mark.criterion(4, "statistical oracles")
c5 = pytest.mark.criterion(5, "classifier properties")
c6 = pytest.mark.criterion(6, "allotaxonometry properties")
c7 = pytest.mark.criterion(7, "pipeline determinism")
c8 = pytest.mark.criterion(8, "derailment protocol")


# --- 1 ------------------------------------------------------------------------

@c1
def test_chi_square_relationship_advice():
    t0 = time.perf_counter()
    r = chi_square_phi([[53416, 26281], [57126, 20714]])
    assert time.perf_counter() - t0 < 1.0
    assert abs(r.chi2 - 762.2) <= 0.5 and abs(r.phi - 0.070) <= 0.001
    print(f"relationship_advice chi2={r.chi2:.3f} phi={r.phi:.4f}")


@c1
def test_chi_square_relationships():
    t0 = time.perf_counter()
    r = chi_square_phi([[139163, 74384], [216190, 78823]])
    assert time.perf_counter() - t0 < 1.0
    assert abs(r.chi2 - 3874.6) <= 2.0 and abs(r.phi - 0.087) <= 0.001
    print(f"relationships chi2={r.chi2:.3f} phi={r.phi:.4f}")


# --- 2 ------------------------------------------------------------------------

@c2
@pytest.mark.parametrize("coef,expected", [(0.3076, 36.0), (0.3814, 46.4), (0.0059, 0.59), (0.0034, 0.34)])
def test_odds_ratio_percent(coef, expected):
    assert abs(odds_ratio_percent(coef) - expected) <= 0.1


# --- 3 ------------------------------------------------------------------------

TRUTH = np.array([-1.0923, 0.3814, 0.0034])


@pytest.fixture(scope="module")
def monte_carlo():
    rng = np.random.default_rng(20190831)
    n = 200_000
    gender = np.repeat([0.0, 1.0], n // 2)
    age = rng.integers(18, 41, n).astype(float)
    eta = TRUTH[0] + TRUTH[1] * gender + TRUTH[2] * age
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    X = np.column_stack([gender, age])
    t0 = time.perf_counter()
    fit = logreg_fit(X, y)
    return X, y, fit, time.perf_counter() - t0


@c3
def test_logreg_recovers_within_three_se(monte_carlo):
    X, y, fit, elapsed = monte_carlo
    assert fit.converged
    z = np.abs(fit.coefficients - TRUTH) / fit.standard_errors
    print("coef", fit.coefficients, "se", fit.standard_errors, "|z|", z, f"{elapsed:.2f}s")
    assert (z < 3).all()
    assert elapsed < 30


@c3
def test_logreg_gradient_matches_finite_differences(monte_carlo):
    X, y, fit, _ = monte_carlo
    coef = fit.coefficients
    n = len(y)
    g = log_likelihood_gradient(X, y, coef) / n
    fd = np.empty_like(coef)
    h = 1e-5
    for i in range(len(coef)):
        e = np.zeros_like(coef)
        e[i] = h
        fd[i] = (log_likelihood(X, y, coef + e) - log_likelihood(X, y, coef - e)) / (2 * h * n)
    rel = np.abs(g - fd) / (1 + np.abs(fd))
    print("analytic", g, "fd", fd, "rel", rel)
    assert (rel < 1e-4).all()
    assert np.max(np.abs(log_likelihood_gradient(X, y, coef))) < 1e-6


# --- 4 ------------------------------------------------------------------------

def _u_pairs(xs, ys):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in xs for y in ys)


def _tie_patterns(n):
    """Every sorted pooled sample of size n up to relabeling (one per composition of n)."""
    for cuts in itertools.product((0, 1), repeat=n - 1):
        values, v = [0], 0
        for c in cuts:
            v += c
            values.append(v)
        yield values


@c4
def test_mann_whitney_exhaustive_enumeration():
    # every tie pattern, every group size; every split for n <= 8 and a fixed
    # sample of splits for n = 9, 10 to keep the sweep inside a few seconds
    rng = random.Random(4)
    checked = 0
    for n in range(2, 11):
        for pooled in _tie_patterns(n):
            for n1 in range(1, n):
                splits = list(itertools.combinations(range(n), n1))
                us = []
                for idx in splits:
                    rest = [i for i in range(n) if i not in idx]
                    us.append(_u_pairs([pooled[i] for i in idx], [pooled[i] for i in rest]))
                chosen = range(len(splits)) if n <= 8 else rng.sample(range(len(splits)), min(6, len(splits)))
                for j in chosen:
                    idx = splits[j]
                    rest = [i for i in range(n) if i not in idx]
                    r = mann_whitney([pooled[i] for i in idx], [pooled[i] for i in rest])
                    lower = sum(1 for u in us if u <= us[j])
                    upper = sum(1 for u in us if u >= us[j])
                    expected = min(1.0, 2 * min(lower, upper) / len(us))
                    assert r.U == us[j]
                    assert abs(r.p_two_tailed - expected) < 1e-12, (pooled, idx)
                    checked += 1
    print(f"{checked} Mann-Whitney inputs checked")


@c4
def test_binomial_matches_pmf_sum():
    for n in range(1, 31):
        for p0 in (0.01, 0.1, 0.25, 0.36, 0.5, 0.73, 0.99):
            p = Fraction(p0)
            for k in range(n + 1):
                exact = float(sum(math.comb(n, j) * p ** j * (1 - p) ** (n - j) for j in range(k, n + 1)))
                assert abs(binomial_test_one_sided(k, n, p0) - exact) < 1e-12, (k, n, p0)


@c4
def test_gini_matches_pairwise_on_random_vectors():
    rng = np.random.default_rng(1000)
    for _ in range(1000):
        x = rng.integers(0, 50, size=rng.integers(1, 60)).astype(float)
        x[0] += 1.0  # at least one positive holder
        n = len(x)
        pairwise = sum(abs(a - b) for a in x for b in x) / (2 * n * n * x.mean())
        assert abs(lorenz_gini(x).gini - pairwise) < 1e-12


@c4
def test_bonferroni_clamps():
    assert bonferroni([0.9], m=10) == [1.0]
    assert bonferroni([0.01, 0.2], m=2) == pytest.approx([0.02, 0.4])
    assert all(q <= 1.0 for q in bonferroni([0.3] * 5))


# --- 5 ------------------------------------------------------------------------

@c5
def test_nb_hand_example_log_space():
    corpus = [labeled("yta rude", "c1"), labeled("yta selfish rude", "c2"), labeled("nta fine", "c3")]
    m = nb_train(corpus, alpha=1.0)
    rude = m.vocab.index["rude"]
    assert abs(m.log_likelihoods[1, rude] - math.log(0.3)) <= 1e-12
    assert abs(m.log_likelihoods[0, rude] - math.log(1 / 7)) <= 1e-12
    assert abs(m.log_priors[1] - math.log(2 / 3)) <= 1e-12
    label, post = nb_predict(m, "rude")
    assert label is NEG
    assert abs(post[NEG] - (math.log(2 / 3) + math.log(0.3))) <= 1e-12
    assert abs(post[POS] - (math.log(1 / 3) + math.log(1 / 7))) <= 1e-12


@c5
def test_kfold_partitions_for_random_sizes():
    rng = random.Random(5)
    for _ in range(1000):
        n = rng.randint(5, 3000)
        folds = kfold_indices(n, 5, rng.randrange(2**31))
        flat = [i for f in folds for i in f]
        assert len(flat) == len(set(flat)) == n and sorted(flat) == list(range(n))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1


@c5
def test_metric_identities_on_random_confusions():
    rng = random.Random(55)
    for _ in range(2000):
        m = EvalMetrics(*(rng.randint(0, 100) for _ in range(4)))
        if m.total == 0:
            continue
        if m.precision + m.recall > 0:
            assert math.isclose(m.f1, 2 * m.precision * m.recall / (m.precision + m.recall), rel_tol=1e-12)
        if m.fp + m.tn:
            assert math.isclose(m.fpr, 100 - 100 * m.tn / (m.fp + m.tn), rel_tol=1e-12, abs_tol=1e-12)


def _compositions(total, parts):
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        edges = (-1,) + bars + (total + parts - 1,)
        yield [edges[i + 1] - edges[i] - 1 for i in range(parts)]


def bayes_optimal_accuracy():
    """Exact accuracy of the true-posterior classifier over every count vector."""
    vocab = make_fixtures.SYNTH_VOCAB
    th_pos = make_fixtures.SYNTH_THETA["positive"]
    th_neg = make_fixtures.SYNTH_THETA["negative"]
    prior = make_fixtures.SYNTH_PRIOR_NEG
    length = make_fixtures.SYNTH_LENGTH
    acc = 0.0
    for counts in _compositions(length, len(vocab)):
        multinomial = math.factorial(length) / math.prod(math.factorial(c) for c in counts)
        joint_pos = (1 - prior) * multinomial * math.prod(p ** c for p, c in zip(th_pos, counts))
        joint_neg = prior * multinomial * math.prod(p ** c for p, c in zip(th_neg, counts))
        acc += max(joint_pos, joint_neg)
    return 100 * acc


@c5
def test_nb_cv_accuracy_near_bayes_optimal():
    corpus = load_labeled(FIXTURES / "synthetic_labeled.ndjson")
    assert len(corpus) == 5000
    report = cross_validate(corpus, nb_trainer(1.0), k=5, seed=42)
    optimum = bayes_optimal_accuracy()
    print(f"NB CV accuracy {report.mean['accuracy']:.2f} vs Bayes-optimal {optimum:.2f}")
    assert abs(report.mean["accuracy"] - optimum) <= 2.0


# --- 6 ------------------------------------------------------------------------

D1 = {"you": 40, "to": 30, "the": 30, "rude": 5, "kind": 12}
D2 = {"you": 50, "the": 20, "quilt": 9, "rude": 11, "to": 3}


@c6
def test_self_divergence_zero():
    res = rtd_contributions(D1, D1)
    assert res.total == 0.0


@c6
def test_swap_antisymmetry():
    ab, ba = rtd_contributions(D1, D2), rtd_contributions(D2, D1)
    assert abs(ab.total - ba.total) < 1e-15
    for t in ab.contributions:
        assert ab.contributions[t] == -ba.contributions[t]


@c6
def test_alpha_one_hand_value():
    res = rtd_contributions({"a": 2, "b": 1}, {"a": 1, "b": 2}, alpha=1.0)
    assert abs(res.contributions["a"] * res.normalization - math.sqrt(0.5)) <= 1e-9
    assert res.contributions["a"] > 0


@c6
def test_golden_top_ten():
    golden = json.loads((FIXTURES / "allotax_golden.json").read_text())
    corpus = load_labeled(FIXTURES / "zipf_labeled.ndjson")
    res = rtd_contributions(*class_distributions(corpus), alpha=DEFAULT_ALPHA)
    for side, key in ((1, "positive"), (2, "negative")):
        got = top_divergent_terms(res, 10, side=side)
        assert [t for t, _ in got] == [t for t, _ in golden[key]]
        for (_, c), (_, g) in zip(got, golden[key]):
            assert abs(c - g) < 1e-11
    assert abs(res.total - golden["total"]) < 1e-11


# --- 7 ------------------------------------------------------------------------

def run_pipeline(out: Path) -> None:
    fx = FIXTURES
    corpus, model = out / "corpus", out / "model" / "model.json"
    steps = [
        ["ingest", "--posts", str(fx / "corpus/posts.ndjson"), "--comments", str(fx / "corpus/comments.ndjson"),
         "--min-comments", "50", "--from", "2017-01-01", "--to", "2019-08-31", "--out", str(corpus)],
        ["label", "--corpus", str(corpus), "--out", str(corpus)],
        ["train", "--labeled", str(corpus / "labeled.ndjson"), "--model", "nb", "--alpha", "1.0",
         "--folds", "5", "--seed", "42", "--out", str(out / "model")],
        ["classify", "--corpus", str(corpus), "--model", str(model), "--out", str(out / "classify")],
        ["allotax", "--labeled", str(corpus / "labeled.ndjson"), "--out", str(out / "allotax")],
        ["analyze", "popularity", "--corpus", str(corpus), "--model", str(model), "--out", str(out / "popularity")],
        ["analyze", "users", "--corpus", str(corpus), "--model", str(model), "--min-judged", "50",
         "--out", str(out / "users")],
        ["analyze", "demographics", "--corpus", str(corpus), "--model", str(model), "--out", str(out / "demo")],
        ["awry", "--conversations", str(fx / "conversations.ndjson"), "--model", str(model), "--mode", "offline",
         "--out", str(out / "awry")],
        ["awry", "--conversations", str(fx / "conversations.ndjson"), "--model", str(model), "--mode", "online",
         "--out", str(out / "awry")],
    ]
    for argv in steps:
        assert dispatch(argv) == 0, argv


def _tree(root: Path) -> list[str]:
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())


@c7
def test_two_runs_byte_identical(tmp_path):
    t0 = time.perf_counter()
    run_pipeline(tmp_path / "a")
    run_pipeline(tmp_path / "b")
    elapsed = time.perf_counter() - t0
    files = _tree(tmp_path / "a")
    assert files == _tree(tmp_path / "b")
    assert len(files) > 20
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    assert mismatch == [] and errors == []
    print(f"{len(files)} files identical; two runs in {elapsed:.1f}s")
    assert elapsed / 2 < 60


# --- 8 ------------------------------------------------------------------------

def _conv(flags, cid="c", derails=False):
    utts = [("op", "context")] + [(f"u{i}", f"t{i}") for i in range(len(flags))]
    return ConversationRecord(cid, tuple(utts), derails), {f"t{i}": NEG if f else POS for i, f in enumerate(flags)}


@c8
def test_online_lazy_stopping():
    rng = random.Random(8)
    for _ in range(500):
        flags = [rng.random() < 0.2 for _ in range(rng.randint(1, 15))]
        conv, answers = _conv(flags)
        calls = []

        def counting(text):
            calls.append(text)
            return answers[text]

        pred = predict_online(conv, counting)
        if any(flags):
            first = flags.index(True) + 2
            assert pred.predicted_derail and pred.trigger_index == first
            assert len(calls) == first - 1
        else:
            assert not pred.predicted_derail and pred.trigger_index is None
            assert len(calls) == len(flags)


@c8
def test_constant_classifiers():
    convs = [_conv([False] * n, f"c{n}", derails=n % 2 == 0)[0] for n in range(1, 9)]
    truths = {c.id: c.derails for c in convs}
    never = run_awry(convs, lambda t: POS, "online")
    always = run_awry(convs, lambda t: NEG, "online")
    assert not any(p.predicted_derail for p in never.predictions)
    assert all(p.predicted_derail and p.trigger_index == 2 for p in always.predictions)
    m_never = evaluate_awry(never.predictions, truths)
    m_always = evaluate_awry(always.predictions, truths)
    assert (m_never.accuracy, m_never.recall, m_never.fpr) == (50.0, 0.0, 0.0)
    assert (m_always.accuracy, m_always.recall, m_always.fpr) == (50.0, 100.0, 100.0)


@c8
def test_table_layout_and_metric_identities():
    pairs = [(True, True)] * 40 + [(True, False)] * 10 + [(False, True)] * 30 + [(False, False)] * 60
    preds = [AwryPrediction(f"c{i}", p) for i, (p, _) in enumerate(pairs)]
    m = evaluate_awry(preds, {f"c{i}": t for i, (_, t) in enumerate(pairs)})
    assert RESULTS_HEADER == ["model", "mode", "A", "P", "R", "FPR", "F1"]
    assert results_row("AITA", "offline", m) == ["AITA", "offline", "71.4", "80.0", "57.1", "14.3", "66.7"]
    assert math.isclose(m.fpr, 100 - 100 * m.tn / (m.fp + m.tn))
    assert math.isclose(m.f1, 2 * m.precision * m.recall / (m.precision + m.recall))
