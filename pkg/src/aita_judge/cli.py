"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .allotax import DEFAULT_ALPHA, class_distributions, rtd_contributions, top_divergent_terms
from .analytics import (
    POPULARITY_CUMULATION,
    NEGATIVITY_DENOMINATOR,
    SIGNIFICANCE,
    assign_post_valences,
    assign_user_judgements,
    count_authored_comments,
    cumulative_positive_ratio,
    group_by_subreddit,
    negativity_comment_fraction,
    popularity_significance,
    tally_users,
)
from .awry import ONLINE_START_INDEX, evaluate_awry, load_conversations, run_awry, results_row, RESULTS_HEADER
from .classifiers import (
    FeatureRow,
    ModelFormatError,
    NBModel,
    PREDICTION_HEADER,
    cross_validate,
    evaluate,
    load_external_predictions,
    load_feature_vectors,
    logreg_fit,
    logreg_trainer,
    nb_train,
    nb_trainer,
)
from .demographics import Attribution, build_demo_dataset, demo_chi_square, demo_regression
from .ingest import CorpusFilter, IngestionError, ParseStats, build_threads, filter_corpus, parse_comments, parse_posts
from .labels import Valence, build_labeled_corpus
from .reports import (
    LABELED_FILE,
    THREADS_FILE,
    dumps,
    atomic_write_text,
    file_fingerprint,
    iter_threads,
    load_labeled,
    save_labeled,
    save_threads,
    write_csv,
    write_report,
)
from .stats import lorenz_gini

OUT_ENV = "AITA_JUDGE_OUT"
DEFAULT_SEED = 42
DEFAULT_THRESHOLDS = (1e-6, 1e-5, 1e-4, 1e-3, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# argument helpers


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def _epoch(day: dt.date, end_of_day: bool = False) -> int:
    moment = dt.datetime(day.year, day.month, day.day, tzinfo=dt.timezone.utc)
    if end_of_day:
        moment += dt.timedelta(days=1, seconds=-1)
    return int(moment.timestamp())


def _fraction(text: str) -> float:
    try:
        value = float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _require_file(path: Optional[str], flag: str) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file: {path}")
    return p


def _require_dir(path: str, flag: str, must_contain: str) -> Path:
    p = Path(path)
    if not (p / must_contain).is_file():
        raise UsageError(f"{flag}: {path} does not contain {must_contain}")
    return p


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV)
    if not out:
        raise UsageError(f"--out is required (or set {OUT_ENV})")
    return Path(out)


def _corpus_fp(corpus: Path) -> dict:
    return {"threads": file_fingerprint(corpus / THREADS_FILE)}


def _classifier(args) -> tuple[Callable, dict]:
    """Comment classifier from --model or --predictions, plus its config entry."""
    model_path = _require_file(getattr(args, "model_file", None), "--model")
    pred_path = _require_file(getattr(args, "predictions", None), "--predictions")
    if (model_path is None) == (pred_path is None):
        raise UsageError("exactly one of --model or --predictions is required")
    if model_path is not None:
        model = NBModel.load(model_path)
        return (lambda c: model.classify(c.body)), {"model": file_fingerprint(model_path)}
    preds = load_external_predictions(pred_path)
    return preds.classify_comment, {"predictions": file_fingerprint(pred_path)}


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> None:
    posts_path = _require_file(args.posts, "--posts")
    comments_path = _require_file(args.comments, "--comments")
    out = _out_dir(args)
    corpus_filter = CorpusFilter(
        date_from=_epoch(args.date_from) if args.date_from else None,
        date_to=_epoch(args.date_to, end_of_day=True) if args.date_to else None,
        min_comments=args.min_comments,
        subreddits=frozenset(s.strip() for s in args.subreddits.split(",")) if args.subreddits else None,
    )
    post_stats, comment_stats = ParseStats(), ParseStats()
    with open(posts_path, "rb") as fh:
        posts = list(parse_posts(fh, post_stats))
    with open(comments_path, "rb") as fh:
        comments = list(parse_comments(fh, comment_stats))
    threads, build_stats = build_threads(posts, comments)
    kept = filter_corpus(threads, corpus_filter)
    save_threads(out, kept)

    results = {
        "posts": vars(post_stats),
        "comments": vars(comment_stats),
        "threads": vars(build_stats),
        "retained_threads": len(kept),
        "retained_comments": sum(t.comment_count for t in kept),
    }
    config = {
        "subcommand": "ingest",
        "posts": file_fingerprint(posts_path),
        "comments": file_fingerprint(comments_path),
        "min_comments": args.min_comments,
        "date_from": args.date_from.isoformat() if args.date_from else None,
        "date_to": args.date_to.isoformat() if args.date_to else None,
        "date_bounds_utc": [corpus_filter.date_from, corpus_filter.date_to],
        "subreddits": sorted(corpus_filter.subreddits) if corpus_filter.subreddits else None,
        "seed": args.seed,
    }
    metadata = {
        "id_normalization": "t1_/t3_ prefixes stripped",
        "missing_score": "defaults to 0 (counted)",
        "deleted_comments_count_toward_min_comments": True,
        "date_to_inclusive_through_end_of_day": True,
    }
    summary = [
        f"posts parsed {post_stats.parsed}, malformed {post_stats.malformed}, missing score {post_stats.missing_score}",
        f"comments parsed {comment_stats.parsed}, malformed {comment_stats.malformed}, "
        f"missing score {comment_stats.missing_score}",
        f"threads built {build_stats.threads}; comments without post {build_stats.excluded_no_post}; "
        f"duplicates {build_stats.duplicates}; orphans {build_stats.orphans}; cycles {build_stats.cycles}",
        f"retained {len(kept)} threads with {results['retained_comments']} comments",
    ]
    write_report(out, "ingest_report", config, metadata, results, summary)


def cmd_label(args) -> None:
    corpus = _require_dir(args.corpus, "--corpus", THREADS_FILE)
    out = _out_dir(args)
    labeled, hist = build_labeled_corpus(iter_threads(corpus))
    save_labeled(out / LABELED_FILE, labeled)
    h = hist.as_dict()
    config = {"subcommand": "label", "corpus": _corpus_fp(corpus), "seed": args.seed}
    metadata = {"prefix_markers_stripped": "whitespace > * [ (", "case_insensitive": True}
    summary = ["label  count"] + [f"{k:<5} {h[k]}" for k in ("NTA", "YTA", "NAH", "ESH")] + [
        f"positive (NTA+NAH) {h['positive']}",
        f"negative (YTA+ESH) {h['negative']}",
        f"dropped: no prefix {h['dropped_no_prefix']}, INFO {h['dropped_info']}",
    ]
    write_report(out, "label_report", config, metadata, {"histogram": h}, summary)


def _fold_summary(name: str, report) -> list[str]:
    lines = [f"{name}: {report.k}-fold cross-validation (seed {report.seed}, population std)"]
    lines.append("metric     mean    std")
    for metric in ("accuracy", "precision", "recall", "fpr", "f1"):
        lines.append(f"{metric:<9} {report.mean[metric]:6.2f} {report.std[metric]:6.2f}")
    return lines


def _feature_rows(labeled, features_path: Path) -> list[FeatureRow]:
    vectors = load_feature_vectors(features_path)
    rows = [FeatureRow(lc.comment.id, vectors[lc.comment.id], lc.valence) for lc in labeled if lc.comment.id in vectors]
    if not rows:
        raise DataError("no labeled comment has an imported feature vector")
    return rows


def _run_cv(args, labeled, config: dict, out: Path, report_name: str) -> None:
    if args.model == "nb":
        rep = cross_validate(labeled, nb_trainer(args.alpha, not args.keep_prefix), k=args.folds, seed=args.seed)
        name = "Multinomial Naive Bayes"
    else:
        features = _require_file(args.features, "--features")
        rows = _feature_rows(labeled, features)
        config["features"] = file_fingerprint(features)
        config["n_with_features"] = len(rows)
        rep = cross_validate(rows, logreg_trainer(), k=args.folds, seed=args.seed)
        name = "Logistic regression on imported embeddings"
    metadata = {"detection_class": "negative", "std_convention": "population", "vocab_from_training_folds": True,
                "label_prefix_stripped": not args.keep_prefix}
    summary = _fold_summary(name, rep)
    write_report(out, report_name, config, metadata, rep.as_dict(), summary)
    rows = [[i + 1] + [m.as_dict()[k] for k in ("accuracy", "precision", "recall", "fpr", "f1")] for i, m in enumerate(rep.folds)]
    rows.append(["mean"] + [rep.mean[k] for k in ("accuracy", "precision", "recall", "fpr", "f1")])
    rows.append(["std"] + [rep.std[k] for k in ("accuracy", "precision", "recall", "fpr", "f1")])
    write_csv(out / f"{report_name}.csv", ["fold", "accuracy", "precision", "recall", "fpr", "f1"], rows)


def _train_config(args, labeled_path: Path, subcommand: str) -> dict:
    return {
        "subcommand": subcommand,
        "labeled": file_fingerprint(labeled_path),
        "model": args.model,
        "alpha": args.alpha,
        "folds": args.folds,
        "keep_prefix": args.keep_prefix,
        "seed": args.seed,
    }


def cmd_train(args) -> None:
    labeled_path = _require_file(args.labeled, "--labeled")
    features = _require_file(args.features, "--features")
    out = _out_dir(args)
    if args.folds and args.folds < 2:
        raise UsageError("--folds must be 0 (skip) or >= 2")
    if args.model == "logreg" and features is None:
        raise UsageError("--model logreg requires --features")
    labeled = load_labeled(labeled_path)
    config = _train_config(args, labeled_path, "train")
    if args.model == "nb":
        model = nb_train(labeled, args.alpha, strip_prefix=not args.keep_prefix)
        atomic_write_text(out / "model.json", dumps(model.to_dict()))
        trained = {"kind": "multinomial_nb", "vocab_size": len(model.vocab), "n_train": len(labeled)}
    else:
        rows = _feature_rows(labeled, features)
        fit = logreg_fit(np.vstack([r.vector for r in rows]), [1.0 if r.valence is Valence.NEGATIVE else 0.0 for r in rows])
        doc = {
            "format_version": 1,
            "kind": "logistic_regression",
            "intercept": fit.intercept,
            "weights": fit.weights,
            "standard_errors": fit.standard_errors,
            "converged": fit.converged,
            "iterations": fit.iterations,
            "deviance": fit.deviance,
        }
        atomic_write_text(out / "logreg_model.json", dumps(doc))
        trained = {"kind": "logistic_regression", "n_train": len(rows), "converged": fit.converged}
    write_report(out, "train_report", config, {"class_order": ["positive", "negative"]}, trained,
                 [f"trained {trained['kind']} on {trained['n_train']} comments"])
    if args.folds:
        _run_cv(args, labeled, dict(config), out, "cv_report")


def cmd_eval(args) -> None:
    labeled_path = _require_file(args.labeled, "--labeled")
    pred_path = _require_file(args.predictions, "--predictions")
    _require_file(args.features, "--features")
    out = _out_dir(args)
    if pred_path is None and args.folds < 2:
        raise UsageError("--folds must be >= 2")
    labeled = load_labeled(labeled_path)
    if pred_path is None:
        _run_cv(args, labeled, _train_config(args, labeled_path, "eval"), out, "cv_report")
        return
    preds = load_external_predictions(pred_path)
    matched = [(preds[lc.comment.id][0], lc.valence) for lc in labeled if lc.comment.id in preds]
    if not matched:
        raise DataError("no labeled comment has an external prediction")
    m = evaluate([p for p, _ in matched], [t for _, t in matched])
    config = {"subcommand": "eval", "labeled": file_fingerprint(labeled_path),
              "predictions": file_fingerprint(pred_path), "seed": args.seed}
    results = {"metrics": m.as_dict(), "matched": len(matched), "unmatched": len(labeled) - len(matched)}
    summary = [f"external predictions on {len(matched)} labeled comments ({results['unmatched']} unmatched)"] + [
        f"{k:<9} {m.as_dict()[k]:6.2f}" for k in ("accuracy", "precision", "recall", "fpr", "f1")
    ]
    write_report(out, "external_eval", config, {"detection_class": "negative"}, results, summary)


def cmd_classify(args) -> None:
    corpus = _require_dir(args.corpus, "--corpus", THREADS_FILE)
    model_path = _require_file(args.model_file, "--model")
    pred_path = _require_file(args.predictions, "--predictions")
    if (model_path is None) == (pred_path is None):
        raise UsageError("exactly one of --model or --predictions is required")
    out = _out_dir(args)
    threads = list(iter_threads(corpus))
    comment_ids = [c.id for t in threads for c in sorted(t.comments.values(), key=lambda c: (c.created_utc, c.id))]
    rows = []
    if model_path is not None:
        model = NBModel.load(model_path)
        for t in threads:
            for c in sorted(t.comments.values(), key=lambda c: (c.created_utc, c.id)):
                rows.append([c.id, model.classify(c.body).value, model.negative_probability(c.body)])
        source = {"model": file_fingerprint(model_path)}
    else:
        preds = load_external_predictions(pred_path)
        for cid in comment_ids:
            if cid in preds:
                v, s = preds[cid]
                rows.append([cid, v.value, "" if s is None else s])
        source = {"predictions": file_fingerprint(pred_path)}
    write_csv(out / "predictions.csv", PREDICTION_HEADER, rows)
    n_neg = sum(1 for r in rows if r[1] == "negative")
    results = {"comments": len(comment_ids), "classified": len(rows), "negative": n_neg}
    config = {"subcommand": "classify", "corpus": _corpus_fp(corpus), "seed": args.seed, **source}
    summary = [f"classified {len(rows)} of {len(comment_ids)} comments; {n_neg} negative"]
    write_report(out, "classify_report", config, {"score": "probability of negative valence"}, results, summary)


def cmd_allotax(args) -> None:
    labeled_path = _require_file(args.labeled, "--labeled")
    out = _out_dir(args)
    labeled = load_labeled(labeled_path)
    pos, neg = class_distributions(labeled, strip_prefix=not args.keep_prefix)
    if not pos or not neg:
        raise DataError("both valence classes need at least one token")
    res = rtd_contributions(pos, neg, args.alpha)
    rows = sorted(res.contributions.items(), key=lambda tc: (-abs(tc[1]), tc[0]))
    write_csv(
        out / "allotax.csv",
        ["term", "rank_pos", "rank_neg", "contribution", "side"],
        [[t, res.ranks_1[t], res.ranks_2[t], c, "positive" if c > 0 else "negative" if c < 0 else "none"] for t, c in rows],
    )
    write_csv(out / "terms_positive.csv", ["term", "count"], pos.rows())
    write_csv(out / "terms_negative.csv", ["term", "count"], neg.rows())
    top_pos = top_divergent_terms(res, args.top, side=1)
    top_neg = top_divergent_terms(res, args.top, side=2)
    results = {
        "total_divergence": res.total,
        "normalization": res.normalization,
        "types_positive": len(pos),
        "types_negative": len(neg),
        "tokens_positive": pos.total_count,
        "tokens_negative": neg.total_count,
        "top_positive": top_pos,
        "top_negative": top_neg,
    }
    config = {"subcommand": "allotax", "labeled": file_fingerprint(labeled_path), "alpha": args.alpha,
              "top": args.top, "keep_prefix": args.keep_prefix, "seed": args.seed}
    metadata = {"rtd_alpha": args.alpha, "corpus_1": "positive", "corpus_2": "negative",
                "exclusive_type_rank": "N_other + (N_exclusive + 1) / 2",
                "normalization": "disjoint-distribution total", "label_prefix_stripped": not args.keep_prefix}
    summary = [f"rank-turbulence divergence (alpha={args.alpha:.6g}): {res.total:.6f}", "", "positive side:"]
    summary += [f"  {t:<20} {c:+.6f}" for t, c in top_pos]
    summary += ["negative side:"] + [f"  {t:<20} {c:+.6f}" for t, c in top_neg]
    write_report(out, "allotax", config, metadata, results, summary)


def cmd_popularity(args) -> None:
    corpus = _require_dir(args.corpus, "--corpus", THREADS_FILE)
    classify, source = _classifier(args)
    out = _out_dir(args)
    judgements, stats = assign_post_valences(iter_threads(corpus), classify)
    if not judgements:
        raise DataError("no post could be judged")
    write_csv(
        out / "post_judgements.csv",
        ["post_id", "subreddit", "score", "valence", "judge_comment_id"],
        [[j.post_id, j.subreddit, j.post_score, j.valence.value, j.judging_comment_id] for j in judgements],
    )
    grouped = group_by_subreddit(judgements)
    curve_rows = []
    for sub, js in grouped.items():
        for s, r in cumulative_positive_ratio(js).points:
            curve_rows.append([sub, int(s), r])
    for s, r in cumulative_positive_ratio(judgements).points:
        curve_rows.append(["ALL", int(s), r])
    write_csv(out / "positive_ratio_curve.csv", ["subreddit", "score_threshold", "positive_ratio"], curve_rows)
    pop = popularity_significance(grouped)
    tests = {
        sub: {**vars(r), "p_bonferroni": pop.adjusted_p[sub]} for sub, r in pop.tests.items()
    }
    results = {"assign": vars(stats), "tests": tests, "family_size": pop.m, "excluded_single_valence": pop.excluded}
    config = {"subcommand": "analyze popularity", "corpus": _corpus_fp(corpus), "seed": args.seed, **source}
    metadata = {"cumulation": POPULARITY_CUMULATION, "groups": "x = positive-judged scores, y = negative-judged scores",
                "tie_break": "max score, then earliest created_utc, then id"}
    summary = [f"judged {stats.judged} posts ({stats.no_top_level} without top-level comments, "
               f"{stats.unclassified} unclassified)", "subreddit  n_pos n_neg  CLES   p     p_bonf"]
    for sub, r in pop.tests.items():
        summary.append(f"{sub} {r.n1} {r.n2} {r.effect_cles:.3f} {r.p_two_tailed:.3g} {pop.adjusted_p[sub]:.3g}")
    if pop.excluded:
        summary.append(f"excluded (single valence): {', '.join(pop.excluded)}")
    write_report(out, "popularity", config, metadata, results, summary)


def cmd_users(args) -> None:
    corpus = _require_dir(args.corpus, "--corpus", THREADS_FILE)
    classify, source = _classifier(args)
    out = _out_dir(args)
    threads = list(iter_threads(corpus))
    pairs = [p for t in threads for p in assign_user_judgements(t, classify)]
    tallies, p0 = tally_users(pairs, min_n=args.min_judged, p0=args.null_rate,
                              comment_counts=count_authored_comments(threads))
    write_csv(out / "user_tally.csv", ["user", "n_pos", "n_neg", "negativity_p"],
              [[t.user, t.n_pos, t.n_neg, t.negativity_p] for t in tallies])
    curves = negativity_comment_fraction(tallies, args.thresholds)
    write_csv(out / "negativity_curve.csv", ["subreddit", "threshold", "comment_fraction"],
              [[sub, th, r] for sub, c in curves.items() for th, r in c.points])
    results = {"judgement_pairs": len(pairs), "users_tallied": len(tallies), "null_rate": p0}
    gini = None
    if tallies and sum(t.n_neg for t in tallies) > 0:
        lz = lorenz_gini([t.n_neg for t in tallies])
        gini = lz.gini
        write_csv(out / "lorenz.csv", ["population_share", "negative_share"], lz.points)
    results["gini"] = gini
    significant = [t.user for t in tallies if t.negativity_p < SIGNIFICANCE]
    results["significantly_negative_users"] = len(significant)
    config = {"subcommand": "analyze users", "corpus": _corpus_fp(corpus), "min_judged": args.min_judged,
              "null_rate_override": args.null_rate, "thresholds": sorted(set(args.thresholds)), "seed": args.seed,
              **source}
    metadata = {"null_rate": p0,
                "null_rate_source": "override" if args.null_rate is not None else "global negative fraction of retained judgements",
                "significance": SIGNIFICANCE, "curve_denominator": NEGATIVITY_DENOMINATOR,
                "deleted_authors": "excluded"}
    summary = [f"{len(pairs)} judgements; {len(tallies)} users judged >= {args.min_judged} times",
               f"null negative rate {p0:.4f}",
               f"gini over negative judgements: {'n/a' if gini is None else f'{gini:.3f}'}",
               f"users with negativity p < {SIGNIFICANCE}: {len(significant)}"]
    write_report(out, "users", config, metadata, results, summary)


def cmd_demographics(args) -> None:
    corpus = _require_dir(args.corpus, "--corpus", THREADS_FILE)
    classify, source = _classifier(args)
    out = _out_dir(args)
    attribution = Attribution(args.attribution)
    records, stats = build_demo_dataset(iter_threads(corpus), classify, attribution)
    write_csv(out / "demo_dataset.csv", ["post_id", "gender", "age", "valence"],
              [[r.post_id, "M" if r.gender_code else "F", r.age, r.valence.value] for r in records])
    results: dict = {"dataset": vars(stats)}
    summary = [f"{stats.kept} records ({stats.no_tag} untagged, {stats.underage} under 18, {stats.unjudged} unjudged)"]
    errors = []
    try:
        table, chi = demo_chi_square(records)
        results["contingency"] = {"rows": ["male", "female"], "columns": ["positive", "negative"], "counts": table}
        results["chi_square"] = vars(chi)
        summary += ["          positive negative", f"male      {table[0, 0]} {table[0, 1]}",
                    f"female    {table[1, 0]} {table[1, 1]}",
                    f"chi2(1, {chi.n}) = {chi.chi2:.1f}, p = {chi.p:.3g}, phi = {chi.phi:.3f}"]
    except ValueError as exc:
        errors.append(f"chi-square: {exc}")
    try:
        reg = demo_regression(records)
        results["regression"] = {"rows": reg.rows(), "converged": reg.fit.converged,
                                 "diagnostic": reg.fit.diagnostic}
        write_csv(out / "demo_regression.csv",
                  ["variable", "coefficient", "se", "p_value", "ci_low", "ci_high", "odds_percent"],
                  [[r["variable"], r["coefficient"], r["se"], r["p_value"], r["ci_low"], r["ci_high"],
                    "" if r["odds_percent"] is None else r["odds_percent"]] for r in reg.rows()])
        summary.append("variable    coef     95% CI               odds change")
        for r in reg.rows():
            odds = "" if r["odds_percent"] is None else f"{r['odds_percent']:+.2f}%"
            summary.append(f"{r['variable']:<11} {r['coefficient']:+.4f} ({r['ci_low']:+.4f}, {r['ci_high']:+.4f}) {odds}")
    except ValueError as exc:
        errors.append(f"regression: {exc}")
    results["errors"] = errors
    config = {"subcommand": "analyze demographics", "corpus": _corpus_fp(corpus),
              "attribution": attribution.value, "seed": args.seed, **source}
    metadata = {"attribution_policy": attribution.value, "response": "1 = negative judgement",
                "gender_code": "0 female, 1 male", "min_age": 18, "odds_percent": "100 * (exp(coef) - 1)"}
    summary += [f"error: {e}" for e in errors]
    write_report(out, "demographics", config, metadata, results, summary)
    if errors:
        raise DataError("; ".join(errors))


def cmd_awry(args) -> None:
    conv_path = _require_file(args.conversations, "--conversations")
    model_path = _require_file(args.model_file, "--model")
    if model_path is None:
        raise UsageError("--model is required")
    out = _out_dir(args)
    convs = load_conversations(conv_path)
    model = NBModel.load(model_path)
    run = run_awry(convs, model.classify, args.mode)
    truths = {c.id: c.derails for c in convs}
    eligible = {p.conversation_id for p in run.predictions}
    metrics = evaluate_awry(run.predictions, {k: v for k, v in truths.items() if k in eligible}) if run.predictions else None
    write_csv(out / f"awry_{args.mode}_predictions.csv",
              ["conversation_id", "predicted_derail", "trigger_index", "derails"],
              [[p.conversation_id, int(p.predicted_derail), "" if p.trigger_index is None else p.trigger_index,
                int(truths[p.conversation_id])] for p in run.predictions])
    if metrics is not None:
        write_csv(out / f"awry_{args.mode}_table.csv", RESULTS_HEADER, [results_row(args.label, args.mode, metrics)])
    results = {"conversations": len(convs), "evaluated": len(run.predictions), "skipped": run.skipped,
               "metrics": metrics.as_dict() if metrics else None}
    config = {"subcommand": "awry", "conversations": file_fingerprint(conv_path), "model": file_fingerprint(model_path),
              "mode": args.mode, "seed": args.seed}
    metadata = {"detection_class": "derail", "online_start_index": ONLINE_START_INDEX,
                "offline_utterance_index": 2, "index_base": 1}
    summary = [f"{args.mode}: evaluated {len(run.predictions)} conversations, skipped {run.skipped}"]
    if metrics:
        summary.append("  ".join(RESULTS_HEADER))
        summary.append("  ".join(results_row(args.label, args.mode, metrics)))
    write_report(out, f"awry_{args.mode}", config, metadata, results, summary)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aita-judge", description="Moral-judgement valence pipeline over Reddit dumps.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(p):
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV})")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    def classifier_source(p):
        p.add_argument("--model", dest="model_file", help="naive Bayes model.json")
        p.add_argument("--predictions", help="predictions CSV (comment_id,valence,score)")

    p = sub.add_parser("ingest", help="parse dumps, build threads, apply corpus filters")
    p.add_argument("--posts", required=True)
    p.add_argument("--comments", required=True)
    p.add_argument("--min-comments", type=int, default=50)
    p.add_argument("--from", dest="date_from", type=_date)
    p.add_argument("--to", dest="date_to", type=_date)
    p.add_argument("--subreddits", help="comma-separated allow-list")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("label", help="extract prefix labels from top-level comments")
    p.add_argument("--corpus", required=True)
    common(p)
    p.set_defaults(func=cmd_label)

    for name, func, helptext in (("train", cmd_train, "train a classifier (and cross-validate)"),
                                 ("eval", cmd_eval, "cross-validation or external-prediction evaluation")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--labeled", required=True)
        p.add_argument("--model", choices=("nb", "logreg"), default="nb")
        p.add_argument("--features", help="feature CSV (comment_id,f0,...) for --model logreg")
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--folds", type=int, default=5 if name == "eval" else 0)
        p.add_argument("--keep-prefix", action="store_true", help="train on comment text including its label")
        if name == "eval":
            p.add_argument("--predictions", help="score an external predictions CSV instead")
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("classify", help="write a predictions CSV for every comment in a corpus")
    p.add_argument("--corpus", required=True)
    classifier_source(p)
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("allotax", help="rank-turbulence divergence between valence classes")
    p.add_argument("--labeled", required=True)
    p.add_argument("--alpha", type=_fraction, default=DEFAULT_ALPHA)
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--keep-prefix", action="store_true", help="count the label token itself")
    common(p)
    p.set_defaults(func=cmd_allotax)

    p = sub.add_parser("analyze", help="popularity, user and demographic analyses")
    an = p.add_subparsers(dest="analysis", parser_class=_Parser, required=True)
    q = an.add_parser("popularity")
    q.add_argument("--corpus", required=True)
    classifier_source(q)
    common(q)
    q.set_defaults(func=cmd_popularity)
    q = an.add_parser("users")
    q.add_argument("--corpus", required=True)
    q.add_argument("--min-judged", type=int, default=50)
    q.add_argument("--null-rate", type=float)
    q.add_argument("--thresholds", type=_float_list, default=list(DEFAULT_THRESHOLDS))
    classifier_source(q)
    common(q)
    q.set_defaults(func=cmd_users)
    q = an.add_parser("demographics")
    q.add_argument("--corpus", required=True)
    q.add_argument("--attribution", choices=[a.value for a in Attribution], default=Attribution.FIRST_PERSON_TAG.value)
    classifier_source(q)
    common(q)
    q.set_defaults(func=cmd_demographics)

    p = sub.add_parser("awry", help="conversation-derailment transfer evaluation")
    p.add_argument("--conversations", required=True)
    p.add_argument("--model", dest="model_file", required=True)
    p.add_argument("--mode", choices=("offline", "online"), default="offline")
    p.add_argument("--label", default="AITA", help="model name in the results table")
    common(p)
    p.set_defaults(func=cmd_awry)
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if getattr(args, "null_rate", None) is not None and not 0.0 < args.null_rate < 1.0:
            raise UsageError("--null-rate must lie in (0, 1)")
        if getattr(args, "alpha", 1.0) <= 0:
            raise UsageError("--alpha must be positive")
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, IngestionError, ModelFormatError, ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())
