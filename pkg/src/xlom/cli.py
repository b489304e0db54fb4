"""Command-line interface: one subcommand per pipeline stage plus `run`.

Every failure exits nonzero with a stage-tagged message on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from . import __version__
from .analytics import (build_sankey_report, build_scopes, summarize_sentiments,
                        topic_distribution, write_distributions, write_summaries)
from .clustering import ClusteringRun, fit_run, sweep
from .corpus import TokenizerRules, ingest, load_store, read_documents
from .embeddings import fetch_embeddings, load_embeddings, write_embeddings
from .errors import XlomError
from .fixture import make_fixture
from .pipeline import PipelineConfig, run_pipeline
from .sentiment import load_lexicon, score_corpus, write_scores
from .topics import (TopicModel, build_topic_model, load_label_map,
                     load_word_file, write_top_sentences_csv, write_top_words_csv)


def _langs(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _pairs(values: list[str]) -> dict[str, Path]:
    out = {}
    for item in values:
        if "=" not in item:
            raise XlomError(f"expected lang=path, got {item!r}")
        lang, path = item.split("=", 1)
        out[lang.strip()] = Path(path)
    return out


def cmd_ingest(args) -> int:
    rules = TokenizerRules.bundled(args.langs)
    report = ingest(args.input, args.out, args.langs, rules)
    overall = report.stats.overall
    print(f"ingested {report.n_documents} documents -> {overall.kept} sentences "
          f"({overall.dropped_short} dropped short, {len(report.errors)} bad lines)")
    return 0


def cmd_embed(args) -> int:
    store = load_store(args.store)
    if args.provider == "file":
        if not args.matrix or not args.ids:
            raise XlomError("--provider file needs --matrix and --ids")
        matrix = load_embeddings(args.matrix, args.ids, normalize=not args.no_normalize)
        matrix = matrix.subset([s.sent_id for s in store])
    else:
        if not args.endpoint:
            raise XlomError("--provider http needs --endpoint")
        matrix = fetch_embeddings(args.endpoint, store, args.batch_size)
        if not args.no_normalize:
            matrix.normalize()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(matrix, out / "matrix.emb", out / "matrix.ids")
    print(f"wrote {len(matrix)} x {matrix.dim} embeddings to {out}")
    return 0


def cmd_cluster(args) -> int:
    matrix = load_embeddings(args.matrix, args.ids, normalize=False)
    run = fit_run(matrix, k=args.k, seed=args.seed, n_init=args.n_init,
                  max_iter=args.max_iter, tol=args.tol)
    run.save(args.out)
    print(f"k={run.k} inertia={run.inertia:.6f} aic={run.aic:.3f} "
          f"iterations={run.iterations} converged={run.converged}")
    return 0


def cmd_sweep(args) -> int:
    matrix = load_embeddings(args.matrix, args.ids, normalize=False)
    result = sweep(matrix, k_min=args.k_min, k_max=args.k_max, seed=args.seed,
                   n_init=args.n_init, max_iter=args.max_iter, tol=args.tol)
    if args.runs_dir:
        result.save(args.runs_dir)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(
            json.dumps(result.curves_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    print(f"selected_k={result.selected_k}")
    return 0


def cmd_topics(args) -> int:
    store = load_store(args.store)
    matrix = load_embeddings(args.matrix, args.ids, normalize=False)
    run = ClusteringRun.load(args.run)
    label_map = load_label_map(args.labels) if args.labels else None
    domain = {}
    for item in args.domain_stopwords or []:
        lang, path = item.split("=", 1)
        domain[lang] = load_word_file(path)
    model = build_topic_model(
        store, run, matrix,
        n_top_words=args.top_words,
        n_top_sentences=args.top_sentences,
        min_df=args.min_df,
        stem_tokens=not args.no_stem,
        domain_stopwords=domain,
        garbage_threshold_len=args.garbage_threshold,
        label_map=label_map,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "topics.json")
    write_top_words_csv(model, out / "top_words.csv")
    write_top_sentences_csv(model, out / "top_sentences.csv")
    garbage = sorted(model.garbage_clusters())
    print(f"topic model for k={model.k}; garbage clusters: {garbage or 'none'}")
    return 0


def cmd_sentiment(args) -> int:
    store = load_store(args.store)
    lexicons = {lang: load_lexicon(p) for lang, p in _pairs(args.lexicon).items()}
    scores = score_corpus(store, lexicons)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_scores(args.out, scores)
    n_filtered = sum(1 for s in scores if s.filtered)
    print(f"scored {len(scores)} sentences ({n_filtered} filtered at polarity 0)")
    return 0


def cmd_aggregate(args) -> int:
    docs, _, _ = read_documents(args.docs)
    store = load_store(args.store)
    run = ClusteringRun.load(args.run)
    model = TopicModel.load(args.topics)
    from .sentiment import load_scores
    scores = load_scores(args.sentiment)
    kinds = set(args.scopes)
    scopes = [
        s for s in build_scopes(docs)
        if ("article" in kinds and s.kind == "article")
        or ("comments" in kinds and s.kind == "comment_section")
    ]
    assignments = run.assignments
    distributions = [topic_distribution(s, assignments, model, store) for s in scopes]
    summaries = summarize_sentiments(scopes, store, assignments, model, scores)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_distributions(distributions, out / "distributions.json", out / "distributions.csv")
    write_summaries(summaries, out / "summaries.json", out / "summaries.csv")
    print(f"aggregated {len(scopes)} scopes")
    return 0


def cmd_sankey(args) -> int:
    names = [n.strip() for n in args.runs.split(",") if n.strip()]
    # run directories are zero-padded (k05); accept bare names like k5 too
    def resolve(name: str) -> Path:
        base = Path(args.runs_dir)
        if not (base / name).exists() and re.fullmatch(r"k\d+", name):
            padded = f"k{int(name[1:]):02d}"
            if (base / padded).exists():
                return base / padded
        return base / name

    runs = [ClusteringRun.load(resolve(name)) for name in names]
    report = build_sankey_report(runs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(report['links'])} flows over {len(runs)} runs")
    return 0


def cmd_run(args) -> int:
    config = PipelineConfig.from_json(args.config)
    if args.out:
        config.out = Path(args.out)
    result = run_pipeline(config, force=args.force)
    if result.executed:
        print("executed stages: " + ", ".join(result.executed))
    else:
        print("all stages up to date")
    return 0


def cmd_fixture(args) -> int:
    result = make_fixture(
        args.out,
        n_topics=args.topics,
        n_per_topic=args.per_topic,
        langs=tuple(args.langs),
        dim=args.dim,
        noise=args.noise,
        seed=args.seed,
    )
    print(f"fixture: {result.n_sentences} sentences, "
          f"{args.topics} topics x {args.per_topic} x {len(args.langs)} langs -> {result.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xlom",
        description="Cross-lingual opinion mining pipeline",
    )
    parser.add_argument("--version", action="version", version=f"xlom {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tokenize raw documents into the sentence store")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--langs", type=_langs, required=True, help="comma-separated, e.g. en,de")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed", help="attach embeddings from a file or HTTP provider")
    p.add_argument("--provider", choices=("file", "http"), required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--matrix")
    p.add_argument("--ids")
    p.add_argument("--endpoint")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster", help="K-means at a fixed k")
    p.add_argument("--matrix", required=True)
    p.add_argument("--ids", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sweep", help="K-means over a k range with AIC selection")
    p.add_argument("--matrix", required=True)
    p.add_argument("--ids", required=True)
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=30)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--runs-dir", help="persist per-k runs here")
    p.add_argument("--out", help="write the inertia/AIC curves JSON here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("topics", help="clarity top words and top sentences for one run")
    p.add_argument("--run", required=True, help="run directory (from cluster/sweep)")
    p.add_argument("--store", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--ids", required=True)
    p.add_argument("--top-words", type=int, default=10)
    p.add_argument("--top-sentences", type=int, default=3)
    p.add_argument("--min-df", type=int, default=3)
    p.add_argument("--no-stem", action="store_true")
    p.add_argument("--labels", help="manual label map JSON")
    p.add_argument("--domain-stopwords", action="append", metavar="LANG=FILE")
    p.add_argument("--garbage-threshold", type=float, default=25.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("sentiment", help="lexicon polarity per sentence")
    p.add_argument("--store", required=True)
    p.add_argument("--lexicon", action="append", required=True, metavar="LANG=FILE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sentiment)

    p = sub.add_parser("aggregate", help="per-document topic and sentiment reports")
    p.add_argument("--docs", required=True, help="raw documents JSONL")
    p.add_argument("--store", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--topics", required=True, help="topics.json")
    p.add_argument("--sentiment", required=True, help="sentiment.jsonl")
    p.add_argument("--scopes", type=_langs, default=["article", "comments"],
                   help="which scopes to aggregate: article,comments")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("sankey", help="topic-evolution flows across saved runs")
    p.add_argument("--runs-dir", required=True)
    p.add_argument("--runs", required=True, help="comma-separated run names, e.g. k05,k10,k15")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sankey)

    p = sub.add_parser("run", help="run the whole pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the configured output directory")
    p.add_argument("--force", action="store_true", help="re-run stages even if fresh")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fixture", help="generate the synthetic desk-scale corpus")
    p.add_argument("--topics", type=int, default=5)
    p.add_argument("--per-topic", type=int, default=40)
    p.add_argument("--langs", type=_langs, default=["en", "de"])
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except XlomError as exc:
        print(f"xlom {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"xlom {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
