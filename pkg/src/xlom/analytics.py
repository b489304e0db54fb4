"""Document-level aggregation: topic distributions, sentiment summaries, Sankey flows.

A "document" here is either an article or the comment section under one
article.  Garbage clusters never enter a topic distribution; their share of
a document's sentences is reported separately.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import RawDocument, Sentence
from .errors import AnalyticsError
from .sentiment import SentimentScore
from .topics import TopicModel

logger = logging.getLogger(__name__)

QUANTILE_METHOD = "linear"  # interpolation at position p * (n - 1)


@dataclass(frozen=True)
class DocScope:
    scope_id: str
    kind: str  # "article" | "comment_section"
    members: tuple[str, ...]


def build_scopes(documents: Iterable[RawDocument]) -> list[DocScope]:
    """One scope per article plus one per non-empty comment section.

    Comments referencing an unknown article are grouped under a synthetic
    scope for their parent id, with a warning.
    """
    docs = list(documents)
    articles = [d for d in docs if d.kind == "article"]
    known = {d.doc_id for d in articles}
    sections: dict[str, list[str]] = {}
    orphans: set[str] = set()
    for d in docs:
        if d.kind != "comment":
            continue
        sections.setdefault(d.parent_id, []).append(d.doc_id)
        if d.parent_id not in known:
            orphans.add(d.parent_id)
    for parent in sorted(orphans):
        logger.warning(
            "comments reference unknown article %r; grouped under a synthetic scope",
            parent,
        )
    scopes = [
        DocScope(scope_id=a.doc_id, kind="article", members=(a.doc_id,))
        for a in sorted(articles, key=lambda d: d.doc_id)
    ]
    for parent in sorted(sections):
        scopes.append(
            DocScope(
                scope_id=f"{parent}::comments",
                kind="comment_section",
                members=tuple(sorted(sections[parent])),
            )
        )
    scopes.sort(key=lambda s: s.scope_id)
    return scopes


@dataclass
class TopicDistribution:
    scope_id: str
    kind: str
    probs: dict[str, float]
    garbage_share: float
    n_sentences: int


def topic_distribution(
    scope: DocScope,
    assignments: Mapping[str, int],
    model: TopicModel,
    store: Sequence[Sentence],
) -> TopicDistribution:
    """Normalized per-topic sentence counts for one scope.

    Garbage-cluster sentences are excluded from the normalization and
    reported as ``garbage_share`` of all scope sentences.
    """
    member_set = set(scope.members)
    sent_ids = [s.sent_id for s in store if s.doc_id in member_set]
    if not sent_ids:
        raise AnalyticsError(f"scope {scope.scope_id!r} has no sentences")
    missing = [sid for sid in sent_ids if sid not in assignments]
    if missing:
        raise AnalyticsError(
            f"scope {scope.scope_id!r}: {len(missing)} sentences lack assignments"
        )
    garbage = model.garbage_clusters()
    counts: dict[str, int] = {}
    n_garbage = 0
    for sid in sent_ids:
        c = assignments[sid]
        if c in garbage:
            n_garbage += 1
            continue
        label = model.label_of(c) or f"topic-{c}"
        counts[label] = counts.get(label, 0) + 1
    total = sum(counts.values())
    probs = {label: n / total for label, n in sorted(counts.items())} if total else {}
    return TopicDistribution(
        scope_id=scope.scope_id,
        kind=scope.kind,
        probs=probs,
        garbage_share=n_garbage / len(sent_ids),
        n_sentences=len(sent_ids),
    )


@dataclass
class SentimentSummary:
    scope_id: str
    topic: str
    n: int
    median: Optional[float]
    q1: Optional[float]
    q3: Optional[float]


def quantiles(values: Sequence[float]) -> tuple[float, float, float]:
    """(q1, median, q3) by linear interpolation at positions p * (n - 1)."""
    arr = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0], method=QUANTILE_METHOD)
    return float(q1), float(med), float(q3)


def sentiment_summary(scope_id: str, topic: str,
                      polarities: Sequence[float]) -> SentimentSummary:
    """Quartile summary of non-filtered polarities; n=0 leaves quantiles absent."""
    if not polarities:
        return SentimentSummary(scope_id, topic, 0, None, None, None)
    q1, med, q3 = quantiles(polarities)
    return SentimentSummary(scope_id, topic, len(polarities), med, q1, q3)


def summarize_sentiments(
    scopes: Sequence[DocScope],
    store: Sequence[Sentence],
    assignments: Mapping[str, int],
    model: TopicModel,
    scores: Sequence[SentimentScore],
) -> list[SentimentSummary]:
    """Per (scope, topic) sentiment summaries over non-filtered sentences.

    Zero-polarity (filtered) sentences are excluded before the quartiles,
    but a (scope, topic) pair seen in the scope still emits a row (with
    n=0) so report consumers see the full topic coverage.
    """
    by_doc: dict[str, list[Sentence]] = {}
    for s in store:
        by_doc.setdefault(s.doc_id, []).append(s)
    score_of = {sc.sent_id: sc for sc in scores}
    garbage = model.garbage_clusters()
    out: list[SentimentSummary] = []
    for scope in scopes:
        per_topic: dict[str, list[float]] = {}
        for doc_id in scope.members:
            for s in by_doc.get(doc_id, ()):
                c = assignments.get(s.sent_id)
                if c is None or c in garbage:
                    continue
                label = model.label_of(c) or f"topic-{c}"
                values = per_topic.setdefault(label, [])
                sc = score_of.get(s.sent_id)
                if sc is not None and not sc.filtered:
                    values.append(sc.polarity)
        for topic in sorted(per_topic):
            out.append(sentiment_summary(scope.scope_id, topic, per_topic[topic]))
    return out


@dataclass(frozen=True)
class SankeyFlow:
    from_run: str
    from_cluster: int
    to_run: str
    to_cluster: int
    count: int


@dataclass
class SankeyResult:
    flows: list[SankeyFlow]
    n_common: int
    n_dropped: int


def sankey_flows(
    assignments_a: Mapping[str, int],
    assignments_b: Mapping[str, int],
    *,
    tag_a: str = "a",
    tag_b: str = "b",
) -> SankeyResult:
    """Counts of sentences moving between the clusters of two runs.

    Runs over different sentence sets are intersected (the dropped count is
    reported); fully disjoint sets are an error.  Zero-count pairs are
    omitted.
    """
    common = sorted(set(assignments_a) & set(assignments_b))
    if not common:
        raise AnalyticsError("runs share no sentences; cannot build flows")
    n_dropped = (len(assignments_a) - len(common)) + (len(assignments_b) - len(common))
    if n_dropped:
        logger.warning("sankey: %d sentences outside the common set were dropped", n_dropped)
    pairs: dict[tuple[int, int], int] = {}
    for sid in common:
        key = (assignments_a[sid], assignments_b[sid])
        pairs[key] = pairs.get(key, 0) + 1
    flows = [
        SankeyFlow(tag_a, ca, tag_b, cb, count)
        for (ca, cb), count in sorted(pairs.items())
    ]
    return SankeyResult(flows=flows, n_common=len(common), n_dropped=n_dropped)


def build_sankey_report(
    runs: Sequence,  # ClusteringRun
    cluster_labels: Mapping[int, Mapping[int, Optional[str]]] | None = None,
    cluster_garbage: Mapping[int, Mapping[int, bool]] | None = None,
) -> dict:
    """Plot-ready Sankey JSON for a ladder of runs (nodes + indexed links)."""
    if len(runs) < 2:
        raise AnalyticsError("a Sankey ladder needs at least two runs")
    nodes = []
    node_index: dict[tuple[str, int], int] = {}
    for run in runs:
        tag = f"k{run.k}"
        labels = (cluster_labels or {}).get(run.k, {})
        garbage = (cluster_garbage or {}).get(run.k, {})
        for c in range(run.k):
            node_index[(tag, c)] = len(nodes)
            nodes.append({
                "run": tag,
                "cluster": c,
                "label": labels.get(c),
                "garbage": bool(garbage.get(c, False)),
            })
    links = []
    total_dropped = 0
    for run_a, run_b in zip(runs, runs[1:]):
        result = sankey_flows(
            run_a.assignments, run_b.assignments,
            tag_a=f"k{run_a.k}", tag_b=f"k{run_b.k}",
        )
        total_dropped += result.n_dropped
        for flow in result.flows:
            links.append({
                "source": node_index[(flow.from_run, flow.from_cluster)],
                "target": node_index[(flow.to_run, flow.to_cluster)],
                "count": flow.count,
            })
    return {
        "nodes": nodes,
        "links": links,
        "dropped_sentences": total_dropped,
    }


def write_distributions(
    distributions: Sequence[TopicDistribution],
    json_path: str | Path,
    csv_path: str | Path,
) -> None:
    payload = {
        "garbage_excluded_from_normalization": True,
        "distributions": [
            {
                "scope_id": d.scope_id,
                "kind": d.kind,
                "probs": d.probs,
                "garbage_share": d.garbage_share,
                "n_sentences": d.n_sentences,
            }
            for d in distributions
        ],
    }
    Path(json_path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope_id", "kind", "topic", "prob", "garbage_share", "n_sentences"])
        for d in distributions:
            for topic, prob in sorted(d.probs.items()):
                writer.writerow([d.scope_id, d.kind, topic, repr(prob),
                                 repr(d.garbage_share), d.n_sentences])


def write_summaries(
    summaries: Sequence[SentimentSummary],
    json_path: str | Path,
    csv_path: str | Path,
) -> None:
    payload = {
        "quantile_method": QUANTILE_METHOD,
        "filtered_excluded": True,
        "summaries": [
            {
                "scope_id": s.scope_id,
                "topic": s.topic,
                "n": s.n,
                "median": s.median,
                "q1": s.q1,
                "q3": s.q3,
            }
            for s in summaries
        ],
    }
    Path(json_path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope_id", "topic", "n", "median", "q1", "q3"])
        for s in summaries:
            writer.writerow([
                s.scope_id, s.topic, s.n,
                "" if s.median is None else repr(s.median),
                "" if s.q1 is None else repr(s.q1),
                "" if s.q3 is None else repr(s.q3),
            ])
