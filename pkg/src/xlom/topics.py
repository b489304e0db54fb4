"""Per-cluster, per-language topic terms and representative sentences.

Terms are ranked by the clarity score

    score(w) = t_c(w) * log2(t_c(w) / t(w))

where t_c and t are the L1-normalized tf-idf masses of w inside the
cluster and over the whole corpus of that language.  Summed over the
cluster vocabulary this is the KL divergence between the two term
distributions, so it is non-negative and peaks on terms that are both
frequent in the cluster and distinctive against the corpus.
"""

from __future__ import annotations

import csv
import json
import math
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Sentence
from .embeddings import EmbeddingMatrix, cosine
from .errors import TopicsError

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

# One suffix is stripped per token when the stem keeps >= 3 characters.
DEFAULT_SUFFIXES: dict[str, tuple[str, ...]] = {
    "en": ("ing", "ed", "s"),
    "de": ("en", "er", "e"),
}
MIN_TOKEN_LEN = 2
MIN_STEM_LEN = 3
DEFAULT_MIN_DF = 3
GARBAGE_THRESHOLD_LEN = 25.0


def fold(text: str) -> str:
    """Lowercase, NFC, and fold diacritics (ä→a, ß→ss) for stable term keys."""
    text = unicodedata.normalize("NFC", text).lower().replace("ß", "ss")
    decomposed = unicodedata.normalize("NFD", text)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return unicodedata.normalize("NFC", stripped)


def stem(token: str, suffixes: Sequence[str]) -> str:
    for suffix in sorted(suffixes, key=len, reverse=True):
        if token.endswith(suffix) and len(token) - len(suffix) >= MIN_STEM_LEN:
            return token[: -len(suffix)]
    return token


def tokenize_terms(
    text: str,
    lang: str | None = None,
    *,
    stem_tokens: bool = True,
    stopwords: frozenset[str] = frozenset(),
    suffixes: Mapping[str, Sequence[str]] | None = None,
) -> list[str]:
    """Normalized term tokens: folded, punctuation-free, stopword-filtered."""
    table = suffixes if suffixes is not None else DEFAULT_SUFFIXES
    lang_suffixes = table.get(lang or "", ())
    out = []
    for token in _WORD_RE.findall(fold(text)):
        if len(token) < MIN_TOKEN_LEN or token in stopwords:
            continue
        if stem_tokens and lang_suffixes:
            token = stem(token, lang_suffixes)
        out.append(token)
    return out


def load_stopwords(lang: str) -> frozenset[str]:
    """Bundled generic stopword list, folded; empty for unknown languages."""
    try:
        text = resources.files("xlom").joinpath("data", f"stopwords_{lang}.txt").read_text("utf-8")
    except FileNotFoundError:
        return frozenset()
    return frozenset(fold(w.strip()) for w in text.splitlines() if w.strip())


def load_word_file(path: str | Path) -> frozenset[str]:
    """A user word list (one word per line), folded like term tokens."""
    text = Path(path).read_text("utf-8")
    return frozenset(fold(w.strip()) for w in text.splitlines() if w.strip())


@dataclass
class TermStats:
    """L1-normalized tf-idf masses per cluster and for the whole language."""

    lang: str
    n_sentences: int
    doc_freq: dict[str, int]
    corpus_mass: dict[str, float]
    cluster_mass: dict[int, dict[str, float]]
    min_df: int


def term_stats(
    sentences: Iterable[Sentence],
    assignments: Mapping[str, int],
    lang: str,
    *,
    min_df: int = DEFAULT_MIN_DF,
    stem_tokens: bool = True,
    stopwords: frozenset[str] | None = None,
    suffixes: Mapping[str, Sequence[str]] | None = None,
) -> TermStats:
    """Term masses for one language given sentence->cluster assignments.

    tf counts token occurrences in a scope (one cluster, or the corpus);
    idf(w) = ln((1+N)/(1+df(w))) + 1 over the language's sentences; raw
    tf*idf is L1-normalized per scope.  Terms with df < min_df are dropped
    before normalization.  Generic stopwords are removed before counting.
    """
    stop = stopwords if stopwords is not None else load_stopwords(lang)
    lang_sents = [s for s in sentences if s.lang == lang]
    missing = [s.sent_id for s in lang_sents if s.sent_id not in assignments]
    if missing:
        raise TopicsError(
            f"{len(missing)} {lang} sentences lack assignments (first: {missing[0]!r})"
        )
    n = len(lang_sents)
    tokens_of: dict[str, list[str]] = {}
    df: dict[str, int] = {}
    for s in lang_sents:
        toks = tokenize_terms(s.text, lang, stem_tokens=stem_tokens,
                              stopwords=stop, suffixes=suffixes)
        tokens_of[s.sent_id] = toks
        for w in set(toks):
            df[w] = df.get(w, 0) + 1

    vocab = {w for w, c in df.items() if c >= min_df}
    idf = {w: math.log((1 + n) / (1 + df[w])) + 1.0 for w in vocab}

    def normalized_mass(counts: dict[str, int]) -> dict[str, float]:
        raw = {w: c * idf[w] for w, c in counts.items() if w in vocab}
        total = sum(raw.values())
        if total <= 0.0:
            return {}
        return {w: v / total for w, v in raw.items()}

    corpus_counts: dict[str, int] = {}
    cluster_counts: dict[int, dict[str, int]] = {}
    for s in lang_sents:
        c = assignments[s.sent_id]
        per_cluster = cluster_counts.setdefault(c, {})
        for w in tokens_of[s.sent_id]:
            corpus_counts[w] = corpus_counts.get(w, 0) + 1
            per_cluster[w] = per_cluster.get(w, 0) + 1

    return TermStats(
        lang=lang,
        n_sentences=n,
        doc_freq=df,
        corpus_mass=normalized_mass(corpus_counts),
        cluster_mass={c: normalized_mass(cnt) for c, cnt in cluster_counts.items()},
        min_df=min_df,
    )


@dataclass(frozen=True)
class TermScore:
    term: str
    score: float


def clarity(stats: TermStats, cluster: int) -> list[TermScore]:
    """Clarity-ranked terms of one cluster, descending, ties lexicographic."""
    mass = stats.cluster_mass.get(cluster)
    if not mass:
        raise TopicsError(f"cluster {cluster} has no {stats.lang} sentences")
    scores = []
    for w, t_c in mass.items():
        if t_c <= 0.0:
            continue
        t = stats.corpus_mass.get(w, 0.0)
        if t <= 0.0:
            raise TopicsError(
                f"term {w!r} has cluster mass but no corpus mass; stats are inconsistent"
            )
        scores.append(TermScore(w, t_c * math.log2(t_c / t)))
    scores.sort(key=lambda ts: (-ts.score, ts.term))
    return scores


@dataclass
class ClusterTopic:
    cluster: int
    label: Optional[str] = None
    garbage: bool = False
    mean_top_sentence_len: float = 0.0
    top_words: dict[str, list[TermScore]] = field(default_factory=dict)
    top_sentences: dict[str, list[tuple[str, float]]] = field(default_factory=dict)


@dataclass
class TopicModel:
    k: int
    clusters: list[ClusterTopic]
    metadata: dict = field(default_factory=dict)

    def cluster(self, index: int) -> ClusterTopic:
        return self.clusters[index]

    def label_of(self, index: int) -> Optional[str]:
        return self.clusters[index].label

    def garbage_clusters(self) -> set[int]:
        return {c.cluster for c in self.clusters if c.garbage}

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "metadata": self.metadata,
            "clusters": [
                {
                    "cluster": c.cluster,
                    "label": c.label,
                    "garbage": c.garbage,
                    "mean_top_sentence_len": c.mean_top_sentence_len,
                    "top_words": {
                        lang: [{"term": t.term, "score": t.score} for t in terms]
                        for lang, terms in sorted(c.top_words.items())
                    },
                    "top_sentences": {
                        lang: [{"sent_id": sid, "cosine": cos} for sid, cos in rows]
                        for lang, rows in sorted(c.top_sentences.items())
                    },
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TopicModel":
        clusters = []
        for row in obj["clusters"]:
            clusters.append(
                ClusterTopic(
                    cluster=row["cluster"],
                    label=row.get("label"),
                    garbage=row.get("garbage", False),
                    mean_top_sentence_len=row.get("mean_top_sentence_len", 0.0),
                    top_words={
                        lang: [TermScore(t["term"], t["score"]) for t in terms]
                        for lang, terms in row.get("top_words", {}).items()
                    },
                    top_sentences={
                        lang: [(r["sent_id"], r["cosine"]) for r in rows]
                        for lang, rows in row.get("top_sentences", {}).items()
                    },
                )
            )
        return cls(k=obj["k"], clusters=clusters, metadata=obj.get("metadata", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "TopicModel":
        return cls.from_json(json.loads(Path(path).read_text("utf-8")))


def top_words(ranked: Sequence[TermScore], n: int = 10,
              domain_filter: frozenset[str] = frozenset()) -> list[TermScore]:
    """Top n of a clarity ranking after dropping domain-filter words.

    Generic stopwords were already removed before scoring; domain-specific
    high-frequency words are removed from the ranked list only.
    """
    return [t for t in ranked if t.term not in domain_filter][:n]


def top_sentences(
    X: EmbeddingMatrix,
    centroid: np.ndarray,
    member_ids: Sequence[str],
    m: int = 3,
) -> list[tuple[str, float]]:
    """The m member sentences closest to the centroid by cosine, descending.

    Ties break by sent_id.  An empty member list is legal (a topic may be
    dominated by one language) and yields an empty list.
    """
    scored = [(sid, cosine(X.row(sid), centroid)) for sid in member_ids]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:m]


@dataclass(frozen=True)
class LabelEntry:
    label: Optional[str] = None
    garbage: Optional[bool] = None


LabelMap = dict[int, LabelEntry]


def load_label_map(path: str | Path) -> LabelMap:
    obj = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(obj, dict):
        raise TopicsError(f"{path}: label map must be a JSON object")
    out: LabelMap = {}
    for key, entry in obj.items():
        try:
            cluster = int(key)
        except ValueError:
            raise TopicsError(f"{path}: non-integer cluster key {key!r}") from None
        if not isinstance(entry, dict):
            raise TopicsError(f"{path}: entry for cluster {key} must be an object")
        out[cluster] = LabelEntry(label=entry.get("label"), garbage=entry.get("garbage"))
    return out


def flag_garbage(model: TopicModel, threshold_len: float = GARBAGE_THRESHOLD_LEN,
                 threshold_margin: float = 0.0) -> TopicModel:
    """Auto-flag clusters whose pooled top sentences are short.

    A cluster is flagged when the mean character length of its top-10
    sentences (both languages pooled) falls below threshold_len minus the
    margin.  Label-map overrides are applied later and win either way.
    """
    for c in model.clusters:
        c.garbage = c.mean_top_sentence_len < (threshold_len - threshold_margin)
    return model


def apply_labels(model: TopicModel, label_map: LabelMap | None) -> TopicModel:
    """Apply manual labels and garbage overrides; default-label the rest."""
    label_map = label_map or {}
    bad = sorted(c for c in label_map if not (0 <= c < model.k))
    if bad:
        raise TopicsError(f"label map names out-of-range clusters: {bad} (k={model.k})")
    for c in model.clusters:
        entry = label_map.get(c.cluster)
        if entry is not None:
            if entry.garbage is not None:
                c.garbage = entry.garbage
            if entry.label is not None:
                c.label = entry.label
        if c.label is None and not c.garbage:
            c.label = f"topic-{c.cluster}"
    return model


def build_topic_model(
    store: Sequence[Sentence],
    run,
    X: EmbeddingMatrix,
    *,
    langs: Sequence[str] | None = None,
    n_top_words: int = 10,
    n_top_sentences: int = 3,
    min_df: int = DEFAULT_MIN_DF,
    stem_tokens: bool = True,
    stopwords: Mapping[str, frozenset[str]] | None = None,
    domain_stopwords: Mapping[str, frozenset[str]] | None = None,
    suffixes: Mapping[str, Sequence[str]] | None = None,
    garbage_threshold_len: float = GARBAGE_THRESHOLD_LEN,
    garbage_threshold_margin: float = 0.0,
    label_map: LabelMap | None = None,
) -> TopicModel:
    """Turn a clustering run into a topic model over the sentence store."""
    langs = list(langs) if langs is not None else sorted({s.lang for s in store})
    assignments = run.assignments
    by_id = {s.sent_id: s for s in store}
    members: dict[int, list[str]] = {c: [] for c in range(run.k)}
    for sid, c in assignments.items():
        members[c].append(sid)

    model = TopicModel(
        k=run.k,
        clusters=[ClusterTopic(cluster=c) for c in range(run.k)],
        metadata={
            "n_top_words": n_top_words,
            "n_top_sentences": n_top_sentences,
            "min_df": min_df,
            "stem": stem_tokens,
            "garbage_threshold_len": garbage_threshold_len,
            "langs": list(langs),
        },
    )

    for lang in langs:
        stop = (stopwords or {}).get(lang)
        stats = term_stats(store, assignments, lang, min_df=min_df,
                           stem_tokens=stem_tokens, stopwords=stop,
                           suffixes=suffixes)
        domain = (domain_stopwords or {}).get(lang, frozenset())
        for c in range(run.k):
            if stats.cluster_mass.get(c):
                ranked = clarity(stats, c)
                model.clusters[c].top_words[lang] = top_words(ranked, n_top_words, domain)
            else:
                model.clusters[c].top_words[lang] = []

    for c in range(run.k):
        ids = members[c]
        pooled = top_sentences(X, run.centroids[c], ids, m=10)
        if pooled:
            mean_len = float(np.mean([by_id[sid].char_len for sid, _ in pooled]))
            model.clusters[c].mean_top_sentence_len = mean_len
        for lang in langs:
            lang_ids = [sid for sid in ids if by_id[sid].lang == lang]
            model.clusters[c].top_sentences[lang] = top_sentences(
                X, run.centroids[c], lang_ids, m=n_top_sentences
            )

    flag_garbage(model, garbage_threshold_len, garbage_threshold_margin)
    apply_labels(model, label_map)
    return model


def write_top_words_csv(model: TopicModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "lang", "rank", "term", "score"])
        for c in model.clusters:
            for lang, terms in sorted(c.top_words.items()):
                for rank, t in enumerate(terms, start=1):
                    writer.writerow([c.cluster, lang, rank, t.term, repr(t.score)])


def write_top_sentences_csv(model: TopicModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "lang", "rank", "sent_id", "cosine"])
        for c in model.clusters:
            for lang, rows in sorted(c.top_sentences.items()):
                for rank, (sid, cos) in enumerate(rows, start=1):
                    writer.writerow([c.cluster, lang, rank, sid, repr(cos)])
