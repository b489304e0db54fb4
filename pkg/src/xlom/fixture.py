"""Synthetic desk-scale corpus with planted topics and mock embeddings.

The generator stands in for the neural encoder: each sentence's embedding
is its planted topic's unit centroid plus Gaussian noise, re-normalized.
With noise 0, the i-th sentence of a topic gets the identical vector in
every language, which makes translated pairs exactly coincide.  Everything
draws from the portable splitmix64 stream, so a seed fully determines the
output files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (CorpusStats, RawDocument, Sentence, TokenizerRules,
                     sentences_from_documents)
from .embeddings import EmbeddingMatrix, write_embeddings
from .errors import XlomError
from .rng import SplitMix64

_TOPIC_WORDS_PER_TOPIC = 8
_FILLER_WORDS = 4
_WORDS_PER_SENTENCE = (4, 6)  # inclusive range

# Occasional polarity words keep the sentiment stage non-degenerate; they
# match the bundled demo lexicons.
_SENTIMENT_SPICE = {
    "en": ("great", "terrible", "healthy", "toxic"),
    "de": ("gut", "schlecht", "gesund", "giftig"),
}


@dataclass
class FixtureResult:
    out_dir: Path
    documents_path: Path
    matrix_path: Path
    ids_path: Path
    truth_path: Path
    pairs_path: Path
    n_sentences: int
    sentences: list[Sentence]
    truth: dict[str, int]


def _sentence_text(rng: SplitMix64, lang: str, topic: int, ordinal: int) -> str:
    vocab = [f"{lang}topic{topic}term{j}" for j in range(_TOPIC_WORDS_PER_TOPIC)]
    fillers = [f"{lang}filler{j}" for j in range(_FILLER_WORDS)]
    n_words = _WORDS_PER_SENTENCE[0] + rng.next_below(
        _WORDS_PER_SENTENCE[1] - _WORDS_PER_SENTENCE[0] + 1
    )
    words = [vocab[rng.next_below(len(vocab))] for _ in range(n_words)]
    words.append(fillers[rng.next_below(len(fillers))])
    if ordinal % 3 == 0:
        spice = _SENTIMENT_SPICE.get(lang)
        if spice:
            words.append(spice[rng.next_below(len(spice))])
    return " ".join(words) + "."


def make_fixture(
    out_dir: str | Path,
    *,
    n_topics: int = 5,
    n_per_topic: int = 40,
    langs: tuple[str, ...] = ("en", "de"),
    dim: int = 16,
    noise: float = 0.05,
    seed: int = 1,
) -> FixtureResult:
    """Write documents, EMB1 embeddings, planted truth, and translation pairs.

    ``n_per_topic`` counts sentences per topic per language.  Each (topic,
    language) pair becomes one article holding the first half of its
    sentences and one comment holding the rest, so aggregation scopes get
    both kinds.
    """
    if n_topics < 1 or n_per_topic < 1 or dim < 1 or not langs:
        raise XlomError("fixture counts must be positive")
    if noise < 0:
        raise XlomError("noise must be >= 0")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    text_rng = SplitMix64(seed)
    docs: list[RawDocument] = []
    topic_of_doc: dict[str, int] = {}
    for lang in langs:
        for topic in range(n_topics):
            texts = [
                _sentence_text(text_rng, lang, topic, i) for i in range(n_per_topic)
            ]
            half = (len(texts) + 1) // 2
            article_id = f"{lang}-t{topic:02d}-a"
            comment_id = f"{lang}-t{topic:02d}-c0"
            docs.append(RawDocument(
                doc_id=article_id, source="fixture", lang=lang, kind="article",
                created_at="2020-01-01", body=" ".join(texts[:half]),
                title=f"{lang} topic {topic}",
            ))
            docs.append(RawDocument(
                doc_id=comment_id, source="fixture", lang=lang, kind="comment",
                created_at="2020-01-02", body=" ".join(texts[half:]),
                parent_id=article_id,
            ))
            topic_of_doc[article_id] = topic
            topic_of_doc[comment_id] = topic

    documents_path = out / "documents.jsonl"
    with open(documents_path, "w", encoding="utf-8") as fh:
        for doc in sorted(docs, key=lambda d: d.doc_id):
            row = {
                "doc_id": doc.doc_id,
                "source": doc.source,
                "lang": doc.lang,
                "kind": doc.kind,
                "created_at": doc.created_at,
                "body": doc.body,
            }
            if doc.parent_id is not None:
                row["parent_id"] = doc.parent_id
            if doc.title is not None:
                row["title"] = doc.title
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")

    # Derive the store exactly the way ingest will, so embedding ids line up.
    stats = CorpusStats()
    sentences = sentences_from_documents(docs, TokenizerRules.bundled(langs), stats)
    if stats.overall.dropped_short:
        raise XlomError("fixture produced sentences below the length floor")
    truth = {s.sent_id: topic_of_doc[s.doc_id] for s in sentences}

    centroid_rng = SplitMix64(seed + 0x5EED)
    centroids = np.stack([
        _unit(centroid_rng.gauss_vector(dim)) for _ in range(n_topics)
    ])
    noise_rng = SplitMix64(seed + 0xA0123)
    rows = np.empty((len(sentences), dim), dtype=np.float64)
    for i, s in enumerate(sentences):
        vec = centroids[truth[s.sent_id]]
        if noise > 0:
            vec = vec + noise * noise_rng.gauss_vector(dim)
        rows[i] = _unit(vec)

    matrix = EmbeddingMatrix(
        [s.sent_id for s in sentences],
        rows.astype(np.float32),
        normalized=True,
        encoder_tag=f"fixture-splitmix64-seed{seed}-dim{dim}-noise{noise}",
    )
    matrix_path = out / "matrix.emb"
    ids_path = out / "matrix.ids"
    write_embeddings(matrix, matrix_path, ids_path)

    truth_path = out / "truth.jsonl"
    with open(truth_path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps({"sent_id": s.sent_id, "topic": truth[s.sent_id]}) + "\n")

    # Translation pairs: the i-th kept sentence of a topic across languages.
    by_lang_topic: dict[tuple[str, int], list[str]] = {}
    for s in sentences:
        by_lang_topic.setdefault((s.lang, truth[s.sent_id]), []).append(s.sent_id)
    pairs = []
    if len(langs) >= 2:
        first, second = langs[0], langs[1]
        for topic in range(n_topics):
            a = by_lang_topic.get((first, topic), [])
            b = by_lang_topic.get((second, topic), [])
            pairs.extend([list(p) for p in zip(a, b)])
    pairs_path = out / "pairs.json"
    pairs_path.write_text(json.dumps(pairs, indent=2) + "\n", encoding="utf-8")

    return FixtureResult(
        out_dir=out,
        documents_path=documents_path,
        matrix_path=matrix_path,
        ids_path=ids_path,
        truth_path=truth_path,
        pairs_path=pairs_path,
        n_sentences=len(sentences),
        sentences=sentences,
        truth=truth,
    )


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise XlomError("cannot normalize a zero vector")
    return v / norm


def load_truth(path: str | Path) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out[obj["sent_id"]] = obj["topic"]
    return out
