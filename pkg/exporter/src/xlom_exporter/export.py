"""Batch export: sentence store in, EMB1 matrix + ids out."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .emb1 import write_emb1
from .encoders import Encoder, load_encoder


@dataclass
class ExportJob:
    store_path: Path
    matrix_path: Path
    ids_path: Path
    encoder_id: str = "bilingual-hash-v1:d256"
    batch_size: int = 64
    normalize: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class StoreRow:
    sent_id: str
    lang: str
    text: str


def read_store(path: str | Path) -> list[StoreRow]:
    """Sentence store rows (sent_id, lang, text), in file order."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rows.append(StoreRow(obj["sent_id"], obj["lang"], obj["text"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad store row: {exc}") from None
    return rows


def encode_rows(rows: list[StoreRow], encoder: Encoder, batch_size: int) -> np.ndarray:
    """Encode in contiguous same-language batches, preserving row order."""
    out = np.zeros((len(rows), encoder.dim), dtype=np.float64)
    start = 0
    while start < len(rows):
        end = start
        lang = rows[start].lang
        while end < len(rows) and end - start < batch_size and rows[end].lang == lang:
            end += 1
        vectors = encoder.encode([r.text for r in rows[start:end]], lang)
        if vectors.shape != (end - start, encoder.dim):
            raise ValueError(
                f"encoder returned shape {vectors.shape}, "
                f"expected ({end - start}, {encoder.dim})"
            )
        out[start:end] = vectors
        start = end
    return out


def export(job: ExportJob) -> int:
    """Run an export job; returns the number of rows written."""
    encoder = load_encoder(job.encoder_id)
    rows = read_store(job.store_path)
    vectors = encode_rows(rows, encoder, job.batch_size)
    if job.normalize and len(vectors):
        norms = np.linalg.norm(vectors, axis=1)
        if (norms == 0).any():
            bad = int(np.where(norms == 0)[0][0])
            raise ValueError(f"cannot normalize zero vector at row {bad}")
        vectors = vectors / norms[:, None]
    Path(job.matrix_path).parent.mkdir(parents=True, exist_ok=True)
    write_emb1(vectors, [r.sent_id for r in rows], job.matrix_path, job.ids_path,
               normalized=job.normalize, encoder_tag=encoder.tag)
    return len(rows)
