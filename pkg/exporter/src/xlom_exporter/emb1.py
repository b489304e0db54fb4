"""Writer for the EMB1 embedding file format.

Layout (integers little-endian): magic b"EMB1", u16 version=1, u32 dim,
u64 count, u8 normalized flag, u16 tag length + UTF-8 encoder tag, then
count*dim float32 row-major payload.  Ids go to a sidecar text file, one
sentence id per line, line i naming row i.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sHIQBH")


def write_emb1(
    vectors: np.ndarray,
    ids: list[str],
    matrix_path: str | Path,
    ids_path: str | Path,
    *,
    normalized: bool,
    encoder_tag: str,
) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise ValueError("vectors must be 2-dimensional")
    if len(ids) != vectors.shape[0]:
        raise ValueError(f"{len(ids)} ids for {vectors.shape[0]} rows")
    tag = encoder_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise ValueError("encoder tag too long")
    header = _HEADER.pack(MAGIC, VERSION, vectors.shape[1], vectors.shape[0],
                          1 if normalized else 0, len(tag))
    with open(matrix_path, "wb") as fh:
        fh.write(header)
        fh.write(tag)
        fh.write(vectors.tobytes())
    with open(ids_path, "w", encoding="utf-8", newline="\n") as fh:
        for sid in ids:
            fh.write(sid + "\n")
