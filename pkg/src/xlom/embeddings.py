"""Shared embedding space: the EMB1 file format, loader, and HTTP provider client.

The encoder itself stays outside this package; it is pinned only by the
``encoder_tag`` string recorded in the file header.

EMB1 binary layout (all integers little-endian):

    bytes 0-3   magic  b"EMB1"
    u16         version (currently 1)
    u32         dim
    u64         count
    u8          normalized flag (1 = every row is unit L2 length)
    u16         tag_len, followed by tag_len bytes of UTF-8 encoder_tag
    payload     count * dim float32 values, row-major

Sentence ids live in a sidecar UTF-8 text file, one id per line; line i
names row i of the payload.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import EmbeddingFormatError, EmbeddingProviderError, XlomError
from .validation import check_vector

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sHIQBH")
NORM_TOLERANCE = 1e-4


@dataclass(eq=False)
class EmbeddingMatrix:
    """Dense vectors keyed by sentence id; row i belongs to ids[i]."""

    ids: list[str]
    vectors: np.ndarray  # (n, dim) float32
    normalized: bool = False
    encoder_tag: str = ""

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise EmbeddingFormatError("vectors must be a 2-d array")
        if len(self.ids) != self.vectors.shape[0]:
            raise EmbeddingFormatError(
                f"id/count mismatch: {len(self.ids)} ids vs {self.vectors.shape[0]} rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise EmbeddingFormatError("ids are not unique")
        self._index: dict[str, int] | None = None

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def index(self) -> dict[str, int]:
        if self._index is None:
            self._index = {sid: i for i, sid in enumerate(self.ids)}
        return self._index

    def row(self, sent_id: str) -> np.ndarray:
        try:
            return self.vectors[self.index()[sent_id]]
        except KeyError:
            raise XlomError(f"no embedding for sentence {sent_id!r}") from None

    def subset(self, ids: Sequence[str]) -> "EmbeddingMatrix":
        """Rows for the given ids, in the given order."""
        index = self.index()
        missing = [s for s in ids if s not in index]
        if missing:
            raise XlomError(
                f"{len(missing)} ids have no embedding (first: {missing[0]!r})"
            )
        rows = self.vectors[[index[s] for s in ids]]
        return EmbeddingMatrix(list(ids), rows.copy(), self.normalized, self.encoder_tag)

    def normalize(self) -> "EmbeddingMatrix":
        """L2-normalize rows in place (no-op when already flagged normalized)."""
        if self.normalized:
            return self
        self.vectors = normalize_rows(self.vectors)
        self.normalized = True
        return self


def normalize_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X.astype(np.float64), axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise EmbeddingFormatError(f"cannot normalize zero vector at row {int(zero[0])}")
    return (X.astype(np.float64) / norms[:, None]).astype(np.float32)


def write_embeddings(matrix: EmbeddingMatrix, matrix_path: str | Path,
                     ids_path: str | Path) -> None:
    tag = matrix.encoder_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise EmbeddingFormatError("encoder_tag too long")
    header = _HEADER.pack(
        MAGIC, VERSION, matrix.dim, len(matrix), 1 if matrix.normalized else 0, len(tag)
    )
    payload = np.ascontiguousarray(matrix.vectors, dtype="<f4").tobytes()
    with open(matrix_path, "wb") as fh:
        fh.write(header)
        fh.write(tag)
        fh.write(payload)
    with open(ids_path, "w", encoding="utf-8", newline="\n") as fh:
        for sid in matrix.ids:
            fh.write(sid + "\n")


def load_embeddings(matrix_path: str | Path, ids_path: str | Path,
                    normalize: bool = True) -> EmbeddingMatrix:
    """Load and validate an EMB1 matrix plus its ids sidecar.

    Rows are L2-normalized unless the header already flags them normalized;
    pass ``normalize=False`` to keep raw values (bit-exact round-trips).
    """
    blob = Path(matrix_path).read_bytes()
    if len(blob) < _HEADER.size:
        raise EmbeddingFormatError(f"{matrix_path}: truncated header")
    magic, version, dim, count, norm_flag, tag_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"{matrix_path}: bad magic {magic!r}")
    if version != VERSION:
        raise EmbeddingFormatError(f"{matrix_path}: unsupported version {version}")
    if dim <= 0:
        raise EmbeddingFormatError(f"{matrix_path}: dim must be positive")
    offset = _HEADER.size
    tag = blob[offset:offset + tag_len].decode("utf-8")
    offset += tag_len
    expected = count * dim * 4
    if len(blob) - offset != expected:
        raise EmbeddingFormatError(
            f"{matrix_path}: payload is {len(blob) - offset} bytes, expected {expected}"
        )
    vectors = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=offset)
    vectors = vectors.reshape(count, dim).copy()

    ids = Path(ids_path).read_text("utf-8").splitlines()
    ids = [line for line in ids if line]
    if len(ids) != count:
        raise EmbeddingFormatError(
            f"id/count mismatch: header count {count}, {len(ids)} ids in {ids_path}"
        )

    finite = np.isfinite(vectors)
    if not finite.all():
        row = int(np.argwhere(~finite.all(axis=1))[0][0])
        raise EmbeddingFormatError(f"{matrix_path}: non-finite value at row {row}")

    matrix = EmbeddingMatrix(ids, vectors, normalized=bool(norm_flag), encoder_tag=tag)
    if matrix.normalized:
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        bad = np.where(np.abs(norms - 1.0) > NORM_TOLERANCE)[0]
        if bad.size:
            raise EmbeddingFormatError(
                f"{matrix_path}: flagged normalized but row {int(bad[0])} has norm {norms[bad[0]]:.6f}"
            )
    elif normalize:
        matrix.normalize()
    return matrix


def read_encoder_tag(matrix_path: str | Path) -> str:
    """Read just the encoder_tag from an EMB1 header."""
    with open(matrix_path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise EmbeddingFormatError(f"{matrix_path}: truncated header")
        magic, version, _, _, _, tag_len = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise EmbeddingFormatError(f"{matrix_path}: not an EMB1 file")
        return fh.read(tag_len).decode("utf-8")


def cosine(a, b) -> float:
    """Cosine similarity of two vectors; errors on zero vectors."""
    va = check_vector(a, name="a")
    vb = check_vector(b, name="b")
    if va.shape[0] != vb.shape[0]:
        raise XlomError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise XlomError("cosine is undefined for a zero vector")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def fetch_embeddings(
    endpoint: str,
    sentences: Sequence,
    batch_size: int = 64,
    *,
    retries: int = 3,
    backoff: float = 0.5,
    timeout: float = 30.0,
    session: requests.Session | None = None,
    encoder_tag: str | None = None,
) -> EmbeddingMatrix:
    """Fetch embeddings over the POST /embed contract, one row per sentence.

    Batches are contiguous same-language slices of at most ``batch_size``
    sentences, so output order always matches input order.  Transport
    failures are retried with exponential backoff (``retries`` attempts);
    a dimension change between batches is an error.
    """
    if batch_size < 1:
        raise EmbeddingProviderError("batch_size must be >= 1")
    sess = session or requests.Session()
    url = endpoint.rstrip("/") + "/embed"

    def call(texts: list[str], lang: str) -> dict:
        last: Exception | None = None
        for attempt in range(retries):
            try:
                resp = sess.post(url, json={"texts": texts, "lang": lang}, timeout=timeout)
            except requests.RequestException as exc:
                last = exc
                if attempt + 1 < retries:
                    time.sleep(backoff * (2 ** attempt))
                continue
            if resp.status_code != 200:
                raise EmbeddingProviderError(
                    f"{url} returned status {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise EmbeddingProviderError(f"{url} returned invalid JSON: {exc}") from None
        raise EmbeddingProviderError(f"{url} unreachable after {retries} attempts: {last}")

    if not sentences:
        payload = call([], "")
        dim = int(payload.get("dim", 0))
        if dim <= 0:
            raise EmbeddingProviderError("provider reported no dimensionality")
        return EmbeddingMatrix([], np.zeros((0, dim), dtype=np.float32),
                               encoder_tag=encoder_tag or url)

    batches: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(sentences) + 1):
        boundary = i == len(sentences) or sentences[i].lang != sentences[start].lang
        if i - start == batch_size or boundary:
            batches.append((start, i))
            start = i
            if start == len(sentences):
                break

    dim: int | None = None
    rows: list[np.ndarray] = []
    for lo, hi in batches:
        chunk = sentences[lo:hi]
        payload = call([s.text for s in chunk], chunk[0].lang)
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(chunk):
            got = len(vectors) if isinstance(vectors, list) else "none"
            raise EmbeddingProviderError(
                f"row count mismatch: sent {len(chunk)} texts, got {got} vectors"
            )
        arr = np.asarray(vectors, dtype=np.float32)
        if arr.ndim != 2:
            raise EmbeddingProviderError("provider vectors are not rectangular")
        batch_dim = int(payload.get("dim", arr.shape[1]))
        if batch_dim != arr.shape[1]:
            raise EmbeddingProviderError(
                f"provider dim field {batch_dim} disagrees with vectors ({arr.shape[1]})"
            )
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise EmbeddingProviderError(
                f"dim drift between batches: {dim} then {arr.shape[1]}"
            )
        rows.append(arr)

    ids = [s.sent_id for s in sentences]
    return EmbeddingMatrix(ids, np.vstack(rows), encoder_tag=encoder_tag or url)
