"""Sentence encoders behind a single string identifier.

The identifier is recorded verbatim as the encoder tag in exported files,
so a matrix always says which encoder produced it.

Built-in encoders:

  bilingual-hash-v1[:dNNN]
      Deterministic, dependency-free demo encoder.  Tokens are folded
      (lowercase, diacritics stripped, ss for ß), German tokens are mapped
      onto English pivot words through a bundled dictionary, and every
      pivot token hashes to a fixed pseudo-random unit vector; a sentence
      is the L2-normalized sum of its token vectors.  Translations that
      share pivot words land close together, which is all the pipeline
      needs for development and testing.  Default dimensionality 256.

  sbert:<model-name>
      Any sentence-transformers model, when that package and the model are
      available.  Inference mode, so outputs are deterministic for a fixed
      model version.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import unicodedata
from importlib import resources
from typing import Protocol, Sequence

import numpy as np

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)
_MASK64 = (1 << 64) - 1

# Function words contribute no cross-lingual signal; dropping them keeps the
# hash geometry driven by content words.
_DROP = {
    "en": {"a", "an", "and", "are", "as", "at", "by", "for", "in", "is", "it",
           "of", "on", "or", "the", "their", "this", "to", "with"},
    "de": {"auf", "das", "dem", "den", "der", "die", "ein", "eine", "fur",
           "ihre", "ihren", "im", "in", "ist", "mit", "sind", "und", "viele",
           "von", "zu"},
}


class Encoder(Protocol):
    tag: str
    dim: int

    def encode(self, texts: Sequence[str], lang: str) -> np.ndarray: ...


def fold(text: str) -> str:
    text = unicodedata.normalize("NFC", text).lower().replace("ß", "ss")
    decomposed = unicodedata.normalize("NFD", text)
    return unicodedata.normalize(
        "NFC", "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    )


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _token_vector(token: str, dim: int) -> np.ndarray:
    """Fixed pseudo-random unit vector for a token (blake2b-seeded stream)."""
    state = int.from_bytes(hashlib.blake2b(token.encode("utf-8"),
                                           digest_size=8).digest(), "little")
    values = np.empty(dim, dtype=np.float64)
    i = 0
    while i < dim:
        state, out1 = _splitmix64(state)
        state, out2 = _splitmix64(state)
        u1 = ((out1 >> 11) + 1) * 2.0 ** -53
        u2 = (out2 >> 11) * 2.0 ** -53
        r = math.sqrt(-2.0 * math.log(u1))
        values[i] = r * math.cos(2.0 * math.pi * u2)
        if i + 1 < dim:
            values[i + 1] = r * math.sin(2.0 * math.pi * u2)
        i += 2
    return values / np.linalg.norm(values)


class BilingualHashEncoder:
    """Pivot-dictionary hash encoder; see the module docstring."""

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.tag = f"bilingual-hash-v1:d{dim}"
        pivot_text = resources.files("xlom_exporter").joinpath(
            "data", "pivot_de_en.json").read_text("utf-8")
        self._pivot_de = {fold(k): fold(v) for k, v in json.loads(pivot_text).items()}
        self._cache: dict[str, np.ndarray] = {}

    def _pivot(self, token: str, lang: str) -> str | None:
        if token in _DROP.get(lang, ()):
            return None
        if lang == "de":
            return self._pivot_de.get(token, token)
        return token

    def encode(self, texts: Sequence[str], lang: str) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            total = np.zeros(self.dim, dtype=np.float64)
            n_tokens = 0
            for token in _WORD_RE.findall(fold(text)):
                if len(token) < 2:
                    continue
                pivot = self._pivot(token, lang)
                if pivot is None:
                    continue
                vec = self._cache.get(pivot)
                if vec is None:
                    vec = _token_vector(pivot, self.dim)
                    self._cache[pivot] = vec
                total += vec
                n_tokens += 1
            if n_tokens == 0:
                # empty sentences still need a well-defined, non-zero row
                total = _token_vector("\x00empty", self.dim)
            out[row] = total / np.linalg.norm(total)
        return out


class SbertEncoder:
    """sentence-transformers backend (optional dependency)."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderLoadError(
                "sentence-transformers is not installed; "
                "install the exporter with the [sbert] extra"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load model {model_name!r}: {exc}") from exc
        self.tag = f"sbert:{model_name}"
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str], lang: str) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float64)
        vectors = self._model.encode(list(texts), convert_to_numpy=True,
                                     normalize_embeddings=False)
        return np.asarray(vectors, dtype=np.float64)


class EncoderLoadError(RuntimeError):
    pass


def load_encoder(identifier: str) -> Encoder:
    """Resolve an encoder identifier like "bilingual-hash-v1:d256" or "sbert:...".
    """
    if identifier.startswith("sbert:"):
        return SbertEncoder(identifier[len("sbert:"):])
    if identifier.startswith("bilingual-hash-v1"):
        rest = identifier[len("bilingual-hash-v1"):]
        dim = 256
        if rest.startswith(":d"):
            try:
                dim = int(rest[2:])
            except ValueError:
                raise EncoderLoadError(f"bad dimensionality in {identifier!r}") from None
        elif rest:
            raise EncoderLoadError(f"unknown encoder option {rest!r}")
        if dim < 8:
            raise EncoderLoadError("hash encoder needs dim >= 8")
        return BilingualHashEncoder(dim)
    raise EncoderLoadError(f"unknown encoder {identifier!r}")
