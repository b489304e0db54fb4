"""Corpus ingestion: sentence tokenization, cleanup rules, and the sentence store.

Raw documents arrive as one JSON object per line (see :class:`RawDocument`).
Each body is HTML-entity decoded, NFC-normalized, split into sentences,
cleaned (anchors and bare URLs become the literal token ``url``), and
sentences shorter than 15 characters are dropped.  The surviving sentences
are written to a JSON-lines store in deterministic ``doc_id`` order.
"""

from __future__ import annotations

import html
import json
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import date, datetime
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .errors import CorpusError, IngestError

MIN_SENTENCE_CHARS = 15
MALFORMED_ABORT_FRACTION = 0.10

# Whole <a ...>...</a> elements collapse to "url"; bare links are replaced
# in place. "www." needs a word boundary so "awww.com" is left alone.
ANCHOR_RE = re.compile(r"<a\b[^>]*>.*?</a>", re.IGNORECASE | re.DOTALL)
URL_RE = re.compile(r"(?:https?://|\bwww\.)\S+", re.IGNORECASE)
_WS_RE = re.compile(r"\s+")

SENTENCE_TERMINALS = ".!?…"
_CLOSERS = "\"'»”’)]}"


def _data_text(name: str) -> str:
    return resources.files("xlom").joinpath("data", name).read_text("utf-8")


def load_abbreviations(lang: str) -> frozenset[str]:
    """Bundled sentence-boundary exception list for a language (may be empty)."""
    try:
        text = _data_text(f"abbreviations_{lang}.txt")
    except FileNotFoundError:
        return frozenset()
    return frozenset(
        line.strip().lower() for line in text.splitlines() if line.strip()
    )


@dataclass(frozen=True)
class RawDocument:
    """One input article or comment."""

    doc_id: str
    source: str
    lang: str
    kind: str  # "article" | "comment"
    created_at: str
    body: str
    parent_id: Optional[str] = None
    title: Optional[str] = None

    def validate(self, langs: Iterable[str] | None = None) -> None:
        if not self.doc_id:
            raise CorpusError("doc_id is empty")
        if self.kind not in ("article", "comment"):
            raise CorpusError(f"{self.doc_id}: kind must be article|comment, got {self.kind!r}")
        if (self.kind == "comment") != (self.parent_id is not None):
            raise CorpusError(
                f"{self.doc_id}: parent_id must be set iff kind is comment"
            )
        if langs is not None and self.lang not in set(langs):
            raise CorpusError(f"{self.doc_id}: lang {self.lang!r} not in configured languages")
        try:
            datetime.fromisoformat(self.created_at)
        except ValueError:
            try:
                date.fromisoformat(self.created_at)
            except ValueError:
                raise CorpusError(
                    f"{self.doc_id}: created_at {self.created_at!r} is not an ISO date"
                ) from None
        if not isinstance(self.body, str):
            raise CorpusError(f"{self.doc_id}: body must be a string")

    @classmethod
    def from_json(cls, obj: dict) -> "RawDocument":
        if not isinstance(obj, dict):
            raise CorpusError("document line is not a JSON object")
        try:
            return cls(
                doc_id=obj["doc_id"],
                source=obj["source"],
                lang=obj["lang"],
                kind=obj["kind"],
                created_at=obj["created_at"],
                body=obj["body"],
                parent_id=obj.get("parent_id"),
                title=obj.get("title"),
            )
        except KeyError as exc:
            raise CorpusError(f"missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class Sentence:
    """One preprocessed sentence; the unit every later stage works on."""

    sent_id: str
    doc_id: str
    lang: str
    text: str
    char_len: int

    def validate(self) -> None:
        if self.char_len != len(self.text):
            raise CorpusError(f"{self.sent_id}: char_len {self.char_len} != len(text)")
        if self.char_len < MIN_SENTENCE_CHARS:
            raise CorpusError(f"{self.sent_id}: shorter than {MIN_SENTENCE_CHARS} chars")
        if URL_RE.search(self.text) or ANCHOR_RE.search(self.text):
            raise CorpusError(f"{self.sent_id}: contains a raw URL")


@dataclass
class LangStats:
    tokenized: int = 0
    kept: int = 0
    dropped_short: int = 0

    @property
    def dropped_fraction(self) -> float:
        total = self.kept + self.dropped_short
        return self.dropped_short / total if total else 0.0


@dataclass
class CorpusStats:
    per_lang: dict[str, LangStats] = field(default_factory=dict)

    def lang(self, code: str) -> LangStats:
        return self.per_lang.setdefault(code, LangStats())

    @property
    def overall(self) -> LangStats:
        total = LangStats()
        for st in self.per_lang.values():
            total.tokenized += st.tokenized
            total.kept += st.kept
            total.dropped_short += st.dropped_short
        return total

    def to_json(self) -> dict:
        def row(st: LangStats) -> dict:
            return {
                "tokenized": st.tokenized,
                "kept": st.kept,
                "dropped_short": st.dropped_short,
                "dropped_fraction": st.dropped_fraction,
            }

        return {
            "per_lang": {code: row(st) for code, st in sorted(self.per_lang.items())},
            "overall": row(self.overall),
        }


@dataclass(frozen=True)
class TokenizerRules:
    """Sentence-boundary rules: terminal characters plus per-language exceptions."""

    terminals: str = SENTENCE_TERMINALS
    abbreviations: dict[str, frozenset[str]] = field(default_factory=dict)

    def abbreviations_for(self, lang: str) -> frozenset[str]:
        return self.abbreviations.get(lang, frozenset())

    @classmethod
    def bundled(cls, langs: Iterable[str], extra: dict[str, Iterable[str]] | None = None) -> "TokenizerRules":
        abbr = {lang: load_abbreviations(lang) for lang in langs}
        for lang, words in (extra or {}).items():
            abbr[lang] = abbr.get(lang, frozenset()) | {w.strip().lower() for w in words}
        return cls(abbreviations=abbr)


_WORD_BEFORE_DOT = re.compile(r"(\w+)$", re.UNICODE)


def split_sentences(text: str, abbreviations: frozenset[str] = frozenset(),
                    terminals: str = SENTENCE_TERMINALS) -> list[str]:
    """Split text on terminal punctuation followed by whitespace.

    A period does not split after a listed abbreviation, after a single
    letter (initials, the inner dots of "e.g."/"z.B."), or after a number
    (German ordinals, "3. Mai").
    """
    out: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] not in terminals:
            i += 1
            continue
        run_start = i
        while i < n and text[i] in terminals:
            i += 1
        while i < n and text[i] in _CLOSERS:
            i += 1
        if i < n and not text[i].isspace():
            continue
        if text[run_start] == "." and i - run_start == 1:
            m = _WORD_BEFORE_DOT.search(text, start, run_start)
            if m:
                word = m.group(1)
                if word.lower() in abbreviations or len(word) == 1 or word.isdigit():
                    continue
        piece = text[start:i].strip()
        if piece:
            out.append(piece)
        while i < n and text[i].isspace():
            i += 1
        start = i
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def tokenize(doc: RawDocument, rules: TokenizerRules | None = None) -> list[str]:
    """Tokenize a document body into raw sentence strings.

    The body is HTML-entity decoded and NFC-normalized first; anchors are
    collapsed to "url" before splitting so an element's text cannot straddle
    a sentence boundary.  An empty body yields an empty list.
    """
    rules = rules or TokenizerRules()
    body = unicodedata.normalize("NFC", html.unescape(doc.body))
    body = ANCHOR_RE.sub(" url ", body)
    if not body.strip():
        return []
    return split_sentences(body, rules.abbreviations_for(doc.lang), rules.terminals)


def preprocess(raw: str) -> Optional[str]:
    """Clean one tokenized sentence; None when it falls below the length floor.

    Anchor elements and bare URLs are replaced by the token "url",
    whitespace is collapsed, and the 15-character minimum is checked on the
    result (replacement first, then the length rule).
    """
    text = ANCHOR_RE.sub(" url ", raw)
    text = URL_RE.sub("url", text)
    text = _WS_RE.sub(" ", text).strip()
    if len(text) < MIN_SENTENCE_CHARS:
        return None
    return text


def sentences_from_documents(
    docs: Iterable[RawDocument],
    rules: TokenizerRules | None = None,
    stats: CorpusStats | None = None,
) -> list[Sentence]:
    """Tokenize and preprocess documents into store order (doc_id, ordinal)."""
    stats = stats if stats is not None else CorpusStats()
    out: list[Sentence] = []
    for doc in sorted(docs, key=lambda d: d.doc_id):
        lang_stats = stats.lang(doc.lang)
        kept = 0
        for raw in tokenize(doc, rules):
            lang_stats.tokenized += 1
            text = preprocess(raw)
            if text is None:
                lang_stats.dropped_short += 1
                continue
            out.append(
                Sentence(
                    sent_id=f"{doc.doc_id}#{kept:04d}",
                    doc_id=doc.doc_id,
                    lang=doc.lang,
                    text=text,
                    char_len=len(text),
                )
            )
            kept += 1
            lang_stats.kept += 1
    return out


@dataclass
class IngestReport:
    stats: CorpusStats
    n_documents: int
    errors: list[dict]  # {"line": int, "error": str}
    store_path: Path
    stats_path: Path
    errors_path: Optional[Path]


def read_documents(path: str | Path, langs: Iterable[str] | None = None):
    """Parse a JSON-lines document file.

    Returns (documents, errors); errors carry 1-based line numbers and are
    recoverable (the line is skipped).  Blank lines are ignored.
    """
    docs: list[RawDocument] = []
    errors: list[dict] = []
    seen: set[str] = set()
    n_lines = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            n_lines += 1
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                errors.append({"line": lineno, "error": f"undecodable bytes: {exc}"})
                continue
            try:
                doc = RawDocument.from_json(json.loads(line))
                doc.validate(langs)
            except (json.JSONDecodeError, CorpusError) as exc:
                errors.append({"line": lineno, "error": str(exc)})
                continue
            if doc.doc_id in seen:
                errors.append({"line": lineno, "error": f"duplicate doc_id {doc.doc_id!r}"})
                continue
            seen.add(doc.doc_id)
            docs.append(doc)
    return docs, errors, n_lines


def ingest(
    input_path: str | Path,
    out_dir: str | Path,
    langs: Iterable[str],
    rules: TokenizerRules | None = None,
) -> IngestReport:
    """Build the sentence store from a raw document file.

    Malformed lines are recorded and skipped; more than 10% malformed
    aborts with an IngestError.  Re-running on the same input produces
    byte-identical outputs.
    """
    langs = list(langs)
    rules = rules or TokenizerRules.bundled(langs)
    docs, errors, n_lines = read_documents(input_path, langs)
    if n_lines and len(errors) / n_lines > MALFORMED_ABORT_FRACTION:
        raise IngestError(
            f"{len(errors)} of {n_lines} input lines malformed "
            f"(> {MALFORMED_ABORT_FRACTION:.0%}); first error at line "
            f"{errors[0]['line']}: {errors[0]['error']}"
        )

    stats = CorpusStats()
    for lang in langs:
        stats.lang(lang)
    sentences = sentences_from_documents(docs, rules, stats)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store_path = out / "store.jsonl"
    stats_path = out / "stats.json"
    write_store(store_path, sentences)
    stats_path.write_text(
        json.dumps(stats.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    errors_path = None
    if errors:
        errors_path = out / "errors.jsonl"
        with open(errors_path, "w", encoding="utf-8") as fh:
            for err in errors:
                fh.write(json.dumps(err, sort_keys=True, ensure_ascii=False) + "\n")
    return IngestReport(
        stats=stats,
        n_documents=len(docs),
        errors=errors,
        store_path=store_path,
        stats_path=stats_path,
        errors_path=errors_path,
    )


def write_store(path: str | Path, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            row = {
                "sent_id": s.sent_id,
                "doc_id": s.doc_id,
                "lang": s.lang,
                "text": s.text,
                "char_len": s.char_len,
            }
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def load_store(path: str | Path) -> list[Sentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                s = Sentence(
                    sent_id=obj["sent_id"],
                    doc_id=obj["doc_id"],
                    lang=obj["lang"],
                    text=obj["text"],
                    char_len=obj["char_len"],
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad store row: {exc}") from None
            s.validate()
            out.append(s)
    return out
