"""Lexicon-based sentence polarity with window negation handling.

Each language brings its own lexicon file; scores are means of per-hit
contributions in [-1, 1].  Sentences with polarity exactly 0 are marked
filtered so downstream summaries can exclude them, which keeps the two
languages' distributions comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Sentence
from .errors import SentimentError
from .topics import fold, tokenize_terms

DEFAULT_NEGATION_FACTOR = -0.5
DEFAULT_WINDOW = 3


@dataclass(frozen=True)
class SentimentLexicon:
    lang: str
    entries: dict[str, float]
    negators: frozenset[str]
    negation_factor: float = DEFAULT_NEGATION_FACTOR
    window: int = DEFAULT_WINDOW

    def validate(self) -> None:
        for token, pol in self.entries.items():
            if not -1.0 <= pol <= 1.0:
                raise SentimentError(f"{self.lang}: polarity of {token!r} outside [-1, 1]")
        if not -1.0 <= self.negation_factor < 0.0:
            raise SentimentError(f"{self.lang}: negation_factor must be in [-1, 0)")
        if self.window < 0:
            raise SentimentError(f"{self.lang}: window must be >= 0")


def _fold_lexicon(entries: Mapping[str, float]) -> dict[str, float]:
    # Entry tokens go through the same folding as sentence tokens so that
    # "schön" in a lexicon matches the folded token "schon".
    out: dict[str, float] = {}
    for token, pol in entries.items():
        out[fold(token)] = float(pol)
    return out


def load_lexicon(path: str | Path) -> SentimentLexicon:
    obj = json.loads(Path(path).read_text("utf-8"))
    try:
        lex = SentimentLexicon(
            lang=obj["lang"],
            entries=_fold_lexicon(obj["entries"]),
            negators=frozenset(fold(w) for w in obj.get("negators", [])),
            negation_factor=float(obj.get("negation_factor", DEFAULT_NEGATION_FACTOR)),
            window=int(obj.get("window", DEFAULT_WINDOW)),
        )
    except KeyError as exc:
        raise SentimentError(f"{path}: missing field {exc.args[0]!r}") from None
    lex.validate()
    return lex


def load_bundled_lexicon(lang: str) -> SentimentLexicon:
    """Small demo lexicon shipped with the package (en, de)."""
    try:
        text = resources.files("xlom").joinpath("data", f"lexicon_{lang}.json").read_text("utf-8")
    except FileNotFoundError:
        raise SentimentError(f"no bundled lexicon for language {lang!r}") from None
    obj = json.loads(text)
    lex = SentimentLexicon(
        lang=obj["lang"],
        entries=_fold_lexicon(obj["entries"]),
        negators=frozenset(fold(w) for w in obj.get("negators", [])),
        negation_factor=float(obj.get("negation_factor", DEFAULT_NEGATION_FACTOR)),
        window=int(obj.get("window", DEFAULT_WINDOW)),
    )
    lex.validate()
    return lex


@dataclass(frozen=True)
class SentimentScore:
    sent_id: str
    polarity: float
    matched: int
    filtered: bool  # true iff polarity == 0


def polarity(sentence: Sentence, lex: SentimentLexicon) -> SentimentScore:
    """Mean of lexicon-hit contributions; a hit is negated when a negator
    occurs within the preceding ``window`` tokens."""
    if lex.lang != sentence.lang:
        raise SentimentError(
            f"lexicon language {lex.lang!r} does not match sentence {sentence.lang!r}"
        )
    tokens = tokenize_terms(sentence.text, sentence.lang, stem_tokens=False)
    contributions = []
    for i, token in enumerate(tokens):
        pol = lex.entries.get(token)
        if pol is None:
            continue
        negated = any(
            tokens[j] in lex.negators for j in range(max(0, i - lex.window), i)
        )
        contributions.append(pol * lex.negation_factor if negated else pol)
    if not contributions:
        return SentimentScore(sentence.sent_id, 0.0, 0, True)
    value = sum(contributions) / len(contributions)
    value = max(-1.0, min(1.0, value))
    return SentimentScore(sentence.sent_id, value, len(contributions), value == 0.0)


def score_corpus(store: Sequence[Sentence],
                 lexicons: Mapping[str, SentimentLexicon]) -> list[SentimentScore]:
    """One score per sentence, ordered by sent_id; fails fast on a missing lexicon."""
    needed = {s.lang for s in store}
    missing = sorted(needed - set(lexicons))
    if missing:
        raise SentimentError(f"no lexicon configured for language(s): {', '.join(missing)}")
    scores = [polarity(s, lexicons[s.lang]) for s in store]
    scores.sort(key=lambda sc: sc.sent_id)
    return scores


def write_scores(path: str | Path, scores: Iterable[SentimentScore]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sc in scores:
            row = {
                "sent_id": sc.sent_id,
                "polarity": sc.polarity,
                "matched": sc.matched,
                "filtered": sc.filtered,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_scores(path: str | Path) -> list[SentimentScore]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out.append(SentimentScore(
                    sent_id=obj["sent_id"],
                    polarity=obj["polarity"],
                    matched=obj["matched"],
                    filtered=obj["filtered"],
                ))
    return out
