"""Tokenization, Porter stemming and stem-level node aggregation."""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from nltk.stem.porter import PorterStemmer

from .errors import EmptyDocument

_TOKEN_RE = re.compile(r"[^\W_]+")

# Martin Porter's own reference implementation: words of length <= 2 are untouched.
_porter = PorterStemmer(mode=PorterStemmer.MARTIN_EXTENSIONS)


@dataclass(frozen=True)
class TokenizedDocument:
    tokens: tuple[str, ...]
    stems: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class NodeTable:
    """Distinct stems in first-occurrence order with their token offsets."""

    nodes: tuple[str, ...]
    positions: tuple[tuple[int, ...], ...]
    surfaces: tuple[str, ...] = ()

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def index(self) -> dict[str, int]:
        return {stem: i for i, stem in enumerate(self.nodes)}


def split_tokens(raw: str) -> list[str]:
    return _TOKEN_RE.findall(raw.lower())


@functools.lru_cache(maxsize=65536)
def stem(token: str) -> str:
    return _porter.stem(token.lower())


def tokenize(raw: str, max_length: int | None = None) -> TokenizedDocument:
    """Lowercase ``raw`` and split it on every non-alphanumeric character.

    Raises EmptyDocument when no token survives. ``max_length`` truncates
    the tail of long documents.
    """
    tokens = split_tokens(raw)
    if max_length is not None:
        tokens = tokens[:max_length]
    if not tokens:
        raise EmptyDocument("document contains no tokens")
    return TokenizedDocument(tuple(tokens), tuple(stem(t) for t in tokens))


def build_nodes(doc: TokenizedDocument) -> NodeTable:
    positions: dict[str, list[int]] = {}
    surface_counts: dict[str, dict[str, int]] = {}
    for offset, (tok, st) in enumerate(zip(doc.tokens, doc.stems)):
        positions.setdefault(st, []).append(offset)
        counts = surface_counts.setdefault(st, {})
        counts[tok] = counts.get(tok, 0) + 1
    # most frequent surface form, first seen wins ties (dicts keep insertion order)
    surfaces = tuple(max(c, key=c.get) for c in surface_counts.values())
    return NodeTable(
        nodes=tuple(positions),
        positions=tuple(tuple(p) for p in positions.values()),
        surfaces=surfaces,
    )


def phrase_tokens(phrase: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(phrase, str):
        return tuple(split_tokens(phrase))
    return tuple(t.lower() for t in phrase)


def stem_phrase(phrase: str | Sequence[str]) -> tuple[str, ...]:
    return tuple(stem(t) for t in phrase_tokens(phrase))


def match_phrase(pred: str | Sequence[str], gold: str | Sequence[str]) -> bool:
    """True iff both phrases have identical stemmed token sequences."""
    return stem_phrase(pred) == stem_phrase(gold)


def find_phrase(stems: Sequence[str], phrase_stems: Sequence[str]) -> int:
    """Offset of the first contiguous occurrence of ``phrase_stems`` or -1."""
    n, k = len(stems), len(phrase_stems)
    if k == 0:
        return -1
    first = phrase_stems[0]
    for i in range(n - k + 1):
        if stems[i] == first and tuple(stems[i : i + k]) == tuple(phrase_stems):
            return i
    return -1


def detokenize(doc: TokenizedDocument) -> str:
    return " ".join(doc.tokens)


def unique_phrases(phrases: Iterable[str | Sequence[str]]) -> list[tuple[str, ...]]:
    """Token tuples of ``phrases`` with stem-level duplicates and empties removed."""
    seen = set()
    out = []
    for p in phrases:
        toks = phrase_tokens(p)
        key = tuple(stem(t) for t in toks)
        if toks and key not in seen:
            seen.add(key)
            out.append(toks)
    return out
