"""Synthetic keyphrase corpora with planted phrases.

Documents are random word sequences over a small invented vocabulary into
which two or three keyphrases are planted several times. They are small
enough to train on in seconds, which makes them useful as fixtures for
memorization and ablation experiments.
"""

from __future__ import annotations

import numpy as np

from .corpus import DatasetRecord
from .text import stem

_CONSONANTS = "bdfgklmnprtvz"
_VOWELS = "aiou"


def make_vocabulary(size: int = 50, seed: int = 0) -> list[str]:
    """Pronounceable invented words that the stemmer leaves untouched."""
    rng = np.random.default_rng(seed)
    words: list[str] = []
    seen = set()
    while len(words) < size:
        n_syll = int(rng.integers(2, 4))
        w = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(n_syll))
        w += rng.choice(list("kmnpt"))
        if w in seen or stem(w) != w:
            continue
        seen.add(w)
        words.append(w)
    return words


def _plant(rng, background: list[str], blocks: list[list[str]]) -> list[str]:
    """Insert each block as a contiguous run at a random gap of ``background``."""
    segments = [[w] for w in background]
    for block in blocks:
        at = int(rng.integers(0, len(segments) + 1))
        segments.insert(at, list(block))
    return [w for seg in segments for w in seg]


def _phrases_present(tokens: list[str], phrases: list[list[str]]) -> bool:
    text = " " + " ".join(tokens) + " "
    return all(f" {' '.join(p)} " in text for p in phrases)


def make_corpus(
    n_docs: int = 20,
    vocab_size: int = 50,
    seed: int = 0,
    n_keyphrases: tuple[int, int] = (2, 3),
    doc_length: tuple[int, int] = (20, 28),
    repeats: int = 2,
    distractors: bool = False,
    vocab: list[str] | None = None,
) -> list[DatasetRecord]:
    """Random documents with planted gold keyphrases.

    Every document plants 2-3 keyphrases of one to three words, each
    ``repeats`` times. Keyphrase words are kept out of the document's
    background text. With ``distractors``, every keyphrase word also shows up
    in extra non-gold bigrams, so a decoder that ignores what it already
    emitted is tempted to reuse the same words.
    """
    vocab = vocab or make_vocabulary(vocab_size, seed=1000 + seed)
    rng = np.random.default_rng(seed)
    records = []
    for d in range(n_docs):
        k = int(rng.integers(n_keyphrases[0], n_keyphrases[1] + 1))
        lengths = rng.choice([1, 2, 2, 3], size=k)
        words = list(rng.choice(vocab, size=int(lengths.sum()), replace=False))
        phrases, start = [], 0
        for n in lengths:
            phrases.append(words[start : start + int(n)])
            start += int(n)
        others = [w for w in vocab if w not in words]
        n_bg = int(rng.integers(doc_length[0], doc_length[1] + 1))
        background = list(rng.choice(others, size=n_bg))
        blocks = [p for p in phrases for _ in range(repeats)]
        if distractors:
            for w in words:
                partner = str(rng.choice(others))
                blocks.append([w, partner] if rng.random() < 0.5 else [partner, w])
        order = rng.permutation(len(blocks))
        tokens = _plant(rng, background, [blocks[i] for i in order])
        assert _phrases_present(tokens, phrases)
        split = min(6, len(tokens) // 4)
        records.append(
            DatasetRecord(
                doc_id=f"syn{seed}-{d:03d}",
                title=" ".join(tokens[:split]),
                abstract=" ".join(tokens[split:]),
                keyphrases=[" ".join(p) for p in phrases],
            )
        )
    return records
