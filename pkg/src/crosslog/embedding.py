"""Shared-space semantic embeddings for log templates.

Templates from every system are embedded together: the IDF corpus is the
joint template set, and each template vector is the IDF-weighted mean of its
words' vectors. Words missing from the word-vector table get a deterministic
hashed vector, so every template embeds even with no vector file at all.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .drain import WILDCARD
from .errors import DimMismatch, DuplicateWord, EmptyCorpus, MissingTemplate, ParseError

DEFAULT_DIM = 50

_WORD = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+")


@dataclass
class WordVectorTable:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def get(self, word: str) -> np.ndarray | None:
        return self.vectors.get(word)


@dataclass
class IdfTable:
    doc_count: int
    idf: dict[str, float]

    def weight(self, word: str) -> float:
        return self.idf.get(word, 1.0)


@dataclass
class EventEmbeddingTable:
    dim: int
    embeddings: dict[int, np.ndarray]

    def __getitem__(self, template_id: int) -> np.ndarray:
        try:
            return self.embeddings[template_id]
        except KeyError:
            raise MissingTemplate(template_id) from None

    def __contains__(self, template_id) -> bool:
        return template_id in self.embeddings

    def session_mean(self, events: Sequence[int]) -> np.ndarray:
        return np.mean([self[t] for t in events], axis=0)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tid in sorted(self.embeddings):
                fh.write(f"{tid}\t{','.join(repr(float(v)) for v in self.embeddings[tid])}\n")

    @classmethod
    def load(cls, path) -> "EventEmbeddingTable":
        emb: dict[int, np.ndarray] = {}
        dim = None
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                if not raw.strip():
                    continue
                try:
                    tid, values = raw.rstrip("\n").split("\t")
                    vec = np.array([float(v) for v in values.split(",")])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: malformed embedding line") from exc
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise DimMismatch(f"{path}:{lineno}: expected {dim} values, got {vec.size}")
                emb[int(tid)] = vec
        if dim is None:
            raise ParseError(f"{path}: no embeddings")
        return cls(dim, emb)


def tokenize_template(tokens: Iterable[str]) -> list[str]:
    words = []
    for tok in tokens:
        if tok == WILDCARD:
            continue
        words.extend(w.lower() for w in _WORD.findall(tok))
    return words


def build_idf(template_word_lists: Sequence[Sequence[str]]) -> IdfTable:
    if not any(template_word_lists):
        raise EmptyCorpus("every template word list is empty")
    n = len(template_word_lists)
    df = Counter()
    for words in template_word_lists:
        df.update(set(words))
    idf = {w: math.log((1 + n) / (1 + c)) + 1.0 for w, c in df.items()}
    return IdfTable(n, idf)


def stable_hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def hash_vector(word: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Unit-norm Gaussian direction seeded by a 64-bit BLAKE2b hash of ``word``."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = np.random.Generator(np.random.PCG64(stable_hash64(word)))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def embed_event(words: Sequence[str], wv: WordVectorTable, idf: IdfTable) -> np.ndarray:
    if not words:
        return hash_vector("<empty>", wv.dim)
    total = np.zeros(wv.dim)
    weight_sum = 0.0
    for w in words:
        vec = wv.get(w)
        if vec is None:
            vec = hash_vector(w, wv.dim)
        weight = idf.weight(w)
        total += weight * vec
        weight_sum += weight
    return total / weight_sum


def load_word_vectors(path) -> WordVectorTable:
    """Read ``word v1 ... vD`` lines; D is taken from the first line."""
    table = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split()
            if not parts:
                continue
            word, fields = parts[0], parts[1:]
            try:
                vec = np.array([float(x) for x in fields])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric field") from exc
            if table is None:
                if not fields:
                    raise ParseError(f"{path}:{lineno}: no vector values")
                table = WordVectorTable(len(fields))
            if vec.size != table.dim:
                raise DimMismatch(f"{path}:{lineno}: expected {table.dim} floats, got {vec.size}")
            if word in table.vectors:
                raise DuplicateWord(f"{path}:{lineno}: duplicate word {word!r}")
            table.vectors[word] = vec
    if table is None:
        raise ParseError(f"{path}: empty word-vector file")
    return table


def build_embedding_table(
    templates: Mapping[int, Sequence[str]],
    wv: WordVectorTable | None = None,
    dim: int = DEFAULT_DIM,
) -> EventEmbeddingTable:
    """Embed every template of the joint (all-systems) template table."""
    wv = wv if wv is not None else WordVectorTable(dim)
    ids = sorted(templates)
    words = [tokenize_template(templates[i]) for i in ids]
    idf = build_idf(words)
    return EventEmbeddingTable(wv.dim, {i: embed_event(w, wv, idf) for i, w in zip(ids, words)})
