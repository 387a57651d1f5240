"""Unigram tfidf vectorizer with smoothed idf and L2 row normalization."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .sparse import CsrMatrix, SparseVec

_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.vocabulary)

    def transform(self, text: str) -> SparseVec:
        return transform(self, text)

    def transform_many(self, texts: Iterable[str]) -> CsrMatrix:
        return CsrMatrix.from_rows([transform(self, t) for t in texts], self.dim)

    def save(self, path) -> None:
        by_id = sorted(self.vocabulary.items(), key=lambda kv: kv[1])
        with open(path, "w", encoding="utf-8") as f:
            for tok, i in by_id:
                f.write(f"{tok}\t{i}\t{float(self.idf[i])!r}\n")

    @classmethod
    def load(cls, path) -> "TfidfModel":
        vocab: dict[str, int] = {}
        idf: list[float] = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected token<TAB>id<TAB>idf")
            tok, i, w = parts[0], int(parts[1]), float(parts[2])
            if i != len(idf):
                raise ValueError(f"{path}:{lineno}: feature ids must be dense and ordered")
            vocab[tok] = i
            idf.append(w)
        return cls(vocab, np.array(idf))


def fit_tfidf(corpus: Sequence[str], min_df: int = 1) -> TfidfModel:
    if len(corpus) == 0:
        raise ValueError("cannot fit tfidf on an empty corpus")
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(tokenize(doc)))
    n = len(corpus)
    # sorted so ids do not depend on document order
    kept = sorted(t for t, c in df.items() if c >= min_df)
    vocab = {t: i for i, t in enumerate(kept)}
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in kept])
    return TfidfModel(vocab, idf)


def transform(model: TfidfModel, text: str) -> SparseVec:
    counts = Counter(model.vocabulary[t] for t in tokenize(text) if t in model.vocabulary)
    if not counts:
        return SparseVec.zeros(model.dim)
    idx = np.array(sorted(counts), dtype=np.int64)
    val = np.array([counts[i] for i in idx], dtype=np.float64) * model.idf[idx]
    return SparseVec(model.dim, idx, val / np.linalg.norm(val))
