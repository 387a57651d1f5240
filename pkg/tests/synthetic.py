"""Synthetic extreme-multilabel data with learnable label/feature structure."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from xrlinear import CsrMatrix


def make_xmc(n: int, d: int, L: int, seed: int = 0, labels_per_doc: float = 5.0,
             words_per_label: int = 12, words_per_doc: int = 60, noise: float = 0.3):
    """Each label owns a few signature features; a document mixes its labels' features plus noise.

    Labels come in groups of related topics (shared features), so a tree over
    labels is meaningful. Label frequencies follow a power law.
    """
    rng = np.random.default_rng(seed)
    n_topics = max(1, L // 16)
    topic_of = rng.integers(0, n_topics, L)
    topic_words = rng.integers(0, d, (n_topics, words_per_label))
    own_words = rng.integers(0, d, (L, words_per_label))
    popularity = 1.0 / np.arange(1, L + 1) ** 0.7
    popularity = rng.permutation(popularity / popularity.sum())
    rows, cols, vals = [], [], []
    yrows, ycols = [], []
    for i in range(n):
        k = max(1, rng.poisson(labels_per_doc - 1) + 1)
        labs = np.unique(rng.choice(L, size=k, p=popularity))
        pool = np.concatenate([own_words[labs].ravel(), topic_words[topic_of[labs]].ravel()])
        n_noise = int(noise * words_per_doc)
        words = np.concatenate([rng.choice(pool, size=words_per_doc - n_noise), rng.integers(0, d, n_noise)])
        f, c = np.unique(words, return_counts=True)
        v = np.log1p(c.astype(float))
        v /= np.linalg.norm(v)
        rows.append(np.full(f.size, i))
        cols.append(f)
        vals.append(v)
        yrows.append(np.full(labs.size, i))
        ycols.append(labs)
    X = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, d))
    Y = sp.csr_matrix((np.ones(sum(len(r) for r in yrows)), (np.concatenate(yrows), np.concatenate(ycols))),
                      shape=(n, L))
    return CsrMatrix.from_scipy(X), CsrMatrix.from_scipy(Y)
