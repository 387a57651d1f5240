"""Beam-search inference over the layer stack, score combiners and ensembling."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .model import CombinerKind, LayerModel, XrLinearModel
from .sparse import CsrMatrix, ShapeError, SparseVec, _lookup


@dataclass(frozen=True, eq=False)
class Prediction:
    """Ranked (label, score) list; untraversed labels are simply absent."""

    labels: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return int(self.labels.size)

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.labels.tolist(), self.scores.tolist()))

    def top(self, k: int) -> np.ndarray:
        return self.labels[:k]

    def __eq__(self, other):
        if not isinstance(other, Prediction):
            return NotImplemented
        return np.array_equal(self.labels, other.labels) and np.array_equal(self.scores, other.scores)

    def __repr__(self):
        return f"Prediction({self.items()!r})"


@dataclass
class BeamStats:
    """Work counters for one query: nodes expanded and ranker columns scored per level."""

    expanded: list[int]
    scored: list[int]

    @property
    def total_scored(self) -> int:
        return sum(self.scored)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def combine(g_score: float, h_score: float, kind: CombinerKind | str = CombinerKind.SIGMOID_PRODUCT) -> float:
    kind = CombinerKind(kind)
    if kind is CombinerKind.RANKER_ONLY:
        return float(h_score)
    return math.exp(float(log_sigmoid(g_score)) + float(log_sigmoid(h_score)))


@numba.njit(cache=True, nogil=True)
def _log_sigmoid(h):
    if h >= 0:
        return -np.log1p(np.exp(-h))
    return h - np.log1p(np.exp(h))


@numba.njit(cache=True, nogil=True)
def _expand(tab_ptr, keys, slots, row_off, row_ptr, nnz_off, cols, vals, child_ptr, child_ids,
            beam_nodes, beam_scores, x_idx, x_val, product, out_ids, out_scores):
    n = 0
    for b in range(beam_nodes.size):
        k = beam_nodes[b]
        lo = child_ptr[k]
        m = child_ptr[k + 1] - lo
        h = np.zeros(m)
        tk = keys[tab_ptr[k] : tab_ptr[k + 1]]
        ts = slots[tab_ptr[k] : tab_ptr[k + 1]]
        ro = row_off[k]
        no = nnz_off[k]
        for p in range(x_idx.size):
            r = _lookup(tk, ts, x_idx[p])
            if r < 0:
                continue
            v = x_val[p]
            for q in range(row_ptr[ro + r], row_ptr[ro + r + 1]):
                h[cols[no + q]] += v * vals[no + q]
        for j in range(m):
            out_ids[n] = child_ids[lo + j]
            if product:
                out_scores[n] = beam_scores[b] + _log_sigmoid(h[j])
            else:
                out_scores[n] = h[j]
            n += 1
    return n


def _expand_layer(layer: LayerModel, nodes, scores, x: SparseVec, product: bool):
    counts = layer.child_ptr[nodes + 1] - layer.child_ptr[nodes]
    total = int(counts.sum())
    ids = np.empty(total, dtype=np.int64)
    out = np.empty(total)
    _expand(layer.tab_ptr, layer.keys, layer.slots, layer.row_off, layer.row_ptr, layer.nnz_off,
            layer.cols, layer.vals, layer.child_ptr, layer.child_ids,
            nodes, scores, x.indices.astype(np.int64), x.values, product, ids, out)
    return ids, out


def _top(ids: np.ndarray, scores: np.ndarray, k: int):
    # score descending, ties by ascending id
    order = np.lexsort((ids, -scores))[:k]
    return ids[order], scores[order]


def beam_search(
    model: XrLinearModel,
    x: SparseVec,
    beam: int = 10,
    topk: int = 10,
    stats: BeamStats | None = None,
) -> Prediction:
    if beam < 1 or topk < 1:
        raise ValueError("beam and topk must be >= 1")
    if x.dim != model.n_features:
        raise ShapeError(f"query has dim {x.dim}, model expects {model.n_features}")
    product = model.combiner is CombinerKind.SIGMOID_PRODUCT
    nodes = np.zeros(1, dtype=np.int64)
    scores = np.zeros(1)  # log f^(0) = log 1
    for t, layer in enumerate(model.layers, 1):
        ids, sc = _expand_layer(layer, nodes, scores, x, product)
        if stats is not None:
            stats.expanded.append(int(nodes.size))
            stats.scored.append(int(ids.size))
        keep = topk if t == model.depth else beam
        nodes, scores = _top(ids, sc, keep)
    out = np.exp(scores) if product else scores
    return Prediction(nodes, out)


def default_threads() -> int:
    env = os.environ.get("XRL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def batch_predict(
    model: XrLinearModel,
    X: CsrMatrix,
    beam: int = 10,
    topk: int = 10,
    n_jobs: int | None = None,
) -> list[Prediction]:
    if X.shape[1] != model.n_features:
        raise ShapeError(f"X has {X.shape[1]} features, model expects {model.n_features}")
    n_jobs = n_jobs or default_threads()
    rows = range(X.shape[0])
    if n_jobs == 1 or X.shape[0] < 64:
        return [beam_search(model, X.row(i), beam, topk) for i in rows]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda i: beam_search(model, X.row(i), beam, topk), rows, chunksize=64))


def predictions_to_matrix(preds: list[Prediction], n_cols: int) -> CsrMatrix:
    """Binary n x n_cols indicator of the returned labels."""
    return CsrMatrix.from_rows(
        [SparseVec(n_cols, np.sort(p.labels), np.ones(len(p))) for p in preds], n_cols
    )


def ensemble_average(preds: list[Prediction], topk: int = 10) -> Prediction:
    """Mean score per label over the inputs, absent labels counting as 0."""
    if not preds:
        raise ValueError("need at least one prediction to ensemble")
    ids = np.concatenate([p.labels for p in preds])
    sc = np.concatenate([p.scores for p in preds])
    uniq, inv = np.unique(ids, return_inverse=True)
    total = np.zeros(uniq.size)
    np.add.at(total, inv, sc)
    labels, scores = _top(uniq, total / len(preds), topk)
    return Prediction(labels, scores)


def format_prediction(p: Prediction) -> str:
    return " ".join(f"{label}:{score:.6g}" for label, score in p.items())


def parse_prediction(line: str) -> Prediction:
    pairs = [tok.split(":") for tok in line.split()]
    return Prediction(np.array([int(a) for a, _ in pairs], dtype=np.int64), np.array([float(b) for _, b in pairs]))
