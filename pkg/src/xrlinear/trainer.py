"""Recursive XR-LINEAR training: layer label matrices, negative selection, per-layer OVR."""

from __future__ import annotations

import enum
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .indexing import ClusterChain
from .inference import batch_predict, predictions_to_matrix
from .model import CombinerKind, LayerModel, XrLinearModel
from .solver import SolverConfig, compact_rows, solve_local
from .sparse import CscMatrix, CsrMatrix, ShapeError, assignment_of, binarize_matmul

log = logging.getLogger(__name__)


class NegativeKind(str, enum.Enum):
    TFN = "tfn"
    MAN = "man"
    TFN_PLUS_MAN = "tfn+man"


@dataclass(frozen=True)
class NegativeSamplingScheme:
    kind: NegativeKind = NegativeKind.TFN_PLUS_MAN
    beam: int = 10

    def __post_init__(self):
        object.__setattr__(self, "kind", NegativeKind(self.kind))
        if self.kind is not NegativeKind.TFN and self.beam < 1:
            raise ValueError("matcher-aware negatives need beam >= 1")

    @property
    def uses_matcher(self) -> bool:
        return self.kind is not NegativeKind.TFN


def build_layer_labels(Y_next: CsrMatrix, C_next: CscMatrix | None) -> CsrMatrix:
    """Y^(t) = binarize(Y^(t+1) C^(t+1)); with no C_next (t = D) Y is returned as is."""
    if C_next is None:
        return Y_next
    return binarize_matmul(Y_next, C_next)


def select_negatives(M: CsrMatrix, Mhat: CsrMatrix | None, scheme: NegativeSamplingScheme | NegativeKind | str) -> CsrMatrix:
    kind = scheme.kind if isinstance(scheme, NegativeSamplingScheme) else NegativeKind(scheme)
    if kind is NegativeKind.TFN:
        return M
    if Mhat is None:
        raise ValueError(f"{kind.value} negatives need matcher predictions")
    if Mhat.shape != M.shape:
        raise ShapeError(f"matcher predictions {Mhat.shape} do not match truth {M.shape}")
    if kind is NegativeKind.MAN:
        return Mhat
    union = M.to_scipy() + Mhat.to_scipy()
    union.data[:] = 1.0
    return CsrMatrix.from_scipy(union)


@dataclass(frozen=True)
class ClusterProblem:
    """Training rows shared by every label under one parent cluster."""

    cluster: int
    instances: np.ndarray
    labels: np.ndarray
    signs: np.ndarray  # len(labels) x len(instances), +1 / -1


def cluster_problems(Y_t: CsrMatrix, C_t: CscMatrix, M_bar: CsrMatrix) -> Iterator[ClusterProblem]:
    """Per parent cluster k: rows {i : M_bar[i, k] != 0}, child labels and their signs."""
    if M_bar.shape != (Y_t.shape[0], C_t.shape[1]):
        raise ShapeError(f"M_bar is {M_bar.shape}, expected {(Y_t.shape[0], C_t.shape[1])}")
    if Y_t.shape[1] != C_t.shape[0]:
        raise ShapeError("Y_t and C_t disagree on the number of labels")
    parent = assignment_of(C_t)
    mcsc = M_bar.to_scipy().tocsc()
    mcsc.sort_indices()
    ycsc = Y_t.to_scipy().tocsc()
    ycsc.sort_indices()
    order = np.argsort(parent, kind="stable")
    ptr = np.zeros(C_t.shape[1] + 1, dtype=np.int64)
    np.cumsum(np.bincount(parent, minlength=C_t.shape[1]), out=ptr[1:])
    for k in range(C_t.shape[1]):
        inst = mcsc.indices[mcsc.indptr[k] : mcsc.indptr[k + 1]].astype(np.int64)
        labels = order[ptr[k] : ptr[k + 1]]
        signs = -np.ones((labels.size, inst.size))
        for r, lab in enumerate(labels):
            pos = ycsc.indices[ycsc.indptr[lab] : ycsc.indptr[lab + 1]]
            signs[r, np.isin(inst, pos)] = 1.0
        yield ClusterProblem(k, inst, labels, signs)


def training_sets(Y_t: CsrMatrix, C_t: CscMatrix, M_bar: CsrMatrix) -> dict[int, tuple[set[int], set[int]]]:
    """label -> (positive rows, negative rows) exactly as train_layer uses them."""
    out = {}
    for prob in cluster_problems(Y_t, C_t, M_bar):
        for r, lab in enumerate(prob.labels):
            s = prob.signs[r]
            out[int(lab)] = (set(prob.instances[s > 0].tolist()), set(prob.instances[s < 0].tolist()))
    return out


def _label_seed(seed: int, t: int, label: int) -> int:
    return int(np.random.SeedSequence([seed, t, label]).generate_state(2, np.uint64)[0])


def _solve_cluster(X: CsrMatrix, prob: ClusterProblem, has_pos: np.ndarray, config: SolverConfig,
                   eps: float, t: int, seed: int):
    cols = []
    if prob.instances.size == 0:
        return [(lab, None) for lab in prob.labels]
    sub, used = compact_rows(X, prob.instances)
    for r, lab in enumerate(prob.labels):
        if not has_pos[lab]:
            cols.append((lab, None))
            continue
        w, _, _, _ = solve_local(sub, prob.signs[r], config, _label_seed(seed, t, int(lab)))
        w32 = w.astype(np.float32).astype(np.float64)
        keep = (np.abs(w32) >= eps) & (w32 != 0.0)
        cols.append((lab, (used[keep], w32[keep])))
    return cols


def train_layer(
    X: CsrMatrix,
    Y_t: CsrMatrix,
    C_t: CscMatrix,
    M_bar: CsrMatrix,
    config: SolverConfig = SolverConfig(),
    eps: float = 0.1,
    *,
    t: int = 1,
    seed: int = 0,
    n_jobs: int = 1,
) -> CscMatrix:
    """One-vs-rest ranker for layer t; label l trains on rows whose M_bar marks its parent cluster."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if X.shape[0] != Y_t.shape[0]:
        raise ShapeError("X and Y_t have different row counts")
    d, K = X.shape[1], Y_t.shape[1]
    has_pos = np.diff(Y_t.to_scipy().tocsc().indptr) > 0
    probs = list(cluster_problems(Y_t, C_t, M_bar))
    empty = [p.cluster for p in probs if p.instances.size == 0 and p.labels.size]
    if empty:
        warnings.warn(f"layer {t}: {len(empty)} clusters have no training rows; their labels get zero weights",
                      stacklevel=2)
    work = lambda p: _solve_cluster(X, p, has_pos, config, eps, t, seed)  # noqa: E731
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, probs))
    else:
        results = [work(p) for p in probs]
    columns: dict[int, tuple[np.ndarray, np.ndarray] | None] = {}
    for res in results:
        columns.update((int(lab), col) for lab, col in res)
    idx, val = [], []
    indptr = np.zeros(K + 1, dtype=np.int64)
    for lab in range(K):
        col = columns.get(lab)
        n = 0 if col is None else col[0].size
        indptr[lab + 1] = indptr[lab] + n
        if n:
            idx.append(col[0])
            val.append(col[1])
    return CscMatrix(
        (d, K), indptr,
        np.concatenate(idx) if idx else np.empty(0, np.int32),
        np.concatenate(val) if val else np.empty(0),
    )


def layer_label_matrices(Y: CsrMatrix, chain: ClusterChain) -> list[CsrMatrix]:
    """[Y^(1), ..., Y^(D)] with Y^(D) = Y."""
    mats = [Y]
    for t in range(chain.depth - 1, 0, -1):
        mats.append(build_layer_labels(mats[-1], chain.matrices[t]))
    return mats[::-1]


def matcher_predictions(partial: XrLinearModel | None, X: CsrMatrix, n_parents: int, beam: int,
                        n_jobs: int = 1) -> CsrMatrix:
    """Top-beam clusters of the partial model for every row; all-ones for the dummy root matcher."""
    if partial is None:
        n = X.shape[0]
        return CsrMatrix((n, 1), np.arange(n + 1), np.zeros(n, np.int32), np.ones(n))
    preds = batch_predict(partial, X, beam=beam, topk=beam, n_jobs=n_jobs)
    return predictions_to_matrix(preds, n_parents)


def train_xr_linear(
    X: CsrMatrix,
    Y: CsrMatrix,
    chain: ClusterChain,
    scheme: NegativeSamplingScheme = NegativeSamplingScheme(),
    config: SolverConfig = SolverConfig(),
    eps: float = 0.1,
    *,
    combiner: CombinerKind | str = CombinerKind.SIGMOID_PRODUCT,
    seed: int = 0,
    n_jobs: int = 1,
    meta: dict | None = None,
    record: dict | None = None,
) -> XrLinearModel:
    """Train layers 1..D; each layer's matcher is the model made of the layers above it.

    If ``record`` is given it receives the M_bar matrix used for every layer
    (key ``"M_bar"``, a list indexed by t - 1).
    """
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    if chain.n_labels != Y.shape[1]:
        raise ValueError(f"chain indexes {chain.n_labels} labels, Y has {Y.shape[1]}")
    combiner = CombinerKind(combiner)
    ys = layer_label_matrices(Y, chain)
    layers: list[LayerModel] = []
    m_bars = []
    for t in range(1, chain.depth + 1):
        C_t = chain.matrices[t - 1]
        if t == 1:
            # the root shortlists every row, including rows without labels
            M_bar = matcher_predictions(None, X, 1, scheme.beam, n_jobs)
        else:
            M = binarize_matmul(ys[t - 1], C_t)
            Mhat = None
            if scheme.uses_matcher:
                partial = XrLinearModel(layers, combiner)
                Mhat = matcher_predictions(partial, X, C_t.shape[1], scheme.beam, n_jobs)
            M_bar = select_negatives(M, Mhat, scheme)
        m_bars.append(M_bar)
        W = train_layer(X, ys[t - 1], C_t, M_bar, config, eps, t=t, seed=seed, n_jobs=n_jobs)
        layers.append(LayerModel(t, W, C_t))
        log.info("layer %d/%d: K=%d nnz(W)=%d", t, chain.depth, W.shape[1], W.nnz)
    if record is not None:
        record["M_bar"] = m_bars
    info = dict(meta or {})
    info.update(
        B=chain.branching,
        eps=eps,
        loss=config.loss.value,
        lam=config.lam,
        tol=config.tol,
        max_iter=config.max_iter,
        negatives=scheme.kind.value,
        train_beam=scheme.beam,
        seed=seed,
        unlearnable_labels=int(np.sum(np.diff(Y.to_scipy().tocsc().indptr) == 0)),
    )
    return XrLinearModel(layers, combiner, info)

