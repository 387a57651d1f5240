"""Hierarchical label indexing: recursive B-ary (spherical) k-means and cluster chains."""

from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .embedding import LabelEmbedding
from .sparse import CscMatrix, CsrMatrix, assignment_of, indexing_matrix, load_matrix, save_matrix

log = logging.getLogger(__name__)


class Objective(str, enum.Enum):
    KMEANS = "kmeans"
    SKMEANS = "skmeans"


@dataclass
class ClusterAssignment:
    c: np.ndarray
    n_clusters: int
    n_iter: int = 0
    history: list[float] = field(default_factory=list)

    def as_matrix(self) -> CscMatrix:
        return indexing_matrix(self.c, self.n_clusters)


def _as_rows(Z):
    if isinstance(Z, LabelEmbedding):
        return Z.as_scipy() if Z.is_sparse else np.asarray(Z.rows, dtype=np.float64)
    if isinstance(Z, CsrMatrix):
        return Z.to_scipy()
    if sp.issparse(Z):
        return sp.csr_matrix(Z, dtype=np.float64)
    return np.asarray(Z, dtype=np.float64)


def _row_sq_norms(Z) -> np.ndarray:
    if sp.issparse(Z):
        return np.asarray(Z.multiply(Z).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", Z, Z)


def _centroids(Z, c, B, objective):
    ind = sp.csr_matrix((np.ones(c.size), (c, np.arange(c.size))), shape=(B, c.size))
    sums = np.asarray((ind @ Z).todense() if sp.issparse(Z) else ind @ Z)
    if objective is Objective.KMEANS:
        counts = np.bincount(c, minlength=B).astype(np.float64)
        return sums / np.maximum(counts, 1.0)[:, None]
    norms = np.linalg.norm(sums, axis=1)
    return sums / np.where(norms > 0, norms, 1.0)[:, None]


def _scores(Z, mu, objective):
    """Per point/cluster score where larger is better."""
    dots = np.asarray(Z @ mu.T)
    if objective is Objective.KMEANS:
        return 2.0 * dots - np.einsum("ij,ij->i", mu, mu)[None, :]
    return dots


def partition_objective(Z, c, B, objective) -> float:
    """Sum of squared distances (KMEANS) or summed cosine similarity (SKMEANS)."""
    Z = _as_rows(Z)
    objective = Objective(objective)
    c = np.asarray(c, dtype=np.int64)
    mu = _centroids(Z, c, B, objective)
    dots = np.asarray(Z @ mu.T)[np.arange(c.size), c]
    if objective is Objective.KMEANS:
        return float(np.sum(_row_sq_norms(Z) - 2.0 * dots + np.einsum("ij,ij->i", mu, mu)[c]))
    zn = np.sqrt(_row_sq_norms(Z))
    return float(np.sum(np.divide(dots, zn, out=np.zeros_like(dots), where=zn > 0)))


def _balanced_assign(S: np.ndarray) -> np.ndarray:
    """Greedy fill by confidence margin with sizes in {floor(m/B), ceil(m/B)}."""
    m, B = S.shape
    pref = np.argsort(-S, axis=1, kind="stable")
    top2 = np.take_along_axis(S, pref[:, :2], axis=1) if B > 1 else np.zeros((m, 2))
    margin = top2[:, 0] - top2[:, 1]
    order = np.lexsort((np.arange(m), -margin))
    floor, n_big = divmod(m, B)
    size = np.zeros(B, dtype=np.int64)
    c = np.empty(m, dtype=np.int64)
    for i in order:
        for k in pref[i]:
            cap = floor + 1 if n_big > 0 else floor
            if size[k] < cap:
                c[i] = k
                size[k] += 1
                if size[k] == floor + 1:
                    n_big -= 1
                break
    return c


def _repair_empty(S: np.ndarray, c: np.ndarray, B: int) -> np.ndarray:
    c = c.copy()
    for k in range(B):
        counts = np.bincount(c, minlength=B)
        if counts[k] > 0:
            continue
        own = S[np.arange(c.size), c]
        own[counts[c] <= 1] = np.inf
        far = int(np.argmin(own))
        c[far] = k
    return c


def kmeans_partition(
    Z,
    B: int,
    objective: Objective | str = Objective.SKMEANS,
    seed: int = 0,
    max_iter: int = 20,
    balanced: bool = True,
) -> ClusterAssignment:
    """Split the rows of Z into B clusters.

    Rows that are entirely zero carry no geometry; they are kept out of the
    k-means iterations and handed out round-robin afterwards (to the
    currently smallest clusters when balancing).
    """
    Z = _as_rows(Z)
    objective = Objective(objective)
    m = Z.shape[0]
    if m < B:
        raise ValueError(f"cannot split {m} points into {B} clusters")
    if B < 1:
        raise ValueError("B must be >= 1")
    zero = _row_sq_norms(Z) == 0
    live = np.flatnonzero(~zero)
    c = np.zeros(m, dtype=np.int64)
    history: list[float] = []
    it = 0
    if live.size >= B and B > 1:
        Zl = Z[live]
        rng = np.random.default_rng(seed)
        mu = np.asarray(Zl[np.sort(rng.choice(live.size, B, replace=False))].todense() if sp.issparse(Zl)
                        else Zl[np.sort(rng.choice(live.size, B, replace=False))])
        if objective is Objective.SKMEANS:
            mu = mu / np.linalg.norm(mu, axis=1, keepdims=True)
        cl = None
        best = None
        for it in range(1, max_iter + 1):
            S = _scores(Zl, mu, objective)
            new = _balanced_assign(S) if balanced else _repair_empty(S, np.argmax(S, axis=1), B)
            if cl is not None and np.array_equal(new, cl):
                break
            obj = partition_objective(Zl, new, B, objective)
            if balanced and best is not None:
                # greedy balancing is not guaranteed to improve; stop at the first non-improving step
                worse = obj >= best if objective is Objective.KMEANS else obj <= best
                if worse:
                    break
            cl, best = new, obj
            history.append(obj)
            mu = _centroids(Zl, cl, B, objective)
        c[live] = cl
    else:
        c[live] = np.arange(live.size) % max(B, 1)
    dead = np.flatnonzero(zero)
    if balanced:
        size = np.bincount(c[live], minlength=B)
        for i in dead:
            k = int(np.argmin(size))
            c[i] = k
            size[k] += 1
    else:
        c[dead] = np.arange(dead.size) % B
    return ClusterAssignment(c, B, it, history)


class ClusterChain:
    """Indexing matrices C^(1..D); C^(t) maps the K_t level-t nodes to the K_{t-1} nodes above."""

    def __init__(self, matrices: list[CscMatrix], branching: int | None = None):
        if not matrices:
            raise ValueError("a chain needs at least one level")
        if matrices[0].shape[1] != 1:
            raise ValueError("C^(1) must have a single column (K_0 = 1)")
        for t in range(1, len(matrices)):
            if matrices[t].shape[1] != matrices[t - 1].shape[0]:
                raise ValueError(f"C^({t + 1}) has {matrices[t].shape[1]} columns, expected {matrices[t - 1].shape[0]}")
        self.matrices = list(matrices)
        self.assignments = [assignment_of(C) for C in matrices]
        self.branching = branching

    @property
    def depth(self) -> int:
        return len(self.matrices)

    @property
    def sizes(self) -> list[int]:
        """[K_1, ..., K_D]."""
        return [C.shape[0] for C in self.matrices]

    @property
    def n_labels(self) -> int:
        return self.matrices[-1].shape[0]

    @property
    def leaf_assignment(self) -> np.ndarray:
        return self.assignments[-1]

    def ancestor(self, t: int) -> np.ndarray:
        """For every label, its node id at level t (t = D gives the label itself)."""
        node = np.arange(self.n_labels)
        for s in range(self.depth, t, -1):
            node = self.assignments[s - 1][node]
        return node

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for t, C in enumerate(self.matrices, 1):
            save_matrix(d / f"C_{t}.mat", C)
        manifest = {"D": self.depth, "B": self.branching, "K": self.sizes}
        (d / "chain.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, directory) -> "ClusterChain":
        d = Path(directory)
        manifest = json.loads((d / "chain.json").read_text())
        mats = [load_matrix(d / f"C_{t}.mat") for t in range(1, manifest["D"] + 1)]
        mats = [m if isinstance(m, CscMatrix) else m.to_csc() for m in mats]
        chain = cls(mats, manifest.get("B"))
        if chain.sizes != manifest["K"]:
            raise ValueError("chain manifest does not match stored matrices")
        return chain

    @classmethod
    def from_leaf_assignment(cls, leaf: np.ndarray, B: int, K: int) -> "ClusterChain":
        """Leaf assignment onto K = B^(D-1) clusters plus the implied complete B-ary tree."""
        depth = _log_exact(K, B) + 1
        mats = [indexing_matrix(np.arange(B**t) // B, B ** (t - 1)) for t in range(1, depth)]
        mats.append(indexing_matrix(leaf, K))
        return cls(mats, B)

    @classmethod
    def flat(cls, n_labels: int) -> "ClusterChain":
        """Depth-1 chain: every label hangs off the root (vanilla one-vs-rest)."""
        return cls([indexing_matrix(np.zeros(n_labels, dtype=np.int64), 1)], None)

    def __eq__(self, other):
        if not isinstance(other, ClusterChain):
            return NotImplemented
        return self.branching == other.branching and self.matrices == other.matrices


def _log_exact(K: int, B: int) -> int:
    """log_B K if K is an exact power of B, else ValueError."""
    if K < 1 or B < 2:
        raise ValueError(f"need K >= 1 and B >= 2, got K={K}, B={B}")
    p, v = 0, 1
    while v < K:
        v *= B
        p += 1
    if v != K:
        raise ValueError(f"K={K} is not a power of B={B}")
    return p


def _split_seed(seed: int, level: int, node: int) -> int:
    return int(np.random.SeedSequence([seed, level, node]).generate_state(1)[0])


def build_cluster_chain(
    Z: LabelEmbedding,
    B: int = 8,
    K: int | None = None,
    seed: int = 0,
    *,
    objective: Objective | str = Objective.SKMEANS,
    balanced: bool = True,
    max_iter: int = 20,
    n_jobs: int = 1,
    stats: dict | None = None,
) -> ClusterChain:
    """Recursively partition labels B ways until K = B^(D-1) leaf clusters remain."""
    rows = _as_rows(Z)
    L = rows.shape[0]
    if K is None:
        K = default_leaf_count(L, B)
    levels = _log_exact(K, B)
    if K > L:
        raise ValueError(f"K={K} exceeds the number of labels L={L}")
    participation = np.zeros(L, dtype=np.int64)
    nodes = [np.arange(L)]

    def split(level, k, members):
        if members.size < B:
            # too few labels to cluster: one label per child, remaining children empty
            return [members[j : j + 1] for j in range(B)]
        part = kmeans_partition(rows[members], B, objective, _split_seed(seed, level, k), max_iter, balanced)
        return [members[part.c == j] for j in range(B)]

    with ThreadPoolExecutor(max_workers=max(1, n_jobs)) as pool:
        for level in range(1, levels + 1):
            for members in nodes:
                participation[members] += 1
            children = list(pool.map(lambda a: split(level, a[0], a[1]), enumerate(nodes)))
            nodes = [ch for group in children for ch in group]
    leaf = np.empty(L, dtype=np.int64)
    for k, members in enumerate(nodes):
        leaf[members] = k
    if stats is not None:
        stats["participation"] = participation
    return ClusterChain.from_leaf_assignment(leaf, B, K)


def default_leaf_count(L: int, B: int = 8, max_leaf_size: int = 100) -> int:
    """Smallest power of B giving at most max_leaf_size labels per leaf (capped at L)."""
    K = 1
    while -(-L // K) > max_leaf_size and K * B <= L:
        K *= B
    return K
