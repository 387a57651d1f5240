"""Label representations used to build the semantic label index."""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import CsrMatrix, ShapeError

log = logging.getLogger(__name__)


class EmbeddingKind(str, enum.Enum):
    PII = "pii"
    PIFA = "pifa"
    PIFA_LF = "pifa_lf"
    SPECTRAL = "spectral"


@dataclass(frozen=True, eq=False)
class LabelEmbedding:
    """One row per label. ``rows`` is a CsrMatrix (sparse kinds) or a dense array."""

    kind: EmbeddingKind
    rows: CsrMatrix | np.ndarray

    @property
    def n_labels(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def is_sparse(self) -> bool:
        return isinstance(self.rows, CsrMatrix)

    def as_scipy(self):
        """Rows as a scipy CSR matrix (dense kinds are converted)."""
        if self.is_sparse:
            return self.rows.to_scipy()
        return sp.csr_matrix(self.rows)

    def to_dense(self) -> np.ndarray:
        return self.rows.to_dense() if self.is_sparse else np.array(self.rows)


def _normalize_rows(m: sp.csr_matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=np.float64, copy=True)
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sp.csr_matrix(sp.diags(scale) @ m)


def embed_pii(Y: CsrMatrix) -> LabelEmbedding:
    z = _normalize_rows(Y.to_scipy().T.tocsr())
    return LabelEmbedding(EmbeddingKind.PII, CsrMatrix.from_scipy(z))


def embed_pifa(X: CsrMatrix, Y: CsrMatrix) -> LabelEmbedding:
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    v = (Y.to_scipy().T @ X.to_scipy()).tocsr()
    return LabelEmbedding(EmbeddingKind.PIFA, CsrMatrix.from_scipy(_normalize_rows(v)))


def embed_pifa_lf(X: CsrMatrix, Y: CsrMatrix, label_features, alpha=0.5) -> LabelEmbedding:
    """Blend given label features with PIFA: (1 - alpha_l) * zt_l + alpha_l * pifa_l.

    ``alpha`` is a scalar applied to every label or a per-label array.
    """
    L = Y.shape[1]
    zt = label_features.to_scipy() if isinstance(label_features, CsrMatrix) else sp.csr_matrix(label_features)
    if zt.shape != (L, X.shape[1]):
        raise ShapeError(f"label features must be {L} x {X.shape[1]}, got {zt.shape}")
    a = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (L,))
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("alpha must lie in [0, 1]")
    pifa = embed_pifa(X, Y).rows.to_scipy()
    z = sp.diags(1.0 - a) @ zt + sp.diags(a) @ pifa
    return LabelEmbedding(EmbeddingKind.PIFA_LF, CsrMatrix.from_scipy(sp.csr_matrix(z)))


def _top_right_singular(A: sp.csr_matrix, k: int, max_iter: int, tol: float, seed: int, deflate=None):
    """Top-k right singular pairs of A by block subspace iteration on A^T A.

    With ``deflate`` (a unit vector) the iteration runs on its orthogonal complement.
    """
    L = A.shape[1]
    p = min(L - (deflate is not None), 2 * k + 10)
    rng = np.random.default_rng(seed)
    if deflate is None:
        AtA = lambda M: A.T @ (A @ M)  # noqa: E731
    else:
        proj = lambda M: M - np.outer(deflate, deflate @ M)  # noqa: E731
        AtA = lambda M: proj(A.T @ (A @ proj(M)))  # noqa: E731
    V, _ = np.linalg.qr(AtA(rng.standard_normal((L, p))) if deflate is not None else rng.standard_normal((L, p)))
    prev = None
    for _ in range(max_iter):
        V, _ = np.linalg.qr(AtA(V))
        # Rayleigh-Ritz on the current subspace
        H = V.T @ AtA(V)
        evals, U = np.linalg.eigh((H + H.T) / 2)
        order = np.argsort(evals)[::-1]
        V = V @ U[:, order]
        s = np.sqrt(np.clip(evals[order][:k], 0.0, None))
        if prev is not None and np.max(np.abs(s - prev)) < tol:
            break
        prev = s
    return s, V[:, :k]


def embed_spectral(Y: CsrMatrix, k: int, *, max_iter: int = 200, tol: float = 1e-8, seed: int = 0) -> LabelEmbedding:
    """Co-clustering spectral label embedding from the bipartite graph Y."""
    n, L = Y.shape
    if k < 1 or k + 1 > min(n, L):
        raise ValueError(f"need 1 <= k and k + 1 <= min(n, L) = {min(n, L)}, got k={k}")
    # the bipartite graph is the support of Y
    y = Y.to_scipy().astype(np.float64)
    y.data[:] = 1.0
    d1 = np.asarray(y.sum(axis=1)).ravel()
    d2 = np.asarray(y.sum(axis=0)).ravel()
    rows, cols = np.flatnonzero(d1 > 0), np.flatnonzero(d2 > 0)
    if rows.size < n or cols.size < L:
        warnings.warn(
            f"{n - rows.size} empty rows and {L - cols.size} empty labels get zero spectral embeddings",
            stacklevel=2,
        )
    if k + 1 > min(rows.size, cols.size):
        raise ValueError("k too large for the non-empty part of Y")
    sub = y[rows][:, cols]
    yt = sp.diags(d1[rows] ** -0.5) @ sub @ sp.diags(d2[cols] ** -0.5)
    # v_1 is known in closed form (sqrt of label degrees, singular value 1); solve for the next k
    v1 = np.sqrt(d2[cols])
    v1 /= np.linalg.norm(v1)
    _, V = _top_right_singular(sp.csr_matrix(yt), k, max_iter, tol, seed, deflate=v1)
    # deterministic sign: largest-magnitude entry of each vector is positive
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])])
    V = V * np.where(flip == 0, 1.0, flip)
    Z = np.zeros((L, k))
    Z[cols] = (d2[cols] ** -0.5)[:, None] * V
    return LabelEmbedding(EmbeddingKind.SPECTRAL, Z)


def spectral_singular_values(Y: CsrMatrix, k: int, *, max_iter: int = 200, tol: float = 1e-8, seed: int = 0):
    """Top-k singular values and right vectors of the normalized Y (no empty rows/cols)."""
    y = Y.to_scipy().astype(np.float64)
    d1 = np.asarray(y.sum(axis=1)).ravel()
    d2 = np.asarray(y.sum(axis=0)).ravel()
    if np.any(d1 == 0) or np.any(d2 == 0):
        raise ValueError("Y has empty rows or columns")
    yt = sp.diags(d1**-0.5) @ y @ sp.diags(d2**-0.5)
    return _top_right_singular(sp.csr_matrix(yt), k, max_iter, tol, seed)


def build_embedding(kind: EmbeddingKind | str, X: CsrMatrix, Y: CsrMatrix, **kw) -> LabelEmbedding:
    kind = EmbeddingKind(kind)
    if kind is EmbeddingKind.PII:
        return embed_pii(Y)
    if kind is EmbeddingKind.PIFA:
        return embed_pifa(X, Y)
    if kind is EmbeddingKind.PIFA_LF:
        return embed_pifa_lf(X, Y, kw["label_features"], kw.get("alpha", 0.5))
    return embed_spectral(Y, kw.get("k", 16), seed=kw.get("seed", 0))
