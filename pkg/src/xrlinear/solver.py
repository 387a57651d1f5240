"""L2-regularized binary linear classifiers without bias.

Minimizes  sum_i loss(y_i, w.x_i) + lam/2 ||w||^2  over a subset of rows of X.
Hinge and squared hinge use dual coordinate descent; logistic uses primal
coordinate descent with a one-variable Newton step and backtracking. Both
shuffle coordinates every epoch with a counter-based RNG seeded per call, so
the result depends only on the inputs and the seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .sparse import CsrMatrix, SparseVec, hard_threshold


class Loss(str, enum.Enum):
    HINGE = "hinge"
    SQUARED_HINGE = "squared_hinge"
    LOGISTIC = "logistic"


_LOSS_CODE = {Loss.HINGE: 0, Loss.SQUARED_HINGE: 1, Loss.LOGISTIC: 2}


@dataclass(frozen=True)
class BinaryProblem:
    instances: np.ndarray
    signs: np.ndarray
    loss: Loss = Loss.SQUARED_HINGE
    lam: float = 1.0

    def __post_init__(self):
        inst = np.asarray(self.instances, dtype=np.int64)
        signs = np.asarray(self.signs, dtype=np.float64)
        if inst.size == 0:
            raise ValueError("a binary problem needs at least one instance")
        if inst.shape != signs.shape:
            raise ValueError("instances and signs differ in length")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be +1 or -1")
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        object.__setattr__(self, "instances", inst)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "loss", Loss(self.loss))


@dataclass(frozen=True)
class SolverConfig:
    loss: Loss = Loss.SQUARED_HINGE
    lam: float = 1.0
    tol: float = 0.1
    max_iter: int = 100

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss(self.loss))
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be > 0 and max_iter >= 1")


@dataclass
class SolveResult:
    w: SparseVec
    converged: bool
    n_iter: int
    objective: float
    history: np.ndarray = field(repr=False)


# --- kernels ---------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _splitmix(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _shuffle(perm, state):
    for i in range(perm.size - 1, 0, -1):
        state, r = _splitmix(state)
        j = np.int64(r % np.uint64(i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return state


@numba.njit(cache=True, nogil=True)
def _dual_cd(indptr, indices, data, y, n_feat, C, squared, tol, max_iter, seed):
    """Dual CD for  1/2||w||^2 + C sum loss  (hinge or squared hinge, no bias).

    Returns w, converged, epochs run, per-epoch dual objective (minimization form).
    """
    n = y.size
    w = np.zeros(n_feat)
    alpha = np.zeros(n)
    diag = 0.5 / C if squared else 0.0
    upper = np.inf if squared else C
    qd = np.empty(n)
    for i in range(n):
        s = diag
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * data[p]
        qd[i] = s
    perm = np.arange(n)
    state = np.uint64(seed)
    hist = np.empty(max_iter)
    converged = False
    it = 0
    while it < max_iter:
        state = _shuffle(perm, state)
        pg_max = -np.inf
        pg_min = np.inf
        for s in range(n):
            i = perm[s]
            if qd[i] <= 0.0:
                continue
            wx = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                wx += w[indices[p]] * data[p]
            g = y[i] * wx - 1.0 + diag * alpha[i]
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == upper:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if abs(pg) > 1e-12:
                old = alpha[i]
                alpha[i] = min(max(old - g / qd[i], 0.0), upper)
                step = (alpha[i] - old) * y[i]
                for p in range(indptr[i], indptr[i + 1]):
                    w[indices[p]] += step * data[p]
        obj = 0.0
        for j in range(n_feat):
            obj += 0.5 * w[j] * w[j]
        for i in range(n):
            obj += 0.5 * diag * alpha[i] * alpha[i] - alpha[i]
        hist[it] = obj
        it += 1
        if pg_max - pg_min <= tol:
            converged = True
            break
    return w, converged, it, hist[:it]


@numba.njit(cache=True, nogil=True)
def _log1pexp(t):
    if t > 0:
        return t + np.log1p(np.exp(-t))
    return np.log1p(np.exp(t))


@numba.njit(cache=True, nogil=True)
def _logistic_cd(col_ptr, rows, vals, y, n_feat, lam, tol, max_iter, seed):
    """Primal CD for  sum log(1 + exp(-y w.x)) + lam/2 ||w||^2  on a CSC matrix."""
    n = y.size
    w = np.zeros(n_feat)
    z = np.zeros(n)
    perm = np.arange(n_feat)
    state = np.uint64(seed)
    hist = np.empty(max_iter)
    converged = False
    it = 0
    while it < max_iter:
        state = _shuffle(perm, state)
        g_max = 0.0
        for s in range(n_feat):
            j = perm[s]
            g = lam * w[j]
            h = lam
            for p in range(col_ptr[j], col_ptr[j + 1]):
                i = rows[p]
                tau = 1.0 / (1.0 + np.exp(y[i] * z[i]))
                g -= y[i] * vals[p] * tau
                h += vals[p] * vals[p] * tau * (1.0 - tau)
            g_max = max(g_max, abs(g))
            if abs(g) <= 1e-12:
                continue
            d = -g / h
            step = 1.0
            for _ in range(30):
                delta = step * d
                change = lam * delta * (w[j] + 0.5 * delta)
                for p in range(col_ptr[j], col_ptr[j + 1]):
                    i = rows[p]
                    # loss(z + delta v) - loss(z) without cancellation
                    tau = 1.0 / (1.0 + np.exp(y[i] * z[i]))
                    change += np.log1p(tau * np.expm1(-y[i] * delta * vals[p]))
                if change <= 0.01 * delta * g:
                    w[j] += delta
                    for p in range(col_ptr[j], col_ptr[j + 1]):
                        z[rows[p]] += delta * vals[p]
                    break
                step *= 0.5
        obj = 0.0
        for j in range(n_feat):
            obj += 0.5 * lam * w[j] * w[j]
        for i in range(n):
            obj += _log1pexp(-y[i] * z[i])
        hist[it] = obj
        it += 1
        if g_max <= tol:
            converged = True
            break
    return w, converged, it, hist[:it]


# --- python surface --------------------------------------------------------


def primal_objective(X, w, instances, signs, loss: Loss | str, lam: float) -> float:
    """sum_i loss(y_i, w.x_i) + lam/2 ||w||^2 over the given rows."""
    loss = Loss(loss)
    A = X.to_scipy() if isinstance(X, CsrMatrix) else sp.csr_matrix(X)
    wd = w.to_dense() if isinstance(w, SparseVec) else np.asarray(w, dtype=np.float64)
    m = np.asarray(signs, dtype=np.float64) * (A[np.asarray(instances)] @ wd)
    if loss is Loss.HINGE:
        total = np.maximum(0.0, 1.0 - m).sum()
    elif loss is Loss.SQUARED_HINGE:
        total = (np.maximum(0.0, 1.0 - m) ** 2).sum()
    else:
        total = np.logaddexp(0.0, -m).sum()
    return float(total + 0.5 * lam * wd @ wd)


def solve_local(sub: sp.csr_matrix, y: np.ndarray, config: SolverConfig, seed: int):
    """Solve on a compact CSR (rows = instances, only used columns). Returns dense w."""
    seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    if config.loss is Loss.LOGISTIC:
        csc = sub.tocsc()
        csc.sort_indices()
        return _logistic_cd(
            csc.indptr.astype(np.int64), csc.indices.astype(np.int64), csc.data.astype(np.float64),
            y, sub.shape[1], float(config.lam), float(config.tol), int(config.max_iter), seed,
        )
    return _dual_cd(
        sub.indptr.astype(np.int64), sub.indices.astype(np.int64), sub.data.astype(np.float64),
        y, sub.shape[1], 1.0 / float(config.lam), config.loss is Loss.SQUARED_HINGE,
        float(config.tol), int(config.max_iter), seed,
    )


def compact_rows(X: CsrMatrix, instances: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Rows of X restricted to the features they use; returns (sub, used feature ids)."""
    sub = X.to_scipy()[np.asarray(instances, dtype=np.int64)]
    used, local = np.unique(sub.indices, return_inverse=True)
    compact = sp.csr_matrix((sub.data, local.astype(np.int64), sub.indptr), shape=(sub.shape[0], used.size))
    return compact, used


def solve_binary(
    X: CsrMatrix,
    prob: BinaryProblem,
    tol: float = 0.1,
    max_iter: int = 100,
    seed: int = 0,
    eps: float = 0.0,
) -> SolveResult:
    config = SolverConfig(prob.loss, prob.lam, tol, max_iter)
    sub, used = compact_rows(X, prob.instances)
    w_local, converged, n_iter, hist = solve_local(sub, prob.signs, config, seed)
    nz = np.flatnonzero(w_local)
    w = hard_threshold(SparseVec(X.shape[1], used[nz], w_local[nz]), eps)
    obj = primal_objective(X, w, prob.instances, prob.signs, prob.loss, prob.lam)
    return SolveResult(w, bool(converged), int(n_iter), obj, np.asarray(hist))
