import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import random_csr
from oracles import level_labels, shortlist_training_sets, teacher_forced_clusters
from xrlinear import (
    ClusterChain,
    CsrMatrix,
    NegativeKind,
    NegativeSamplingScheme,
    SolverConfig,
    build_cluster_chain,
    build_layer_labels,
    select_negatives,
    train_layer,
    train_xr_linear,
)
from xrlinear.sparse import binarize_matmul, indexing_matrix
from xrlinear.trainer import layer_label_matrices, training_sets

# Toy instance in the shape of the shortlist illustration: n = 6, L = 20,
# four clusters of five consecutive labels. 0-based ids throughout.
TOY_Y = [
    [1, 11],
    [0, 3],
    [12, 13, 14],
    [5, 8, 9, 15, 16],
    [6, 7, 18],
    [2, 4, 19],
]


def shortlist_toy():
    rows = TOY_Y
    indptr = np.cumsum([0] + [len(r) for r in rows])
    Y = CsrMatrix.from_scipy(sp.csr_matrix((np.ones(indptr[-1]), np.concatenate(rows), indptr), shape=(6, 20)))
    C = indexing_matrix(np.arange(20) // 5, 4)
    return Y, C


class TestShortlistToy:
    def test_cluster_memberships(self):
        Y, C = shortlist_toy()
        M = binarize_matmul(Y, C).to_dense()
        assert M[3].tolist() == [0, 1, 0, 1]
        assert M[:, 0].tolist() == [1, 1, 0, 0, 0, 1]

    def test_label_two_training_set(self):
        Y, C = shortlist_toy()
        M = binarize_matmul(Y, C)
        sets = training_sets(Y, C, M)
        pos, neg = sets[1]  # label 2 in 1-based numbering
        assert pos == {0} and neg == {1, 5}

    def test_x4_negatives(self):
        Y, C = shortlist_toy()
        M = binarize_matmul(Y, C)
        sets = training_sets(Y, C, M)
        negatives_of_x4 = {lab for lab, (_, neg) in sets.items() if 3 in neg}
        positives_of_x4 = {lab for lab, (pos, _) in sets.items() if 3 in pos}
        assert {v + 1 for v in negatives_of_x4} == {7, 8, 18, 19, 20}
        assert {v + 1 for v in positives_of_x4} == {6, 9, 10, 16, 17}

    def test_one_cluster_is_full_ovr(self):
        Y, _ = shortlist_toy()
        C1 = indexing_matrix(np.zeros(20, dtype=int), 1)
        M = build_layer_labels(Y, None)
        ones = CsrMatrix.from_dense(np.ones((6, 1)))
        sets = training_sets(M, C1, ones)
        for lab, (pos, neg) in sets.items():
            assert pos | neg == set(range(6))


def test_build_layer_labels_composition(rng):
    Y = random_csr(rng, 15, 24, 0.15, binary=True)
    C3 = indexing_matrix(rng.integers(0, 6, 24), 6)
    C2 = indexing_matrix(rng.integers(0, 3, 6), 3)
    two_step = build_layer_labels(build_layer_labels(Y, C3), C2)
    oneshot = (Y.to_dense() @ C3.to_dense() @ C2.to_dense() > 0).astype(float)
    assert np.array_equal(two_step.to_dense(), oneshot)
    assert build_layer_labels(Y, None) is Y


class TestSelectNegatives:
    def test_tfn_identity(self, rng):
        M = random_csr(rng, 10, 5, 0.3, binary=True)
        assert select_negatives(M, None, "tfn") is M

    def test_union_idempotent(self, rng):
        M = random_csr(rng, 10, 5, 0.3, binary=True)
        assert select_negatives(M, M, "tfn+man") == M

    def test_union_oracle(self, rng):
        for _ in range(20):
            M = random_csr(rng, 12, 6, 0.3, binary=True)
            Mh = random_csr(rng, 12, 6, 0.3, binary=True)
            U = select_negatives(M, Mh, NegativeSamplingScheme("tfn+man"))
            want = {(i, k) for i in range(12) for k in range(6) if M.to_dense()[i, k] or Mh.to_dense()[i, k]}
            got = {(i, k) for i in range(12) for k in range(6) if U.to_dense()[i, k]}
            assert got == want and set(U.data.tolist()) <= {1.0}
            assert select_negatives(M, Mh, "man") is Mh

    def test_man_needs_matcher(self, rng):
        M = random_csr(rng, 4, 3, 0.5, binary=True)
        with pytest.raises(ValueError):
            select_negatives(M, None, "man")
        with pytest.raises(ValueError):
            NegativeSamplingScheme("man", beam=0)


def _trained_sets_match_oracle(X, Y, chain, scheme, seed=0):
    record = {}
    model = train_xr_linear(X, Y, chain, scheme, SolverConfig(), 0.0, seed=seed, record=record)
    ys = level_labels(Y.to_dense(), chain.assignments)
    for t in range(chain.depth):
        Mbar = record["M_bar"][t].to_dense()
        parent = chain.assignments[t]
        if scheme.kind is NegativeKind.TFN:
            assert np.array_equal(Mbar, teacher_forced_clusters(ys[t], parent, Mbar.shape[1]) if t else np.ones((Y.shape[0], 1)))
        want = shortlist_training_sets(ys[t], parent, Mbar)
        got = training_sets(CsrMatrix.from_dense(ys[t]), chain.matrices[t], record["M_bar"][t])
        assert got == want
        for lab, (pos, neg) in got.items():
            assert not pos & neg
    return model, record


@pytest.mark.parametrize("kind", ["tfn", "man", "tfn+man"])
def test_small_synthetic_training_sets(rng, kind):
    X = random_csr(rng, 40, 10, 0.4)
    Y = random_csr(rng, 40, 12, 0.15, binary=True)
    chain = ClusterChain.from_leaf_assignment(np.arange(12) % 4, 4, 4)
    _, record = _trained_sets_match_oracle(X, Y, chain, NegativeSamplingScheme(kind, beam=2))
    if kind == "tfn+man":
        # the union always contains the ground-truth clusters
        M = binarize_matmul(layer_label_matrices(Y, chain)[1], chain.matrices[1]).to_dense()
        assert np.all(record["M_bar"][1].to_dense() >= M)


def test_man_uses_partial_model_predictions(rng):
    from xrlinear.inference import batch_predict

    X = random_csr(rng, 30, 8, 0.5)
    Y = random_csr(rng, 30, 16, 0.15, binary=True)
    chain = ClusterChain.from_leaf_assignment(np.arange(16) // 4, 2, 4)
    record = {}
    model = train_xr_linear(X, Y, chain, NegativeSamplingScheme("man", beam=2), eps=0.0, record=record)
    for t in range(1, chain.depth):
        preds = batch_predict(model.truncated(t), X, beam=2, topk=2, n_jobs=1)
        for i, p in enumerate(preds):
            assert set(record["M_bar"][t].row_indices(i).tolist()) == set(p.labels.tolist())


def test_depth_one_is_vanilla_ovr(rng):
    X = random_csr(rng, 25, 6, 0.5)
    Y = random_csr(rng, 25, 5, 0.3, binary=True)
    model = train_xr_linear(X, Y, ClusterChain.flat(5), NegativeSamplingScheme("tfn"), eps=0.0)
    from xrlinear import BinaryProblem, solve_binary
    from xrlinear.trainer import _label_seed

    Yd = Y.to_dense()
    for lab in range(5):
        if not Yd[:, lab].any():
            continue
        res = solve_binary(X, BinaryProblem(np.arange(25), 2 * Yd[:, lab] - 1, "squared_hinge", 1.0),
                           seed=_label_seed(0, 1, lab))
        w = res.w.to_dense().astype(np.float32).astype(np.float64)
        assert np.array_equal(model.layers[0].W.to_dense()[:, lab], w)


def test_depth_two_tfn_is_three_stage_pipeline(rng):
    # matcher trained OVR on M = binarize(YC); ranker on the ground-truth shortlists
    X = random_csr(rng, 30, 7, 0.5)
    Y = random_csr(rng, 30, 9, 0.2, binary=True)
    c = np.arange(9) % 3
    chain = ClusterChain.from_leaf_assignment(c, 3, 3)
    record = {}
    train_xr_linear(X, Y, chain, NegativeSamplingScheme("tfn"), eps=0.0, record=record)
    Yd = Y.to_dense()
    M = teacher_forced_clusters(Yd, c, 3)
    assert training_sets(CsrMatrix.from_dense(M), chain.matrices[0], record["M_bar"][0]) == \
        {k: (set(np.flatnonzero(M[:, k])), set(np.flatnonzero(M[:, k] == 0))) for k in range(3)}
    assert np.array_equal(record["M_bar"][1].to_dense(), M)


def test_thresholded_weights_and_unlearnable_labels(rng):
    X = random_csr(rng, 40, 12, 0.4)
    Yd = (rng.random((40, 8)) < 0.2).astype(float)
    Yd[:, 3] = 0
    Y = CsrMatrix.from_dense(Yd)
    chain = ClusterChain.from_leaf_assignment(np.arange(8) // 4, 2, 2)
    model = train_xr_linear(X, Y, chain, NegativeSamplingScheme("tfn"), eps=0.15)
    for layer in model.layers:
        assert layer.W.nnz == 0 or np.min(np.abs(layer.W.data)) >= 0.15
    assert not model.layers[-1].W.to_dense()[:, 3].any()
    assert model.meta["unlearnable_labels"] == 1


def test_empty_cluster_warns(rng):
    X = random_csr(rng, 10, 5, 0.5)
    Y = CsrMatrix.from_dense(np.zeros((10, 4)))
    Y2 = CsrMatrix.from_dense(np.eye(10, 4))
    C = indexing_matrix([0, 0, 1, 1], 2)
    M = CsrMatrix.from_dense(np.c_[np.ones(10), np.zeros(10)])
    with pytest.warns(UserWarning, match="no training rows"):
        W = train_layer(X, Y2, C, M, t=2)
    assert not W.to_dense()[:, 2:].any()
    assert Y.nnz == 0


def test_retraining_bit_identical_across_threads(rng, tmp_path):
    X = random_csr(rng, 60, 15, 0.3)
    Y = random_csr(rng, 60, 20, 0.1, binary=True)
    chain = build_cluster_chain(rng.standard_normal((20, 4)), B=2, K=4, seed=1)
    a = train_xr_linear(X, Y, chain, seed=3, n_jobs=1)
    b = train_xr_linear(X, Y, chain, seed=3, n_jobs=4)
    a.save(tmp_path / "a")
    b.save(tmp_path / "b")
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_chain_label_mismatch(rng):
    X = random_csr(rng, 5, 3, 0.5)
    Y = random_csr(rng, 5, 4, 0.5, binary=True)
    with pytest.raises(ValueError):
        train_xr_linear(X, Y, ClusterChain.flat(5))
