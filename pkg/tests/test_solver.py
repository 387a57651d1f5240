import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import primal, reference_optimum
from xrlinear import BinaryProblem, CsrMatrix, Loss, SolverConfig, solve_binary
from xrlinear.solver import compact_rows, solve_local

LOSSES = ["hinge", "squared_hinge", "logistic"]


def problem(rng, n, d, loss, lam=1.0):
    Xd = rng.standard_normal((n, d)) * (rng.random((n, d)) < 0.7)
    y = rng.choice([-1.0, 1.0], n)
    X = CsrMatrix.from_dense(Xd)
    return X, Xd, BinaryProblem(np.arange(n), y, loss, lam)


def test_one_positive_closed_form():
    X = CsrMatrix.from_dense([[1.0]])
    res = solve_binary(X, BinaryProblem([0], [1.0], "squared_hinge", 1.0), tol=1e-12, max_iter=1000)
    assert res.w.to_dense()[0] == pytest.approx(2 / 3, abs=1e-9)
    assert res.converged


@pytest.mark.parametrize("loss", LOSSES)
def test_symmetric_data_gives_zero(loss):
    X = CsrMatrix.from_dense([[1.0], [1.0]])
    res = solve_binary(X, BinaryProblem([0, 1], [1.0, -1.0], loss, 1.0), tol=1e-10, max_iter=1000)
    assert abs(res.w.to_dense()[0]) < 1e-8


def test_invalid_inputs():
    with pytest.raises(ValueError):
        BinaryProblem([0], [1.0], "cubic", 1.0)
    with pytest.raises(ValueError):
        BinaryProblem([0], [0.5], "hinge", 1.0)
    with pytest.raises(ValueError):
        BinaryProblem([], [], "hinge", 1.0)
    with pytest.raises(ValueError):
        BinaryProblem([0], [1.0], "hinge", 0.0)


@pytest.mark.parametrize("loss", LOSSES)
def test_matches_reference_solver(rng, loss):
    for _ in range(10):
        X, Xd, prob = problem(rng, int(rng.integers(3, 20)), int(rng.integers(1, 8)), loss, float(rng.uniform(0.2, 3)))
        res = solve_binary(X, prob, tol=1e-9, max_iter=100000)
        ref = reference_optimum(Xd, prob.signs, loss, prob.lam)
        assert res.objective <= ref + 1e-4
        assert res.objective == pytest.approx(primal(Xd, prob.signs, res.w.to_dense(), loss, prob.lam), rel=1e-12)


@pytest.mark.parametrize("loss", LOSSES)
def test_objective_history_monotone(rng, loss):
    for _ in range(10):
        X, _, prob = problem(rng, 20, 6, loss)
        res = solve_binary(X, prob, tol=1e-6, max_iter=200)
        h = res.history
        assert len(h) >= 1
        assert np.all(np.diff(h) <= 1e-10 * np.maximum(1.0, np.abs(h[:-1])))


def test_non_convergence_is_flagged_not_raised(rng):
    X, _, prob = problem(rng, 20, 6, "hinge", 0.01)
    res = solve_binary(X, prob, tol=1e-14, max_iter=1)
    assert not res.converged and res.n_iter == 1


@pytest.mark.parametrize("loss", LOSSES)
def test_deterministic_given_seed(rng, loss):
    X, _, prob = problem(rng, 15, 5, loss)
    a = solve_binary(X, prob, seed=7)
    b = solve_binary(X, prob, seed=7)
    assert a.w == b.w


def test_feature_scaling_keeps_sign_pattern(rng):
    for loss in LOSSES:
        X, Xd, prob = problem(rng, 12, 4, loss)
        s = 3.0
        a = solve_binary(X, prob, tol=1e-10, max_iter=10000)
        b = solve_binary(CsrMatrix.from_dense(s * Xd), BinaryProblem(prob.instances, prob.signs, loss, prob.lam * s * s),
                         tol=1e-10, max_iter=10000)
        fa = Xd @ a.w.to_dense()
        fb = s * Xd @ b.w.to_dense()
        np.testing.assert_allclose(fa, fb, atol=1e-6)
        strong = np.abs(fa) > 1e-6
        assert np.array_equal(np.sign(fa[strong]), np.sign(fb[strong]))


def test_threshold_applied(rng):
    X, _, prob = problem(rng, 20, 8, "squared_hinge")
    res = solve_binary(X, prob, eps=0.05)
    assert res.w.nnz == 0 or np.min(np.abs(res.w.values)) >= 0.05


def test_subset_of_rows_uses_only_those_rows(rng):
    X, Xd, _ = problem(rng, 20, 5, "squared_hinge")
    rows = np.array([1, 4, 7, 9, 15])
    y = np.array([1.0, -1.0, 1.0, -1.0, -1.0])
    res = solve_binary(X, BinaryProblem(rows, y, "squared_hinge", 1.0), tol=1e-10, max_iter=10000)
    ref = reference_optimum(Xd[rows], y, "squared_hinge", 1.0)
    assert res.objective == pytest.approx(ref, abs=1e-6)


def test_compact_rows_maps_features(rng):
    X, Xd, _ = problem(rng, 10, 30, "hinge")
    sub, used = compact_rows(X, np.array([2, 5]))
    np.testing.assert_array_equal(sub.toarray(), Xd[[2, 5]][:, used])
    assert np.all(np.any(Xd[[2, 5]][:, used] != 0, axis=0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(LOSSES))
def test_per_label_independence(seed, loss):
    # solving a label alone or after others gives identical weights
    rng = np.random.default_rng(seed)
    X, _, prob = problem(rng, 10, 4, loss)
    cfg = SolverConfig(Loss(loss), 1.0, 0.1, 100)
    sub, _ = compact_rows(X, prob.instances)
    w1 = solve_local(sub, prob.signs, cfg, 11)[0]
    solve_local(sub, -prob.signs, cfg, 12)
    w2 = solve_local(sub, prob.signs, cfg, 11)[0]
    assert np.array_equal(w1, w2)
