from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from xrlinear import CscMatrix, CsrMatrix

DATA = Path(__file__).parent / "data"


def random_csr(rng: np.random.Generator, n: int, d: int, density: float = 0.2, binary: bool = False) -> CsrMatrix:
    m = sp.random(n, d, density=density, format="csr", random_state=rng,
                  data_rvs=lambda k: rng.uniform(0.1, 1.0, k) * rng.choice([-1.0, 1.0], k))
    if binary:
        m.data[:] = 1.0
    return CsrMatrix.from_scipy(m)


def random_indexing(rng: np.random.Generator, L: int, K: int) -> CscMatrix:
    from xrlinear.sparse import indexing_matrix

    return indexing_matrix(rng.integers(0, K, size=L), K)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_dir():
    return DATA / "toy"


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(pytestconfig):
    """check(criterion, ok, detail): record one acceptance verdict for the terminal summary."""
    results = pytestconfig.stash.setdefault(ACCEPTANCE, {})

    def check(criterion: int, ok: bool | None, detail: str) -> bool:
        results[criterion] = (ok, detail)
        return bool(ok)

    return check


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        ok, detail = results[criterion]
        verdict = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {criterion}: {detail}")
