import numpy as np
import pytest
import scipy.sparse as sp

from spatialspec import knn_weights

# (criterion, passed, detail) lines printed after the session by the acceptance module
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_knn(n, k, rng):
    return knn_weights(rng.uniform(size=(n, 2)), k)


def random_sparse_w(n, rng, density=0.3, row_normalize=True):
    """Random nonnegative zero-diagonal weights, row-normalized when asked."""
    m = sp.random(n, n, density=density, random_state=rng, format="lil")
    m.setdiag(0.0)
    m = m.tocsr()
    m.eliminate_zeros()
    d = m.toarray()
    for i in range(n):
        if d[i].sum() == 0:
            j = (i + 1) % n
            d[i, j] = 1.0
    if row_normalize:
        d = d / d.sum(axis=1, keepdims=True)
    return d
