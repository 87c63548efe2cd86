"""Numpy implementations of the hot kernels.

These are the reference versions; ``_compiled.pyx`` mirrors them one to one.
"""
import numpy as np
from scipy.linalg import solve_triangular


def ar_profile(gram, a, s, p, beta_out):
    """Profiled residual sum of squares for a linear whitening operator.

    Parameters
    ----------
    gram : ndarray, shape (m, m, q, q)
        ``gram[j, k] = (W_j X)' (W_k X)`` with ``W_0 = I`` and
        ``X = [Q, y_0, ..., y_{q-p-1}]``.
    a : ndarray, shape (m,)
        Coefficients of the whitening operator ``sum_j a_j W_j``.
    s : ndarray, shape (q - p,)
        Coefficients combining the response columns.
    p : int
        Number of regressor columns.
    beta_out : ndarray, shape (p,)
        Receives the GLS coefficients on the regressor columns.

    Returns
    -------
    float
        The residual sum of squares, or -1.0 when the regressor block is not
        positive definite.
    """
    G = np.einsum("j,k,jkuv->uv", a, a, gram)
    Gpp = G[:p, :p]
    g = G[:p, p:] @ s
    gyy = s @ G[p:, p:] @ s
    if p == 0:
        return float(gyy)
    try:
        L = np.linalg.cholesky(Gpp)
    except np.linalg.LinAlgError:
        return -1.0
    z = _forward(L, g)
    beta_out[:] = _backward(L.T, z)
    return float(gyy - z @ z)


def _forward(L, b):
    return solve_triangular(L, b, lower=True, check_finite=False)


def _backward(U, b):
    return solve_triangular(U, b, lower=False, check_finite=False)


def logabsdet_eig(re, im, gamma):
    """Return ``sum_i log|1 - gamma * w_i|`` for eigenvalues ``w = re + i im``.

    Returns ``-inf`` when some factor vanishes.
    """
    t = (1.0 - gamma * re) ** 2 + (gamma * im) ** 2
    if np.any(t <= 0.0):
        return -np.inf
    return 0.5 * float(np.sum(np.log(t)))


def knn_indices(coords, k):
    """Indices of the ``k`` nearest neighbours of every row of ``coords``.

    Ties in distance keep the lower original index. Rows are ordered nearest
    first.
    """
    coords = np.ascontiguousarray(coords, dtype=float)
    n = coords.shape[0]
    out = np.empty((n, k), dtype=np.intp)
    for i in range(n):
        diff = coords - coords[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        d2[i] = np.inf
        out[i] = np.argsort(d2, kind="stable")[:k]
    return out
