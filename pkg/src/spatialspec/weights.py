"""Spatial weight matrices.

Weight matrices are held as sorted CSR arrays; dense copies are made only on
request. Besides k-nearest-neighbour construction this module builds the
distance-polynomial weights used when the weight function itself is unknown,
and the simulated "true" weights for that setting.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import ndtr

from . import _kernels
from .errors import InvalidArgument

NORMALIZATIONS = ("none", "row_stochastic", "spectral_scaled")

POWER_RTOL = 1e-10
POWER_MAXITER = 10_000
DENSE_EIG_MAX_N = 512


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Sparse ``n x n`` spatial weight operator with a zero diagonal.

    Parameters
    ----------
    matrix : scipy.sparse matrix or array_like
        The weights. Converted to CSR with sorted indices and explicit zeros
        removed.
    normalization : {"none", "row_stochastic", "spectral_scaled"}
        How the weights were normalized. Informational, but checked by
        :meth:`check`.
    scale : float, optional
        The factor ``c`` of a ``spectral_scaled`` matrix, whose spectral
        radius is then at most ``1 / c``.
    """

    matrix: sp.csr_matrix
    normalization: str = "none"
    scale: float | None = None

    def __post_init__(self):
        m = self.matrix
        m = sp.csr_matrix(m, dtype=float) if not sp.issparse(m) else m.tocsr().astype(float)
        m = m.copy()
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidArgument(f"weight matrix must be square, got shape {m.shape}")
        m.eliminate_zeros()
        m.sort_indices()
        if not np.all(np.isfinite(m.data)):
            raise InvalidArgument("weight matrix has non-finite entries")
        if np.any(m.diagonal() != 0.0):
            raise InvalidArgument("weight matrix must have an exactly zero diagonal")
        if self.normalization not in NORMALIZATIONS:
            raise InvalidArgument(f"unknown normalization {self.normalization!r}")
        if self.normalization == "spectral_scaled" and (self.scale is None or self.scale <= 0):
            raise InvalidArgument("spectral_scaled normalization needs a positive scale")
        m.data.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def T(self) -> sp.csr_matrix:
        return self.matrix.T.tocsr()

    def __matmul__(self, other):
        return self.matrix @ other

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def row_normalize(self) -> WeightMatrix:
        """Scale each row with at least one neighbour to sum to one."""
        rs = self.row_sums()
        inv = np.zeros_like(rs)
        nz = rs != 0
        inv[nz] = 1.0 / rs[nz]
        return WeightMatrix(sp.diags(inv) @ self.matrix, "row_stochastic")

    def spectral_scale(self, factor: float = 1.0) -> WeightMatrix:
        """Divide by ``factor`` times the spectral radius."""
        rho = self.spectral_radius
        if rho == 0.0:
            raise InvalidArgument("cannot spectrally scale an all-zero weight matrix")
        return WeightMatrix(self.matrix / (factor * rho), "spectral_scaled", float(factor))

    @cached_property
    def spectral_radius(self) -> float:
        return spectral_radius(self.matrix)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues (complex), from a dense eigensolve. Cached."""
        return np.linalg.eigvals(self.to_dense())

    def check(self, spectral: bool = False) -> None:
        """Validate the normalization invariants; raise InvalidArgument if broken."""
        if self.normalization == "row_stochastic":
            rs = self.row_sums()
            has = np.diff(self.matrix.indptr) > 0
            if np.any(np.abs(rs[has] - 1.0) > 1e-12):
                raise InvalidArgument("row_stochastic weights have a row not summing to 1")
        if spectral and self.normalization == "spectral_scaled":
            if self.spectral_radius > 1.0 / self.scale + 1e-10:
                raise InvalidArgument("spectral radius exceeds 1/scale")

    def to_json(self) -> dict:
        return {"normalization": self.normalization, "scale": self.scale, "n": self.n}


def spectral_radius(matrix) -> float:
    """Largest absolute eigenvalue.

    Power iteration first; when it does not settle (complex or tied dominant
    eigenvalues) the answer comes from a dense eigensolve for ``n <= 512``
    and from ARPACK above that.
    """
    A = matrix.matrix if isinstance(matrix, WeightMatrix) else matrix
    A = sp.csr_matrix(A) if not sp.issparse(A) else A.tocsr()
    n = A.shape[0]
    if A.nnz == 0:
        return 0.0
    x = np.ones(n) + 1e-3 * np.cos(np.arange(n))
    x /= np.linalg.norm(x)
    y = A @ x
    for _ in range(POWER_MAXITER):
        # Rayleigh quotient; stop once (est, x) is an eigenpair to tolerance
        est = float(x @ y)
        if np.linalg.norm(y - est * x) <= POWER_RTOL * abs(est):
            return abs(est)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        y = A @ x
    if n <= DENSE_EIG_MAX_N:
        return float(np.max(np.abs(np.linalg.eigvals(A.toarray()))))
    vals = spla.eigs(A, k=1, which="LM", return_eigenvectors=False)
    return float(np.abs(vals[0]))


def knn_weights(coords, k: int, row_normalize: bool = True) -> WeightMatrix:
    """k-nearest-neighbour weights from point coordinates.

    Equal distances are resolved in favour of the lower original index.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2:
        raise InvalidArgument("coords must be an (n, d) array")
    n = coords.shape[0]
    if not np.all(np.isfinite(coords)):
        raise InvalidArgument("coords must be finite")
    if k < 1 or k >= n:
        raise InvalidArgument(f"need 1 <= k < n, got k={k}, n={n}")
    nbrs = _kernels.knn_indices(coords, int(k))
    rows = np.repeat(np.arange(n), k)
    vals = np.full(n * k, 1.0 / k if row_normalize else 1.0)
    m = sp.csr_matrix((vals, (rows, nbrs.ravel())), shape=(n, n))
    return WeightMatrix(m, "row_stochastic" if row_normalize else "none")


@dataclass(frozen=True, eq=False)
class DistanceWeightSpec:
    """Raw distances, a sparsity mask and polynomial sieve coefficients.

    ``coefficients`` has length ``order + 1``; entry ``(i, j)`` of the
    resulting weight matrix is ``sum_l a_l d_ij**l`` where the mask is set.
    """

    distances: np.ndarray
    mask: np.ndarray
    order: int
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        mask = np.asarray(self.mask, dtype=bool).copy()
        if d.ndim != 2 or d.shape[0] != d.shape[1] or mask.shape != d.shape:
            raise InvalidArgument("distances and mask must be matching square arrays")
        if np.any(np.diag(mask)):
            raise InvalidArgument("mask diagonal must be false")
        if not np.all(np.isfinite(d[mask])):
            raise InvalidArgument("distances must be finite where the mask is set")
        if self.order < 0:
            raise InvalidArgument("order must be nonnegative")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "mask", mask)
        if self.coefficients is not None:
            a = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
            if a.shape != (self.order + 1,):
                raise InvalidArgument(
                    f"need {self.order + 1} coefficients for order {self.order}, got {a.size}"
                )
            object.__setattr__(self, "coefficients", a)

    @property
    def n(self) -> int:
        return self.distances.shape[0]

    def with_coefficients(self, coefficients) -> DistanceWeightSpec:
        return DistanceWeightSpec(self.distances, self.mask, self.order, coefficients)

    @cached_property
    def basis_matrices(self) -> list[sp.csr_matrix]:
        """Sparse ``mask * d**l`` for ``l = 0..order``, all on the mask pattern."""
        rows, cols = np.nonzero(self.mask)
        dvals = self.distances[rows, cols]
        out = []
        for l in range(self.order + 1):
            m = sp.csr_matrix((dvals**l, (rows, cols)), shape=self.distances.shape)
            m.sort_indices()
            out.append(m)
        return out


def build_distance_weights(spec: DistanceWeightSpec) -> WeightMatrix:
    """Polynomial-in-distance weights on the masked pattern, unnormalized."""
    if spec.coefficients is None:
        raise InvalidArgument("spec has no coefficients")
    rows, cols = np.nonzero(spec.mask)
    vals = np.polynomial.polynomial.polyval(spec.distances[rows, cols], spec.coefficients)
    m = sp.csr_matrix((vals, (rows, cols)), shape=spec.distances.shape)
    return WeightMatrix(m, "none")


def simulate_npw_truth(
    n: int,
    rng: np.random.Generator,
    symmetric_mask: bool = False,
    scale: float = 1.2,
    max_resample: int = 100,
):
    """Draw the sparse normal-cdf weight design with its distances and mask.

    ``d_ij ~ U[-3, 3]`` (drawn for ``i < j`` and mirrored), ``c_ij ~ U[0, 1]``
    per ordered pair unless ``symmetric_mask``; the truth is
    ``Phi(-d_ij) * 1(c_ij < 0.05)`` divided by ``scale`` times its spectral
    radius.

    Returns
    -------
    W : WeightMatrix
    distances : ndarray
    mask : ndarray of bool
    """
    if n < 2:
        raise InvalidArgument("n must be at least 2")
    iu = np.triu_indices(n, 1)
    for _ in range(max_resample):
        d = np.zeros((n, n))
        d[iu] = rng.uniform(-3.0, 3.0, size=iu[0].size)
        d = d + d.T
        if symmetric_mask:
            c = np.ones((n, n))
            c[iu] = rng.uniform(0.0, 1.0, size=iu[0].size)
            c = np.minimum(c, c.T)
        else:
            c = rng.uniform(0.0, 1.0, size=(n, n))
        mask = c < 0.05
        np.fill_diagonal(mask, False)
        if mask.any():
            break
    else:
        raise InvalidArgument(f"all-zero weight draw {max_resample} times in a row (n={n})")
    rows, cols = np.nonzero(mask)
    wstar = WeightMatrix(sp.csr_matrix((ndtr(-d[rows, cols]), (rows, cols)), shape=(n, n)))
    return wstar.spectral_scale(scale), d, mask


def read_weights(path, n: int | None = None) -> WeightMatrix:
    """Load weights from a ``row,col,value`` triplet CSV or a dense CSV.

    The format is chosen from the header line. For triplets ``n`` defaults to
    the largest index plus one.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline().strip().replace(" ", "").lower()
    if first == "row,col,value":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            if n is None:
                raise InvalidArgument(f"{path}: empty triplet file and no n given")
            return WeightMatrix(sp.csr_matrix((n, n)))
        rows = data[:, 0].astype(np.intp)
        cols = data[:, 1].astype(np.intp)
        if np.any(rows != data[:, 0]) or np.any(cols != data[:, 1]) or rows.min() < 0 or cols.min() < 0:
            raise InvalidArgument(f"{path}: row/col must be nonnegative integers")
        size = int(max(rows.max(), cols.max())) + 1 if n is None else n
        return WeightMatrix(sp.csr_matrix((data[:, 2], (rows, cols)), shape=(size, size)))
    dense = np.loadtxt(path, delimiter=",", ndmin=2)
    return WeightMatrix(sp.csr_matrix(dense))


def write_weights(w: WeightMatrix, path, fmt: str = "triplet") -> None:
    """Write weights as ``row,col,value`` triplets (0-based) or as a dense CSV."""
    path = Path(path)
    if fmt == "dense":
        np.savetxt(path, w.to_dense(), delimiter=",", fmt="%.17g")
        return
    if fmt != "triplet":
        raise InvalidArgument(f"unknown weights format {fmt!r}")
    coo = w.matrix.tocoo()
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "value"])
        for r, c, v in zip(coo.row, coo.col, coo.data):
            writer.writerow([int(r), int(c), repr(float(v))])
