"""Error covariance families Sigma(gamma).

Every family exposes a factor ``F(gamma)`` with ``Sigma = F F'``:
``whiten`` applies ``F^{-1}``, ``color`` applies ``F``. Likelihood work goes
through ``whiten`` and ``logdet``; the dense ``sigma`` is for inspection and
reference checks. The noise scale sigma^2 is never part of Sigma.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gammaln, kv

from . import _kernels
from .errors import InvalidArgument, SingularCovariance
from .weights import DistanceWeightSpec, WeightMatrix, read_weights

DENSE_LOGDET_MAX_N = 1500


def _as_csr(w):
    if isinstance(w, WeightMatrix):
        return w.matrix
    return sp.csr_matrix(w, dtype=float)


def _weight_list(weights):
    """A single weight matrix or a sequence of them, as a list."""
    if weights is None:
        return []
    if isinstance(weights, WeightMatrix) or sp.issparse(weights) or (
        isinstance(weights, np.ndarray) and weights.ndim == 2
    ):
        return [weights]
    return list(weights)


def _check_gamma(gamma, k):
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if g.shape != (k,):
        raise InvalidArgument(f"expected {k} parameters, got shape {g.shape}")
    return g


def _eig_parts(mat):
    ev = np.linalg.eigvals(mat.toarray())
    return np.ascontiguousarray(ev.real), np.ascontiguousarray(ev.imag)


def _logabsdet_sparse(M):
    """log|det M| for a sparse square matrix; -inf when singular."""
    if M.shape[0] <= DENSE_LOGDET_MAX_N:
        sign, val = np.linalg.slogdet(M.toarray())
        return val if sign != 0 else -np.inf
    try:
        lu = spla.splu(M.tocsc())
    except RuntimeError:
        return -np.inf
    d = np.abs(lu.U.diagonal())
    if np.any(d == 0):
        return -np.inf
    return float(np.sum(np.log(d)))


class _Filter:
    """The operator ``I + sign * sum_j c_j M_j`` over fixed sparse matrices.

    With a single matrix its eigenvalues are cached so the log-determinant
    costs O(n) per parameter value.
    """

    def __init__(self, mats, sign):
        self.mats = [_as_csr(m) for m in mats]
        self.sign = sign
        self.n = self.mats[0].shape[0] if self.mats else None

    def __len__(self):
        return len(self.mats)

    @cached_property
    def _eig(self):
        return _eig_parts(self.mats[0])

    def matrix(self, c):
        out = sp.identity(self.n, format="csr")
        for cj, m in zip(c, self.mats):
            if cj != 0.0:
                out = out + (self.sign * cj) * m
        return out.tocsr()

    def apply(self, c, X):
        out = np.array(X, dtype=float, copy=True)
        for cj, m in zip(c, self.mats):
            if cj != 0.0:
                out += (self.sign * cj) * (m @ X)
        return out

    def solve(self, c, X):
        if not np.any(c):
            return np.array(X, dtype=float, copy=True)
        M = self.matrix(c)
        try:
            lu = spla.splu(M.tocsc())
        except RuntimeError as exc:
            raise SingularCovariance(f"spatial filter is singular ({exc})", c) from None
        out = lu.solve(np.asarray(X, dtype=float))
        if not np.all(np.isfinite(out)):
            raise SingularCovariance("spatial filter is singular", c)
        return out

    def logabsdet(self, c):
        if not self.mats or not np.any(c):
            return 0.0
        if len(self.mats) == 1:
            re, im = self._eig
            return _kernels.logabsdet_eig(re, im, -self.sign * float(c[0]))
        return _logabsdet_sparse(self.matrix(c))


class CovarianceModel:
    """Base class. Subclasses set ``family``, ``n`` and ``n_params``."""

    family = "base"
    n: int
    n_params: int

    def sigma(self, gamma) -> np.ndarray:
        F = self.color(gamma, np.eye(self.n))
        return F @ F.T

    def whiten(self, gamma, X) -> np.ndarray:
        raise NotImplementedError

    def color(self, gamma, X) -> np.ndarray:
        raise NotImplementedError

    def logdet(self, gamma) -> float:
        raise NotImplementedError

    def default_bounds(self):
        raise NotImplementedError

    def log_scale(self):
        return np.zeros(self.n_params, dtype=bool)

    # linear-in-gamma inverse filter, if the family has one
    ar_mats = None

    def _singular(self, gamma, what="Sigma"):
        return SingularCovariance(f"{self.family}: {what} singular at gamma={np.round(gamma, 6)}", gamma)


class IID(CovarianceModel):
    family = "iid"
    n_params = 0

    def __init__(self, n):
        self.n = int(n)
        self.ar_mats = []

    def sigma(self, gamma):
        _check_gamma(gamma, 0)
        return np.eye(self.n)

    def whiten(self, gamma, X):
        return np.array(X, dtype=float, copy=True)

    color = whiten

    def logdet(self, gamma):
        return 0.0

    def default_bounds(self):
        return np.zeros(0), np.zeros(0)


class _LinearAR(CovarianceModel):
    """Sigma = A^{-1} A^{-T} with A(gamma) = I - sum_j gamma_j M_j."""

    def __init__(self, mats):
        if not mats:
            raise InvalidArgument(f"{self.family} needs at least one weight matrix")
        self._ar = _Filter(mats, -1.0)
        self.n = self._ar.n
        for m in self._ar.mats:
            if m.shape != (self.n, self.n):
                raise InvalidArgument("all weight matrices must share dimension n")
        self.n_params = len(mats)
        self.ar_mats = self._ar.mats

    def whiten(self, gamma, X):
        g = _check_gamma(gamma, self.n_params)
        return self._ar.apply(g, X)

    def color(self, gamma, X):
        g = _check_gamma(gamma, self.n_params)
        return self._ar.solve(g, X)

    def sigma(self, gamma):
        g = _check_gamma(gamma, self.n_params)
        A = self._ar.matrix(g).toarray()
        try:
            Ainv = sla.inv(A)
        except (np.linalg.LinAlgError, ValueError):
            raise self._singular(g, "I - sum gamma_j W_j") from None
        return Ainv @ Ainv.T

    def logdet(self, gamma):
        g = _check_gamma(gamma, self.n_params)
        la = self._ar.logabsdet(g)
        if not np.isfinite(la):
            raise self._singular(g, "I - sum gamma_j W_j")
        return -2.0 * la

    def default_bounds(self):
        return np.full(self.n_params, -0.95), np.full(self.n_params, 0.95)


class SEM(_LinearAR):
    """Spatial autoregressive errors ``u = sum_j gamma_j W_j u + xi``."""

    family = "SEM"

    def __init__(self, weights):
        self.weights = _weight_list(weights)
        super().__init__(self.weights)


class SMA(CovarianceModel):
    """Spatial moving-average errors ``u = xi + sum_j gamma_j W_j xi``."""

    family = "SMA"

    def __init__(self, weights):
        self.weights = _weight_list(weights)
        if not self.weights:
            raise InvalidArgument("SMA needs at least one weight matrix")
        self._ma = _Filter(self.weights, 1.0)
        self.n = self._ma.n
        self.n_params = len(self.weights)

    def whiten(self, gamma, X):
        return self._ma.solve(_check_gamma(gamma, self.n_params), X)

    def color(self, gamma, X):
        return self._ma.apply(_check_gamma(gamma, self.n_params), X)

    def sigma(self, gamma):
        B = self._ma.matrix(_check_gamma(gamma, self.n_params)).toarray()
        return B @ B.T

    def logdet(self, gamma):
        g = _check_gamma(gamma, self.n_params)
        lb = self._ma.logabsdet(g)
        if not np.isfinite(lb):
            raise self._singular(g, "I + sum gamma_j W_j")
        return 2.0 * lb

    def default_bounds(self):
        return np.full(self.n_params, -0.95), np.full(self.n_params, 0.95)


class SARMA(CovarianceModel):
    """``u = sum_{ar} gamma_j W_j u + sum_{ma} gamma_j W_j xi + xi``.

    Parameters are ordered autoregressive first, then moving average.
    """

    family = "SARMA"

    def __init__(self, ar_weights, ma_weights):
        self.ar_weights = _weight_list(ar_weights)
        self.ma_weights = _weight_list(ma_weights)
        if not self.ar_weights and not self.ma_weights:
            raise InvalidArgument("SARMA needs at least one weight matrix")
        self._ar = _Filter(self.ar_weights, -1.0)
        self._ma = _Filter(self.ma_weights, 1.0)
        self.m1, self.m2 = len(self.ar_weights), len(self.ma_weights)
        self.n = (self._ar.n if self.m1 else self._ma.n)
        self.n_params = self.m1 + self.m2
        if not self.m2:
            self.ar_mats = self._ar.mats

    def _split(self, gamma):
        g = _check_gamma(gamma, self.n_params)
        return g[: self.m1], g[self.m1:]

    def whiten(self, gamma, X):
        ga, gm = self._split(gamma)
        Z = self._ar.apply(ga, X)
        return self._ma.solve(gm, Z) if self.m2 else Z

    def color(self, gamma, X):
        ga, gm = self._split(gamma)
        Z = self._ma.apply(gm, X) if self.m2 else np.array(X, dtype=float, copy=True)
        return self._ar.solve(ga, Z) if self.m1 else Z

    def logdet(self, gamma):
        ga, gm = self._split(gamma)
        la = self._ar.logabsdet(ga) if self.m1 else 0.0
        lb = self._ma.logabsdet(gm) if self.m2 else 0.0
        if not (np.isfinite(la) and np.isfinite(lb)):
            raise self._singular(np.concatenate([ga, gm]))
        return 2.0 * lb - 2.0 * la

    def default_bounds(self):
        return np.full(self.n_params, -0.95), np.full(self.n_params, 0.95)


class MESS(CovarianceModel):
    """Matrix-exponential errors ``u = exp(sum_j gamma_j W_j) xi``."""

    family = "MESS"

    def __init__(self, weights):
        self.weights = _weight_list(weights)
        if not self.weights:
            raise InvalidArgument("MESS needs at least one weight matrix")
        self._mats = [_as_csr(w) for w in self.weights]
        self.n = self._mats[0].shape[0]
        self.n_params = len(self.weights)
        self._traces = np.array([m.diagonal().sum() for m in self._mats])

    @cached_property
    def _dense(self):
        return [m.toarray() for m in self._mats]

    def _expm(self, g):
        S = np.zeros((self.n, self.n))
        for gj, Wj in zip(g, self._dense):
            S += gj * Wj
        return sla.expm(S)

    def whiten(self, gamma, X):
        return self._expm(-_check_gamma(gamma, self.n_params)) @ X

    def color(self, gamma, X):
        return self._expm(_check_gamma(gamma, self.n_params)) @ X

    def sigma(self, gamma):
        E = self._expm(_check_gamma(gamma, self.n_params))
        return E @ E.T

    def logdet(self, gamma):
        # det exp(S) = exp(tr S)
        return 2.0 * float(self._traces @ _check_gamma(gamma, self.n_params))

    def default_bounds(self):
        return np.full(self.n_params, -2.0), np.full(self.n_params, 2.0)


def matern(dist, nu, rng):
    """Matern correlation at distance ``dist``; equals 1 at zero lag."""
    if nu <= 0 or rng <= 0:
        raise InvalidArgument(f"Matern parameters must be positive (nu={nu}, range={rng})")
    d = np.asarray(dist, dtype=float)
    out = np.ones_like(d)
    pos = d > 0
    z = np.sqrt(2.0 * nu) * d[pos] / rng
    logc = -((nu - 1.0) * np.log(2.0) + gammaln(nu))
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        val = np.exp(logc + nu * np.log(z)) * kv(nu, z)
    # K_nu underflows to 0 far out; the correlation is 0 there too
    out[pos] = np.where(np.isfinite(val), val, 0.0)
    return out


def powered_exponential(dist, scale, rng, power):
    if rng <= 0 or not (0 < power <= 2):
        raise InvalidArgument("powered exponential needs range > 0 and 0 < power <= 2")
    return scale * np.exp(-np.abs(np.asarray(dist, dtype=float) / rng) ** power)


class Isotropic(CovarianceModel):
    """Stationary isotropic covariance over a fixed distance matrix.

    ``kind="matern"`` takes ``(smoothness, range)``; ``kind="powered_exp"``
    takes ``(scale, range, power)``. The scale of the latter is confounded
    with sigma^2, so the concentrated likelihood is flat along it.
    """

    family = "Isotropic"

    def __init__(self, kind, distances):
        if kind not in ("matern", "powered_exp"):
            raise InvalidArgument(f"unknown isotropic kind {kind!r}")
        d = np.asarray(distances, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidArgument("distances must be a square matrix")
        self.kind = kind
        self.distances = d
        self.n = d.shape[0]
        self.n_params = 2 if kind == "matern" else 3

    def sigma(self, gamma):
        g = _check_gamma(gamma, self.n_params)
        if self.kind == "matern":
            S = matern(self.distances, g[0], g[1])
        else:
            S = powered_exponential(self.distances, g[0], g[1], g[2])
        return 0.5 * (S + S.T)

    def _chol(self, gamma):
        g = _check_gamma(gamma, self.n_params)
        try:
            return sla.cholesky(self.sigma(g), lower=True)
        except np.linalg.LinAlgError:
            raise self._singular(g) from None

    def whiten(self, gamma, X):
        return sla.solve_triangular(self._chol(gamma), X, lower=True)

    def color(self, gamma, X):
        return self._chol(gamma) @ X

    def logdet(self, gamma):
        return 2.0 * float(np.sum(np.log(np.diag(self._chol(gamma)))))

    def default_bounds(self):
        if self.kind == "matern":
            return np.array([0.1, 1e-3]), np.array([10.0, 1e3])
        return np.array([0.1, 1e-3, 0.1]), np.array([10.0, 1e3, 2.0])

    def log_scale(self):
        if self.kind == "matern":
            return np.array([False, True])
        return np.array([True, True, False])


class NonparDistance(_LinearAR):
    """SEM errors whose weights are a polynomial in raw distance.

    ``W(tau)_ij = sum_l tau_l d_ij**l`` on the mask, so
    ``A(tau) = I - sum_l tau_l D_l`` with ``D_l = mask * d**l``.
    """

    family = "NonparDistance"

    def __init__(self, spec: DistanceWeightSpec):
        self.spec = spec
        super().__init__(spec.basis_matrices)

    def default_bounds(self):
        return np.full(self.n_params, -5.0), np.full(self.n_params, 5.0)


@dataclass(frozen=True, eq=False)
class SigmaEval:
    sigma: np.ndarray
    log_det: float
    gamma: np.ndarray


def eval_sigma(model: CovarianceModel, gamma) -> SigmaEval:
    """Dense Sigma(gamma) with its log-determinant from a Cholesky factor."""
    g = _check_gamma(gamma, model.n_params)
    S = model.sigma(g)
    if not np.all(np.isfinite(S)):
        raise model._singular(g)
    S = 0.5 * (S + S.T)
    try:
        L = sla.cholesky(S, lower=True)
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(S)[0])
        raise SingularCovariance(
            f"{model.family}: Sigma not positive definite at gamma={g} (min eigenvalue {lam:.3g})",
            g,
            lam,
        ) from None
    return SigmaEval(S, 2.0 * float(np.sum(np.log(np.diag(L)))), g)


def eval_sigma_npw(model: NonparDistance, tau) -> SigmaEval:
    if not isinstance(model, NonparDistance):
        raise InvalidArgument("eval_sigma_npw needs a NonparDistance model")
    return eval_sigma(model, tau)


def sigma_inv_quadform(model: CovarianceModel, gamma, a, b):
    """``a' Sigma(gamma)^{-1} b`` through the whitening factor.

    1-D ``a`` and ``b`` give a float; 2-D inputs give a ``q x r`` array.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    za = model.whiten(gamma, a)
    zb = za if b is a else model.whiten(gamma, b)
    if not (np.all(np.isfinite(za)) and np.all(np.isfinite(zb))):
        raise model._singular(np.atleast_1d(gamma))
    out = za.T @ zb
    return float(out) if a.ndim == 1 and b.ndim == 1 else out


def symmetric_factor(model: CovarianceModel, gamma) -> np.ndarray:
    """Symmetric ``E`` with ``E E' = Sigma^{-1}`` (inverse square root)."""
    ev = eval_sigma(model, gamma)
    lam, Q = np.linalg.eigh(ev.sigma)
    if lam[0] <= 0:
        raise SingularCovariance("Sigma not positive definite", ev.gamma, float(lam[0]))
    return (Q / np.sqrt(lam)) @ Q.T


# -- serialization ----------------------------------------------------------


def load_model(obj, base_dir=".", weights_loader=read_weights) -> CovarianceModel:
    """Build a model from its JSON description; weight paths are relative to ``base_dir``."""
    if isinstance(obj, (str, Path)) and Path(obj).exists():
        base_dir = Path(obj).parent
        obj = json.loads(Path(obj).read_text())
    elif isinstance(obj, str):
        obj = json.loads(obj)
    base = Path(base_dir)

    def load(paths):
        return [weights_loader(base / p) for p in paths]

    fam = obj.get("family")
    if fam == "iid":
        model = IID(obj["n"])
    elif fam == "SEM":
        model = SEM(load(obj["weights"]))
    elif fam == "SMA":
        model = SMA(load(obj["weights"]))
    elif fam == "SARMA":
        model = SARMA(load(obj.get("ar_weights", [])), load(obj.get("ma_weights", [])))
    elif fam == "MESS":
        model = MESS(load(obj["weights"]))
    elif fam == "Isotropic":
        model = Isotropic(obj["kind"], np.loadtxt(base / obj["distances"], delimiter=",", ndmin=2))
    elif fam == "NonparDistance":
        d = np.loadtxt(base / obj["distances"], delimiter=",", ndmin=2)
        mask = np.loadtxt(base / obj["mask"], delimiter=",", ndmin=2) != 0
        model = NonparDistance(DistanceWeightSpec(d, mask, int(obj["order"])))
    else:
        raise InvalidArgument(f"unknown covariance family {fam!r}")
    if "params_dim" in obj and int(obj["params_dim"]) != model.n_params:
        raise InvalidArgument(
            f"params_dim={obj['params_dim']} but {fam} has {model.n_params} parameters"
        )
    return model


def model_to_json(model: CovarianceModel, **paths) -> dict:
    """JSON description; file paths for weights etc. are supplied by the caller."""
    out = {"family": model.family, "params_dim": model.n_params}
    if isinstance(model, IID):
        out["n"] = model.n
    elif isinstance(model, Isotropic):
        out["kind"] = model.kind
    elif isinstance(model, NonparDistance):
        out["order"] = model.spec.order
    out.update(paths)
    return out
