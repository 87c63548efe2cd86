"""Profile quasi-maximum-likelihood estimation.

The Gaussian likelihood is concentrated in the regression coefficients and
the noise variance, leaving a search over the covariance parameters gamma and,
with spatial lags in the response, over phi = (lambda, gamma).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares

from . import _kernels
from .basis import DesignMatrix
from .covariance import CovarianceModel, NonparDistance, _Filter
from .errors import InvalidArgument, RankDeficientDesign, SingularCovariance
from .optimize import OptimizeOptions, ParamSpace, minimize_box
from .weights import DistanceWeightSpec

LOG_2PI = float(np.log(2.0 * np.pi))
COND_MAX = 1e12
SAR_BOUND = 0.95


def _psi_array(psi):
    arr = psi.psi if isinstance(psi, DesignMatrix) else np.asarray(psi, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _check_yx(y, psi):
    y = np.asarray(y, dtype=float).ravel()
    if psi.shape[0] != y.size:
        raise InvalidArgument(f"y has {y.size} rows but the design has {psi.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("y must be finite")
    return y


class ConcentratedLikelihood:
    """Evaluator of the concentrated negative log-likelihood over phi = (lambda, gamma).

    The design is orthonormalised once (``Psi = Q R``); the fit is invariant
    to that recombination and the whitened Gram matrix stays well conditioned.
    When the family's inverse factor is linear in gamma,
    ``A(gamma) = I - sum_j gamma_j M_j``, all cross products
    ``(M_j X)'(M_k X)`` are formed up front and each evaluation reduces to a
    small quadratic form plus a ``p x p`` Cholesky (``_kernels.ar_profile``).
    """

    def __init__(self, y, psi, model: CovarianceModel, sar_weights=()):
        psi = _psi_array(psi)
        y = _check_yx(y, psi)
        n, p = psi.shape
        if n != model.n:
            raise InvalidArgument(f"covariance model has n={model.n}, data has n={n}")
        if p >= n:
            raise InvalidArgument(f"need n > p (n={n}, p={p})")
        self.n, self.p = n, p
        self.y, self.psi, self.model = y, psi, model
        self.Q, self.R = np.linalg.qr(psi)
        if p:
            cond = np.linalg.cond(self.R) ** 2
            if not np.isfinite(cond) or cond > COND_MAX:
                raise RankDeficientDesign(f"Psi'Psi condition number {cond:.3g} exceeds {COND_MAX:g}", cond)
        self.sar = _Filter(list(sar_weights), -1.0)
        self.n_lambda = len(self.sar)
        self.n_gamma = model.n_params
        Y = np.column_stack([y] + [m @ y for m in self.sar.mats])
        self._Y = Y
        self.fast = model.ar_mats is not None
        if self.fast:
            X = np.column_stack([self.Q, Y])
            WX = [X] + [m @ X for m in model.ar_mats]
            self._gram = np.ascontiguousarray(np.einsum("jnu,knv->jkuv", np.array(WX), np.array(WX)))
        self._beta = np.empty(p)

    @property
    def dim(self) -> int:
        return self.n_lambda + self.n_gamma

    def _split(self, phi):
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        if phi.shape != (self.dim,):
            raise InvalidArgument(f"expected {self.dim} parameters, got {phi.shape}")
        return phi[: self.n_lambda], phi[self.n_lambda:]

    def _ssr(self, lam, gam):
        s = np.concatenate([[1.0], -lam])
        if self.fast:
            a = np.concatenate([[1.0], -gam])
            return _kernels.ar_profile(self._gram, a, s, self.p, self._beta)
        Z = self.model.whiten(gam, np.column_stack([self.Q, self._Y @ s]))
        if not np.all(np.isfinite(Z)):
            raise self.model._singular(gam)
        gram = np.ascontiguousarray((Z.T @ Z)[None, None])
        return _kernels.ar_profile(gram, np.ones(1), np.ones(1), self.p, self._beta)

    def value(self, phi) -> float:
        """Concentrated likelihood; raises on singular operators."""
        lam, gam = self._split(phi)
        logdet = self.model.logdet(gam)
        ls = self.sar.logabsdet(lam) if self.n_lambda else 0.0
        if not np.isfinite(ls):
            raise SingularCovariance(f"S(lambda) singular at lambda={lam}", lam)
        ssr = self._ssr(lam, gam)
        if ssr == -1.0:
            raise RankDeficientDesign("Psi' Sigma^-1 Psi is not positive definite")
        sigma2 = max(ssr, 0.0) / self.n
        with np.errstate(divide="ignore"):
            return LOG_2PI + float(np.log(sigma2)) + (logdet - 2.0 * ls) / self.n

    def __call__(self, phi) -> float:
        try:
            return self.value(phi)
        except (SingularCovariance, RankDeficientDesign, np.linalg.LinAlgError):
            return np.inf

    def profile(self, phi):
        """Return ``(beta, sigma2, value, theta_hat)`` at ``phi``."""
        val = self.value(phi)
        lam, _ = self._split(phi)
        ssr = self._ssr(lam, self._split(phi)[1])
        bq = self._beta.copy()
        beta = sla.solve_triangular(self.R, bq) if self.p else bq
        return beta, max(ssr, 0.0) / self.n, val, self.Q @ bq


@dataclass
class FitResult:
    gamma_hat: np.ndarray
    lambda_hat: np.ndarray
    beta_hat: np.ndarray
    sigma2_hat: float
    neg_loglik: float
    n_evals: int
    converged: bool
    at_boundary: bool
    theta_hat: np.ndarray = field(repr=False, default=None)
    trace: list | None = field(repr=False, default=None)

    @property
    def phi_hat(self) -> np.ndarray:
        return np.concatenate([self.lambda_hat, self.gamma_hat])

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        d.pop("theta_hat")
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
            elif isinstance(v, (np.floating, np.bool_)):
                d[k] = v.item()
        return d

    def trace_rows(self):
        """``(eval_index, phi..., neg_loglik)`` rows for the evaluation log."""
        for i, (x, v) in enumerate(self.trace or []):
            yield [i, *x.tolist(), v]


def default_space(model: CovarianceModel, n_lambda: int = 0) -> ParamSpace:
    lo, hi = model.default_bounds()
    gam = ParamSpace(lo, hi, model.log_scale())
    if not n_lambda:
        return gam
    lam = ParamSpace(np.full(n_lambda, -SAR_BOUND), np.full(n_lambda, SAR_BOUND))
    return ParamSpace.concat(lam, gam)


def _fit(obj: ConcentratedLikelihood, space, opts) -> FitResult:
    if space.dim != obj.dim:
        raise InvalidArgument(f"parameter space has dim {space.dim}, model needs {obj.dim}")
    res = minimize_box(obj, space, opts)
    beta, sigma2, val, theta = obj.profile(res.x)
    lam, gam = obj._split(res.x)
    return FitResult(
        gamma_hat=gam.copy(),
        lambda_hat=lam.copy(),
        beta_hat=beta,
        sigma2_hat=float(sigma2),
        neg_loglik=float(val),
        n_evals=res.nfev,
        converged=bool(res.converged),
        at_boundary=space.at_boundary(res.x),
        theta_hat=theta,
        trace=res.trace if (opts and opts.trace) else None,
    )


def fit_qmle(y, psi, model: CovarianceModel, space: ParamSpace | None = None,
             opts: OptimizeOptions | None = None) -> FitResult:
    """QMLE of gamma; beta and sigma^2 are the profile values at the optimum."""
    obj = ConcentratedLikelihood(y, psi, model)
    return _fit(obj, space or default_space(model), opts)


def fit_qmle_sar(y, psi, sar_weights, model: CovarianceModel, space: ParamSpace | None = None,
                 opts: OptimizeOptions | None = None) -> FitResult:
    """QMLE of phi = (lambda, gamma) with spatial lags of the response."""
    obj = ConcentratedLikelihood(y, psi, model, sar_weights)
    return _fit(obj, space or default_space(model, len(sar_weights)), opts)


def fit_qmle_npw(y, psi, spec: DistanceWeightSpec, space_tau: ParamSpace | None = None,
                 opts: OptimizeOptions | None = None) -> FitResult:
    """QMLE of the distance-polynomial weight coefficients tau."""
    return fit_qmle(y, psi, NonparDistance(spec), space_tau, opts)


# -- direct (non-optimising) evaluations ---------------------------------------


def profile_beta_sigma(y, psi, model: CovarianceModel, gamma):
    """GLS coefficients and residual variance at a fixed gamma.

    Returns ``(beta, sigma2)`` with ``beta = (Psi' S^-1 Psi)^-1 Psi' S^-1 y``
    and ``sigma2`` the mean squared whitened GLS residual.
    """
    psi = _psi_array(psi)
    y = _check_yx(y, psi)
    Z = model.whiten(gamma, np.column_stack([psi, y]))
    if not np.all(np.isfinite(Z)):
        raise model._singular(np.atleast_1d(gamma))
    Zp, zy = Z[:, :-1], Z[:, -1]
    if psi.shape[1]:
        s = np.linalg.svd(Zp, compute_uv=False)
        cond = (s[0] / s[-1]) ** 2 if s[-1] > 0 else np.inf
        if cond > COND_MAX:
            raise RankDeficientDesign(f"Psi' Sigma^-1 Psi condition number {cond:.3g} exceeds {COND_MAX:g}", cond)
        beta = np.linalg.lstsq(Zp, zy, rcond=None)[0]
    else:
        beta = np.zeros(0)
    r = zy - Zp @ beta
    return beta, float(r @ r) / y.size


def concentrated_loglik(y, psi, model: CovarianceModel, gamma) -> float:
    _, sigma2 = profile_beta_sigma(y, psi, model, gamma)
    with np.errstate(divide="ignore"):
        return LOG_2PI + float(np.log(sigma2)) + model.logdet(gamma) / len(np.ravel(y))


def concentrated_loglik_sar(y, psi, sar_weights, model: CovarianceModel, phi) -> float:
    """Concentrated likelihood with response lags; ``phi = (lambda, gamma)``."""
    sar = _Filter(list(sar_weights), -1.0)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    lam, gam = phi[: len(sar)], phi[len(sar):]
    y = np.asarray(y, dtype=float).ravel()
    sy = sar.apply(lam, y) if len(sar) else y
    ls = sar.logabsdet(lam) if len(sar) else 0.0
    if not np.isfinite(ls):
        raise SingularCovariance("S(lambda) singular", lam)
    _, sigma2 = profile_beta_sigma(sy, psi, model, gam)
    with np.errstate(divide="ignore"):
        return LOG_2PI + float(np.log(sigma2)) + (model.logdet(gam) - 2.0 * ls) / y.size


# -- null-model fit ------------------------------------------------------------


@dataclass(frozen=True)
class ParametricFamily:
    """Null regression family ``f(x, alpha)``.

    ``kind`` is ``"linear"`` (intercept plus each regressor), ``"constant"``
    or ``"custom"``; the last needs ``func`` and a starting ``alpha0`` and is
    fitted by nonlinear least squares. With ``fixed=True`` the null
    parameters are not estimated: ``alpha0`` is used as is.
    """

    kind: str = "linear"
    func: Callable | None = None
    alpha0: tuple | None = None
    jac: Callable | None = None
    fixed: bool = False

    def __post_init__(self):
        if self.kind not in ("linear", "constant", "custom"):
            raise InvalidArgument(f"unknown null family {self.kind!r}")
        if self.kind == "custom" and (self.func is None or self.alpha0 is None):
            raise InvalidArgument("custom null family needs func and alpha0")
        if self.fixed and self.alpha0 is None:
            raise InvalidArgument("a fixed null family needs alpha0")

    def regressors(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.kind == "constant":
            return np.ones((x.shape[0], 1))
        return np.column_stack([np.ones(x.shape[0]), x])

    def __call__(self, x, alpha):
        if self.kind == "custom":
            return np.asarray(self.func(x, alpha), dtype=float)
        return self.regressors(x) @ np.asarray(alpha, dtype=float)


LINEAR = ParametricFamily("linear")


@dataclass(frozen=True, eq=False)
class NullFit:
    alpha_hat: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray


def fit_null(y_adjusted, x, f_spec: ParametricFamily = LINEAR) -> NullFit:
    """Least-squares fit of the null regression family."""
    y = np.asarray(y_adjusted, dtype=float).ravel()
    if f_spec.fixed:
        alpha = np.asarray(f_spec.alpha0, dtype=float)
    elif f_spec.kind == "custom":
        res = least_squares(
            lambda a: f_spec(x, a) - y,
            np.asarray(f_spec.alpha0, dtype=float),
            jac=(lambda a: f_spec.jac(x, a)) if f_spec.jac else "2-point",
            xtol=1e-12, ftol=1e-12, gtol=1e-12,
        )
        alpha = res.x
    else:
        X = f_spec.regressors(x)
        if X.shape[0] != y.size:
            raise InvalidArgument("x and y have different numbers of rows")
        s = np.linalg.svd(X, compute_uv=False)
        if s[-1] == 0 or (s[0] / s[-1]) ** 2 > COND_MAX:
            raise RankDeficientDesign("null-model regressor matrix is rank deficient")
        alpha = np.linalg.lstsq(X, y, rcond=None)[0]
    fitted = f_spec(x, alpha)
    return NullFit(alpha, y - fitted, fitted)
