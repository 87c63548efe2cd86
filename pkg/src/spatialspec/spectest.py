"""The specification test statistics T_n and T_n^a.

Both compare the parametric null fit with the series fit of the regression
function, weighting by the estimated error covariance; they are centred and
scaled so the null distribution is approximately standard normal, and the
test rejects in the right tail only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .basis import BasisSpec, DesignMatrix, build_design
from .covariance import CovarianceModel, _Filter
from .errors import InvalidArgument, SpatialSpecError, StageError
from .optimize import OptimizeOptions, ParamSpace
from .qmle import (
    LINEAR, ConcentratedLikelihood, FitResult, NullFit, ParametricFamily, _fit, default_space, fit_null,
)


@dataclass(frozen=True, eq=False)
class TestInput:
    """Data and model choices for one test.

    ``space`` overrides the default parameter box for ``(lambda, gamma)``.
    """

    __test__ = False  # not a pytest class

    y: np.ndarray
    x: np.ndarray
    basis: BasisSpec
    cov: CovarianceModel
    sar_weights: tuple = ()
    null_family: ParametricFamily = LINEAR
    space: ParamSpace | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != y.size or self.cov.n != y.size:
            raise InvalidArgument(
                f"inconsistent sizes: y has {y.size}, x has {x.shape[0]}, covariance has n={self.cov.n}"
            )
        for w in self.sar_weights:
            if w.shape[0] != y.size:
                raise InvalidArgument("SAR weights must be n x n")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sar_weights", tuple(self.sar_weights))

    @property
    def n(self) -> int:
        return self.y.size

    def with_y(self, y) -> TestInput:
        return TestInput(y, self.x, self.basis, self.cov, self.sar_weights, self.null_family, self.space)


@dataclass(eq=False)
class TestResult:
    __test__ = False

    t_n: float
    t_n_a: float
    p_asym: float
    p_asym_a: float
    m_hat: float
    m_tilde: float
    p: int
    n: int
    fit_alt: FitResult = field(repr=False)
    fit_null: NullFit = field(repr=False)
    boot: object | None = field(default=None, repr=False)

    def reject(self, level: float = 0.05, statistic: str = "t_n") -> bool:
        """Asymptotic one-sided decision: strict ``T > z_{1-level}``."""
        from scipy.stats import norm

        return bool(getattr(self, statistic) > norm.ppf(1.0 - level))

    def to_json(self) -> dict:
        out = {
            "t_n": self.t_n,
            "t_n_a": self.t_n_a,
            "p_asym": self.p_asym,
            "p_asym_a": self.p_asym_a,
            "m_hat": self.m_hat,
            "m_tilde": self.m_tilde,
            "p": self.p,
            "n": self.n,
            "fit_alt": self.fit_alt.to_json(),
            "fit_null": {"alpha_hat": np.asarray(self.fit_null.alpha_hat).tolist()},
            "boot": self.boot.to_json() if self.boot is not None else None,
        }
        return out


def _quadforms(model, gamma_hat, *vectors):
    Z = model.whiten(gamma_hat, np.column_stack(vectors))
    if not np.all(np.isfinite(Z)):
        raise model._singular(np.atleast_1d(gamma_hat))
    return Z.T @ Z


def compute_mhat(u_hat, v_hat, model: CovarianceModel, gamma_hat, sigma2_hat) -> float:
    """``v' Sigma^-1 u / (n sigma^2)``."""
    if not sigma2_hat > 0:
        raise InvalidArgument("sigma2_hat must be positive")
    u = np.asarray(u_hat, dtype=float).ravel()
    G = _quadforms(model, gamma_hat, u, np.asarray(v_hat, dtype=float).ravel())
    return float(G[1, 0]) / (sigma2_hat * u.size)


def compute_mtilde(u_hat, eta_hat, model: CovarianceModel, gamma_hat, sigma2_hat) -> float:
    """``(u' Sigma^-1 u - eta' Sigma^-1 eta) / (n sigma^2)``."""
    if not sigma2_hat > 0:
        raise InvalidArgument("sigma2_hat must be positive")
    u = np.asarray(u_hat, dtype=float).ravel()
    G = _quadforms(model, gamma_hat, u, np.asarray(eta_hat, dtype=float).ravel())
    return float(G[0, 0] - G[1, 1]) / (sigma2_hat * u.size)


def local_alternative_shift(h_values, p: int, n: int) -> np.ndarray:
    """Drift ``p**(1/4) / sqrt(n) * h`` of a local alternative."""
    return (p**0.25 / np.sqrt(n)) * np.asarray(h_values, dtype=float)


def standardize(nm: float, p: int) -> float:
    return (nm - p) / np.sqrt(2.0 * p)


class TestPipeline:
    """Runs the test for one design and covariance setup, any number of responses.

    The series design is built once; the bootstrap reuses the pipeline for
    every resampled response.
    """

    __test__ = False

    def __init__(self, inp: TestInput, opts: OptimizeOptions | None = None, design: DesignMatrix | None = None):
        self.inp = inp
        self.opts = opts
        self.design = design if design is not None else build_design(inp.x, inp.basis)
        self.space = inp.space or default_space(inp.cov, len(inp.sar_weights))
        self.sar = _Filter(list(inp.sar_weights), -1.0)
        n, p = self.design.psi.shape
        if n <= p + self.space.dim:
            raise InvalidArgument(f"need n > p + dim(phi) (n={n}, p={p}, dim={self.space.dim})")

    def run(self, y) -> TestResult:
        inp = self.inp
        try:
            obj = ConcentratedLikelihood(y, self.design, inp.cov, inp.sar_weights)
            fit = _fit(obj, self.space, self.opts)
        except SpatialSpecError as exc:
            raise StageError("fit_alternative", exc) from exc
        y = obj.y
        y_adj = self.sar.apply(fit.lambda_hat, y) if len(self.sar) else y
        try:
            null = fit_null(y_adj, inp.x, inp.null_family)
        except SpatialSpecError as exc:
            raise StageError("fit_null", exc) from exc
        theta = fit.theta_hat
        u_hat = y_adj - null.fitted
        v_hat = theta - null.fitted
        eta_hat = y_adj - theta
        try:
            if not fit.sigma2_hat > 0:
                raise InvalidArgument("estimated sigma^2 is zero")
            G = _quadforms(inp.cov, fit.gamma_hat, u_hat, v_hat, eta_hat)
        except SpatialSpecError as exc:
            raise StageError("statistic", exc) from exc
        n, p = y.size, self.design.p
        m_hat = float(G[1, 0]) / (fit.sigma2_hat * n)
        m_tilde = float(G[0, 0] - G[2, 2]) / (fit.sigma2_hat * n)
        t = standardize(n * m_hat, p)
        ta = standardize(n * m_tilde, p)
        return TestResult(
            t_n=float(t),
            t_n_a=float(ta),
            p_asym=float(ndtr(-t)),
            p_asym_a=float(ndtr(-ta)),
            m_hat=m_hat,
            m_tilde=m_tilde,
            p=p,
            n=n,
            fit_alt=fit,
            fit_null=null,
        )


def run_test(inp: TestInput, opts: OptimizeOptions | None = None) -> TestResult:
    """Fit the alternative and null models and compute both statistics."""
    return TestPipeline(inp, opts).run(inp.y)
