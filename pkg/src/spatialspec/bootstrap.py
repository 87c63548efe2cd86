"""Fixed-regressor residual bootstrap for the specification statistics.

Innovations are recovered through the fitted spatial filters, centred,
resampled with replacement and pushed back through the filters around the
fitted null regression; both hypotheses are re-estimated on every bootstrap
sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .covariance import CovarianceModel, _Filter
from .errors import SpatialSpecError
from .optimize import OptimizeOptions
from .spectest import TestInput, TestPipeline, TestResult

MAX_REDRAWS = 3


def _seed_sequence(seed, *key) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def replication_rng(seed, *key) -> np.random.Generator:
    """Generator for replication ``key`` of a run seeded with ``seed``.

    Depends only on ``(seed, key)``, so results do not depend on how
    replications are spread over workers.
    """
    return np.random.default_rng(_seed_sequence(seed, *key))


@dataclass(eq=False)
class BootstrapResult:
    b: int
    t_star: np.ndarray
    t_a_star: np.ndarray
    p_star: float
    p_a_star: float
    seed: int
    n_failed: int
    n_boundary: int = 0

    def reject(self, level: float = 0.05, statistic: str = "t_n") -> bool:
        p = self.p_star if statistic == "t_n" else self.p_a_star
        return bool(p < level)

    def to_json(self) -> dict:
        return {
            "b": self.b,
            "p_star": self.p_star,
            "p_a_star": self.p_a_star,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "n_boundary": self.n_boundary,
            "t_star": self.t_star.tolist(),
            "t_a_star": self.t_a_star.tolist(),
        }


def extract_innovations(y, theta_hat, lambda_hat, gamma_hat, model: CovarianceModel, sar_weights=()):
    """Centred innovations ``F(gamma)^{-1} (S(lambda) y - theta)``.

    For SARMA-type errors ``F^{-1} = (I + sum g3 W3)^{-1} (I - sum g2 W2)``.
    """
    y = np.asarray(y, dtype=float).ravel()
    sar = _Filter(list(sar_weights), -1.0)
    sy = sar.apply(np.atleast_1d(lambda_hat), y) if len(sar) else y
    xi = model.whiten(gamma_hat, sy - np.asarray(theta_hat, dtype=float))
    if not np.all(np.isfinite(xi)):
        raise model._singular(np.atleast_1d(gamma_hat))
    return xi - xi.mean()


def resample_and_regenerate(xi_tilde, f_hat, lambda_hat, gamma_hat, model: CovarianceModel,
                            sar_weights=(), rng=None):
    """Bootstrap response ``S(lambda)^{-1} (f_hat + F(gamma) xi*)`` with ``xi*`` drawn from ``xi_tilde``."""
    rng = rng if rng is not None else np.random.default_rng()
    xi_tilde = np.asarray(xi_tilde, dtype=float)
    xi_star = xi_tilde[rng.integers(0, xi_tilde.size, size=xi_tilde.size)]
    u = model.color(gamma_hat, xi_star)
    sar = _Filter(list(sar_weights), -1.0)
    rhs = np.asarray(f_hat, dtype=float) + u
    return sar.solve(np.atleast_1d(lambda_hat), rhs) if len(sar) else rhs


class _Replicator:
    """Picklable per-replication task."""

    def __init__(self, pipeline, observed, seed):
        fit = observed.fit_alt
        inp = pipeline.inp
        self.pipeline = pipeline
        self.seed = seed
        self.lam = fit.lambda_hat
        self.gam = fit.gamma_hat
        self.f_hat = observed.fit_null.fitted
        self.xi = extract_innovations(inp.y, fit.theta_hat, self.lam, self.gam, inp.cov, inp.sar_weights)

    def __call__(self, j):
        inp = self.pipeline.inp
        for attempt in range(MAX_REDRAWS + 1):
            rng = replication_rng(self.seed, j, attempt)
            y_star = resample_and_regenerate(self.xi, self.f_hat, self.lam, self.gam, inp.cov, inp.sar_weights, rng)
            try:
                res = self.pipeline.run(y_star)
            except SpatialSpecError:
                continue
            return res.t_n, res.t_n_a, res.fit_alt.at_boundary
        return None


def bootstrap_pvalues(inp: TestInput, observed: TestResult, b: int = 100, seed=0,
                      opts: OptimizeOptions | None = None, threads: int = 1,
                      pipeline: TestPipeline | None = None) -> BootstrapResult:
    """Bootstrap p-values ``p* = #{j : T < T*_j} / B`` for both statistics.

    Replications whose refit fails are redrawn up to three times and then
    dropped; the denominator counts successful replications only.
    """
    if b < 1:
        raise ValueError("b must be positive")
    pipeline = pipeline or TestPipeline(inp, opts)
    task = _Replicator(pipeline, observed, seed)
    out = parallel_map(task, range(b), threads)
    ok = [r for r in out if r is not None]
    t_star = np.array([r[0] for r in ok])
    ta_star = np.array([r[1] for r in ok])
    n_ok = len(ok)
    p_star = float(np.sum(observed.t_n < t_star)) / n_ok if n_ok else float("nan")
    p_a_star = float(np.sum(observed.t_n_a < ta_star)) / n_ok if n_ok else float("nan")
    seed_out = int(seed.entropy) if isinstance(seed, np.random.SeedSequence) else int(seed)
    return BootstrapResult(
        b=b,
        t_star=t_star,
        t_a_star=ta_star,
        p_star=p_star,
        p_a_star=p_a_star,
        seed=seed_out,
        n_failed=b - n_ok,
        n_boundary=int(sum(r[2] for r in ok)),
    )
