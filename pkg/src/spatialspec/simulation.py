"""Monte Carlo designs and rejection-rate tables.

Three data generating processes are provided: spatial-error errors on a
k-nearest-neighbour matrix, a spatial lag with moving-average errors on the
same matrix, and spatial-error errors whose weights are an unknown function
of a pairwise distance. The regression function is linear plus a local
deviation ``c p^{1/4} n^{-1/2} sin(x'alpha)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import norm

from ._parallel import parallel_map
from .basis import BasisSpec, build_design, count_terms
from .bootstrap import bootstrap_pvalues, replication_rng
from .covariance import SEM, SMA, NonparDistance, _Filter
from .errors import InvalidArgument, SpatialSpecError
from .optimize import OptimizeOptions, ParamSpace
from .spectest import TestInput, TestPipeline
from .weights import DistanceWeightSpec, WeightMatrix, knn_weights, simulate_npw_truth

MODELS = ("sararma_0_1_0", "sararma_1_0_1", "npw_sem")
SUPPORTS = ("compact_u02pi", "gaussian")
MIN_SUCCESS = 0.9

GAMMA2 = 0.3
LAMBDA1 = 0.3
GAMMA3 = 0.4
ALPHA = (1.0, 1.0, 1.0)
NPW_BOUND = 5.0

# spawn-key tags keeping the random streams of different uses apart
_DESIGN, _ERRORS, _BOOT = 0, 1, 2


@dataclass(frozen=True)
class McDesign:
    """A Monte Carlo experiment.

    Parameters
    ----------
    model : {"sararma_0_1_0", "sararma_1_0_1", "npw_sem"}
    n : int
    c : sequence of float
        Local-alternative magnitudes; one row block of the table each.
    basis : BasisSpec
    regressor_support : {"compact_u02pi", "gaussian"}
    reps : int
        Monte Carlo replications per value of ``c``.
    boot_b : int
        Bootstrap replications per Monte Carlo replication; 0 skips the
        bootstrap and reports asymptotic rejections only.
    levels : sequence of float
        Nominal levels, ascending in (0, 1).
    seed : int
    r : int, optional
        Polynomial order of the distance sieve (``npw_sem`` only).
    fixed_design : bool
        Draw regressors, coordinates and weights once instead of per
        replication.
    neighbours : int, optional
        k of the nearest-neighbour weights; defaults to ``n // 20``.
    """

    model: str
    n: int
    c: tuple = (0.0,)
    basis: BasisSpec = field(default_factory=lambda: BasisSpec.power(3))
    regressor_support: str = "compact_u02pi"
    reps: int = 500
    boot_b: int = 100
    levels: tuple = (0.01, 0.05, 0.10)
    seed: int = 0
    r: int | None = None
    fixed_design: bool = False
    neighbours: int | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidArgument(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.regressor_support not in SUPPORTS:
            raise InvalidArgument(f"unknown regressor support {self.regressor_support!r}")
        c = tuple(float(v) for v in np.atleast_1d(self.c))
        levels = tuple(float(v) for v in np.atleast_1d(self.levels))
        if not levels or any(not 0 < a < 1 for a in levels) or list(levels) != sorted(set(levels)):
            raise InvalidArgument("levels must be distinct, ascending and inside (0, 1)")
        if self.n < 4 or self.reps < 1 or self.boot_b < 0:
            raise InvalidArgument("need n >= 4, reps >= 1 and boot_b >= 0")
        if self.model == "npw_sem" and (self.r is None or self.r < 0):
            raise InvalidArgument("npw_sem needs a sieve order r >= 0")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "levels", levels)

    @property
    def k(self) -> int:
        return self.neighbours if self.neighbours is not None else max(1, self.n // 20)

    @property
    def p(self) -> int:
        return count_terms(self.basis, 2)

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "n": self.n,
            "c": list(self.c),
            "basis": self.basis.to_json(),
            "regressor_support": self.regressor_support,
            "reps": self.reps,
            "boot_b": self.boot_b,
            "levels": list(self.levels),
            "seed": self.seed,
            "r": self.r,
            "fixed_design": self.fixed_design,
            "neighbours": self.neighbours,
        }

    @classmethod
    def from_json(cls, obj) -> McDesign:
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgument(f"unknown design keys: {sorted(unknown)}")
        if "basis" in obj:
            obj["basis"] = BasisSpec.from_json(obj["basis"])
        return cls(**obj)

    @classmethod
    def load(cls, path) -> McDesign:
        with Path(path).open() as fh:
            return cls.from_json(json.load(fh))


def gen_regressors(n: int, support: str, rng: np.random.Generator) -> np.ndarray:
    """``x_j = (z + z_j) / 2`` with a shared component ``z``; ``n x 2``."""
    if support == "compact_u02pi":
        z = rng.uniform(0.0, 2.0 * np.pi, size=(n, 3))
    elif support == "gaussian":
        z = rng.standard_normal((n, 3))
    else:
        raise InvalidArgument(f"unknown regressor support {support!r}")
    return 0.5 * (z[:, :1] + z[:, 1:])


def gen_theta(x, alpha, c: float, p: int, n: int) -> np.ndarray:
    """``x'alpha + c p^{1/4} n^{-1/2} sin(x'alpha)`` with an intercept in ``alpha[0]``."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    xa = alpha[0] + x @ alpha[1:]
    return xa + c * p**0.25 / np.sqrt(n) * np.sin(xa)


def gen_outcome(design: McDesign, theta, weights: WeightMatrix, rng: np.random.Generator,
                xi=None) -> np.ndarray:
    """Response for ``design.model`` given the regression function and weights.

    ``xi`` overrides the standard normal innovations.
    """
    theta = np.asarray(theta, dtype=float)
    xi = rng.standard_normal(theta.size) if xi is None else np.asarray(xi, dtype=float)
    W = [weights.matrix]
    if design.model == "sararma_0_1_0":
        return theta + _Filter(W, -1.0).solve([GAMMA2], xi)
    if design.model == "sararma_1_0_1":
        rhs = theta + _Filter(W, 1.0).apply([GAMMA3], xi)
        return _Filter(W, -1.0).solve([LAMBDA1], rhs)
    return theta + _Filter(W, -1.0).solve([1.0], xi)


@dataclass(frozen=True, eq=False)
class _World:
    """Regressors and weights of one replication."""

    x: np.ndarray
    weights: WeightMatrix
    npw: DistanceWeightSpec | None = None


def _draw_world(design: McDesign, rng) -> _World:
    n = design.n
    x = gen_regressors(n, design.regressor_support, rng)
    if design.model == "npw_sem":
        W, d, mask = simulate_npw_truth(n, rng)
        return _World(x, W, DistanceWeightSpec(d, mask, design.r))
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    return _World(x, knn_weights(coords, design.k))


def _test_input(design: McDesign, world: _World, y) -> TestInput:
    if design.model == "sararma_0_1_0":
        return TestInput(y, world.x, design.basis, SEM(world.weights))
    if design.model == "sararma_1_0_1":
        return TestInput(y, world.x, design.basis, SMA(world.weights), sar_weights=(world.weights.matrix,))
    m = design.r + 1
    space = ParamSpace(np.full(m, -NPW_BOUND), np.full(m, NPW_BOUND))
    return TestInput(y, world.x, design.basis, NonparDistance(world.npw), space=space)


@dataclass(frozen=True)
class Replication:
    t_n: float
    t_n_a: float
    p_star: float
    p_a_star: float
    boot_failed: int


class _McTask:
    def __init__(self, design: McDesign, opts, fixed_world):
        self.design = design
        self.opts = opts
        self.fixed_world = fixed_world

    def __call__(self, key):
        ci, rep = key
        d = self.design
        world = self.fixed_world or _draw_world(d, replication_rng(d.seed, _DESIGN, rep))
        x = world.x
        theta = gen_theta(x, ALPHA, d.c[ci], d.p, d.n)
        # same innovations for every c, so power comparisons share noise
        y = gen_outcome(d, theta, world.weights, replication_rng(d.seed, _ERRORS, rep))
        try:
            inp = _test_input(d, world, y)
            pipe = TestPipeline(inp, self.opts)
            res = pipe.run(y)
            if d.boot_b:
                boot = bootstrap_pvalues(
                    inp, res, d.boot_b,
                    seed=np.random.SeedSequence(d.seed, spawn_key=(_BOOT, ci, rep)),
                    pipeline=pipe,
                )
                pb, pab, nf = boot.p_star, boot.p_a_star, boot.n_failed
            else:
                pb = pab = float("nan")
                nf = 0
        except SpatialSpecError:
            return None
        return Replication(res.t_n, res.t_n_a, pb, pab, nf)


STATISTICS = ("T", "Ta")


@dataclass(eq=False)
class RejectionTable:
    """Rejection frequencies by ``c`` (rows), statistic and level (columns).

    ``rates_asym[i, s, l]`` is the share of successful replications at
    ``c[i]`` with statistic ``s`` above the normal quantile for level ``l``;
    ``rates_boot`` uses ``p* < level``. ``mc_se`` holds the binomial
    standard errors ``sqrt(r (1 - r) / reps)`` of both.
    """

    design: McDesign
    rates_asym: np.ndarray
    rates_boot: np.ndarray
    n_success: np.ndarray
    stats: np.ndarray = field(repr=False)

    @property
    def mc_se_asym(self) -> np.ndarray:
        return _binom_se(self.rates_asym, self.n_success)

    @property
    def mc_se_boot(self) -> np.ndarray:
        return _binom_se(self.rates_boot, self.n_success)

    @property
    def mc_se(self) -> np.ndarray:
        return self.mc_se_boot if self.design.boot_b else self.mc_se_asym

    def rate(self, c: float, level: float, statistic: str = "T", kind: str = "boot") -> float:
        i = self.design.c.index(float(c))
        l = self.design.levels.index(float(level))
        table = self.rates_boot if kind == "boot" else self.rates_asym
        return float(table[i, STATISTICS.index(statistic), l])

    def rows(self):
        d = self.design
        kinds = (("bootstrap", self.rates_boot), ("asymptotic", self.rates_asym)) if d.boot_b else (
            ("asymptotic", self.rates_asym),)
        for i, c in enumerate(d.c):
            for kind, table in kinds:
                for s, name in enumerate(STATISTICS):
                    yield [_fmt(c), name, kind] + [f"{v:.4f}" for v in table[i, s]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["c", "statistic", "critical_value"] + [_fmt(a) for a in self.design.levels])
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "design": self.design.to_json(),
            "statistics": list(STATISTICS),
            "n_success": self.n_success.tolist(),
            "rates_asym": self.rates_asym.tolist(),
            "rates_boot": self.rates_boot.tolist() if self.design.boot_b else None,
            "mc_se_asym": self.mc_se_asym.tolist(),
            "mc_se_boot": self.mc_se_boot.tolist() if self.design.boot_b else None,
        }

    def write(self, path) -> tuple[Path, Path]:
        """Write the CSV table and a JSON sidecar next to it."""
        path = Path(path)
        path.write_text(self.to_csv())
        side = path.with_suffix(".json")
        side.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return path, side


def _fmt(v: float) -> str:
    return f"{v:g}"


def _binom_se(rates, n):
    n = np.asarray(n, dtype=float).reshape((-1,) + (1,) * (np.ndim(rates) - 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.sqrt(rates * (1.0 - rates) / n)


def run_mc(design: McDesign, threads: int | None = 1, opts: OptimizeOptions | None = None) -> RejectionTable:
    """Run every replication of ``design`` and tabulate rejection rates.

    Replication ``rep`` draws its data from streams keyed by ``(seed, rep)``
    only, so the table does not depend on ``threads``. A row needs at least
    90% successful replications.
    """
    fixed = _draw_world(design, replication_rng(design.seed, _DESIGN)) if design.fixed_design else None
    keys = [(ci, rep) for ci in range(len(design.c)) for rep in range(design.reps)]
    task = _McTask(design, opts, fixed)
    out = parallel_map(task, keys, threads)
    nc, nl = len(design.c), len(design.levels)
    stats = np.full((nc, design.reps, 4), np.nan)
    for (ci, rep), r in zip(keys, out):
        if r is not None:
            stats[ci, rep] = (r.t_n, r.t_n_a, r.p_star, r.p_a_star)
    ok = ~np.isnan(stats[:, :, 0])
    n_success = ok.sum(axis=1)
    low = n_success < MIN_SUCCESS * design.reps
    if np.any(low):
        bad = [design.c[i] for i in np.flatnonzero(low)]
        raise SpatialSpecError(
            f"fewer than {MIN_SUCCESS:.0%} of replications succeeded for c in {bad} "
            f"(successes {n_success.tolist()} of {design.reps})"
        )
    crit = norm.ppf(1.0 - np.asarray(design.levels))
    rates_asym = np.zeros((nc, 2, nl))
    rates_boot = np.full((nc, 2, nl), np.nan)
    for i in range(nc):
        s = stats[i, ok[i]]
        for j in range(2):
            rates_asym[i, j] = [(s[:, j] > q).mean() for q in crit]
            if design.boot_b:
                rates_boot[i, j] = [(s[:, 2 + j] < a).mean() for a in design.levels]
    return RejectionTable(design, rates_asym, rates_boot, n_success, stats)


def with_overrides(design: McDesign, **kw) -> McDesign:
    """Copy of ``design`` with some fields replaced (``None`` values ignored)."""
    return replace(design, **{k: v for k, v in kw.items() if v is not None})
