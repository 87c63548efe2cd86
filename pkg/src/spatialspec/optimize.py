"""Box-constrained derivative-free minimisation: coarse grid, then Nelder-Mead.

Concentrated likelihoods here are cheap, low dimensional and may have more
than one local minimum, so the search starts from the best few points of a
grid over the whole box.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import AllEvaluationsFailed, InvalidArgument


@dataclass(frozen=True)
class ParamSpace:
    """Componentwise box. Components with ``lower == upper`` are held fixed.

    ``log_scale`` marks strictly positive components searched on a log scale.
    """

    lower: np.ndarray
    upper: np.ndarray
    log_scale: np.ndarray | None = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgument("lower and upper must be vectors of equal length")
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgument("need finite bounds with lower <= upper")
        ls = np.zeros(lo.shape, bool) if self.log_scale is None else np.asarray(self.log_scale, bool)
        if ls.shape != lo.shape:
            raise InvalidArgument("log_scale must match the bounds")
        if np.any(ls & (lo <= 0)):
            raise InvalidArgument("log-scale components need positive bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "log_scale", ls)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def free(self) -> np.ndarray:
        return self.lower < self.upper

    @classmethod
    def concat(cls, *spaces) -> ParamSpace:
        return cls(
            np.concatenate([s.lower for s in spaces]),
            np.concatenate([s.upper for s in spaces]),
            np.concatenate([s.log_scale for s in spaces]),
        )

    @classmethod
    def fixed(cls, values) -> ParamSpace:
        v = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(v, v.copy())

    def at_boundary(self, x, tol=1e-6) -> bool:
        x = np.asarray(x, dtype=float)
        f = self.free
        return bool(np.any(np.abs(x[f] - self.lower[f]) <= tol) or np.any(np.abs(x[f] - self.upper[f]) <= tol))


@dataclass
class OptimizeOptions:
    grid_points: int = 7
    sobol_points: int = 200
    max_grid_dim: int = 3
    restarts: int = 3
    xtol: float = 1e-6
    ftol: float = 1e-9
    maxiter: int | None = None
    trace: bool = False


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    nfev: int
    converged: bool
    trace: list = field(default_factory=list)


class _Transformed:
    """Map between the box and the free coordinates the simplex works in."""

    def __init__(self, space):
        self.space = space
        self.free = space.free
        self.ls = space.log_scale[self.free]
        lo, hi = space.lower[self.free], space.upper[self.free]
        self.lo = np.where(self.ls, np.log(np.where(self.ls, lo, 1.0)), lo)
        self.hi = np.where(self.ls, np.log(np.where(self.ls, hi, 1.0)), hi)

    def to_full(self, z):
        x = self.space.lower.copy()
        x[self.free] = np.where(self.ls, np.exp(z), z)
        return x

    def reflect(self, z):
        z = np.where(z < self.lo, 2 * self.lo - z, z)
        z = np.where(z > self.hi, 2 * self.hi - z, z)
        return np.clip(z, self.lo, self.hi)


def _grid(tr, opts):
    d = tr.lo.size
    if d <= opts.max_grid_dim:
        axes = [np.linspace(l, h, opts.grid_points) for l, h in zip(tr.lo, tr.hi)]
        return np.array(list(itertools.product(*axes))), (tr.hi - tr.lo) / (opts.grid_points - 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = qmc.Sobol(d, scramble=False).random(opts.sobol_points)
    pts = tr.lo + u * (tr.hi - tr.lo)
    return pts, (tr.hi - tr.lo) / opts.sobol_points ** (1.0 / d)


def nelder_mead(f, z0, step, tr, xtol, ftol, maxiter):
    """Nelder-Mead in the free coordinates with reflection at the box.

    Returns ``(z, fz, nfev, converged)``.
    """
    d = z0.size
    sim = [z0]
    for i in range(d):
        z = z0.copy()
        s = step[i] if step[i] > 0 else 1e-3
        z[i] = z[i] + s if z[i] + s <= tr.hi[i] else z[i] - s
        sim.append(tr.reflect(z))
    sim = np.array(sim)
    fs = np.array([f(z) for z in sim])
    nfev = d + 1
    converged = False
    for _ in range(maxiter):
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        diam = np.max(np.abs(sim[1:] - sim[0]))
        if diam < xtol and (fs[-1] - fs[0]) < ftol:
            converged = True
            break
        if diam < 1e-3 * xtol:
            # collapsed onto a point where the value spread cannot shrink
            converged = bool(np.isfinite(fs[0]))
            break
        c = sim[:-1].mean(axis=0)
        zr = tr.reflect(c + (c - sim[-1]))
        fr = f(zr)
        nfev += 1
        if fr < fs[0]:
            ze = tr.reflect(c + 2.0 * (c - sim[-1]))
            fe = f(ze)
            nfev += 1
            sim[-1], fs[-1] = (ze, fe) if fe < fr else (zr, fr)
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = zr, fr
            continue
        if fr < fs[-1]:
            zc = tr.reflect(c + 0.5 * (zr - c))
        else:
            zc = tr.reflect(c + 0.5 * (sim[-1] - c))
        fc = f(zc)
        nfev += 1
        if fc < min(fr, fs[-1]):
            sim[-1], fs[-1] = zc, fc
            continue
        sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
        fs[1:] = [f(z) for z in sim[1:]]
        nfev += d
    i = int(np.argmin(fs))
    return sim[i], float(fs[i]), nfev, converged


def minimize_box(fun, space: ParamSpace, opts: OptimizeOptions | None = None) -> OptimizeResult:
    """Minimise ``fun`` over ``space``.

    ``fun`` maps a full parameter vector to a float and returns ``inf`` at
    infeasible points. Stage one evaluates a grid (7 points per free
    dimension up to three dimensions, 200 Sobol points beyond); stage two
    runs Nelder-Mead from the best ``restarts`` grid points.
    """
    opts = opts or OptimizeOptions()
    tr = _Transformed(space)
    trace = []
    nfev = 0

    def f(z):
        x = tr.to_full(z)
        v = float(fun(x))
        if np.isnan(v):
            v = np.inf
        if opts.trace:
            trace.append((x.copy(), v))
        return v

    d = tr.lo.size
    if d == 0:
        x = space.lower.copy()
        v = f(np.zeros(0))
        if not np.isfinite(v):
            raise AllEvaluationsFailed(f"objective not finite at the fixed point {x}")
        return OptimizeResult(x, v, 1, True, trace)

    pts, spacing = _grid(tr, opts)
    vals = np.array([f(z) for z in pts])
    nfev += len(pts)
    finite = np.flatnonzero(np.isfinite(vals))
    if finite.size == 0:
        raise AllEvaluationsFailed("no grid point gave a finite concentrated likelihood")
    starts = finite[np.argsort(vals[finite], kind="stable")[: opts.restarts]]
    maxiter = opts.maxiter or 200 * d + 200
    best = None
    for i in starts:
        z, fz, ne, conv = nelder_mead(f, pts[i].copy(), 0.5 * spacing, tr, opts.xtol, opts.ftol, maxiter)
        nfev += ne
        if best is None or fz < best[1]:
            best = (z, fz, conv)
    return OptimizeResult(tr.to_full(best[0]), best[1], nfev, best[2], trace)
