"""Series design matrices: power, trigonometric and additive cubic B-spline bases."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.interpolate import BSpline

from .errors import InvalidArgument

FAMILIES = ("power", "trig", "bspline")
SPLINE_DEGREE = 3


@dataclass(frozen=True)
class BasisSpec:
    """Which series basis to build.

    ``degree`` is used by the power family, ``level`` (1 or 2) by the
    trigonometric family and ``order`` by the B-spline family, where it counts
    the spline columns per coordinate (the shared intercept is extra).
    ``knots`` optionally fixes the interior spline knots for every coordinate.
    """

    family: str
    degree: int | None = None
    level: int | None = None
    order: int | None = None
    knots: tuple[float, ...] | None = None
    include_intercept: bool = True
    standardize: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown basis family {self.family!r}")
        if self.family == "power" and (self.degree is None or self.degree < 0):
            raise InvalidArgument("power basis needs degree >= 0")
        if self.family == "trig" and self.level not in (1, 2):
            raise InvalidArgument("trig basis needs level 1 or 2")
        if self.family == "bspline":
            if self.knots is not None:
                object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
                if self.order is None:
                    object.__setattr__(self, "order", len(self.knots) + SPLINE_DEGREE)
                if self.order != len(self.knots) + SPLINE_DEGREE:
                    raise InvalidArgument("bspline order must equal len(knots) + 3")
            if self.order is None or self.order < SPLINE_DEGREE:
                raise InvalidArgument("bspline basis needs order >= 3")

    @classmethod
    def power(cls, degree, **kw):
        return cls("power", degree=degree, **kw)

    @classmethod
    def trig(cls, level, **kw):
        return cls("trig", level=level, **kw)

    @classmethod
    def bspline(cls, order, knots=None, **kw):
        return cls("bspline", order=order, knots=knots, **kw)

    def to_json(self) -> dict:
        out = {"family": self.family}
        key = {"power": "degree", "trig": "level", "bspline": "order"}[self.family]
        out[key] = getattr(self, key)
        if self.knots is not None:
            out["knots"] = list(self.knots)
        if not self.include_intercept:
            out["include_intercept"] = False
        if self.standardize:
            out["standardize"] = True
        return out

    @classmethod
    def from_json(cls, obj) -> BasisSpec:
        if isinstance(obj, str):
            obj = json.loads(obj)
        allowed = {"family", "degree", "level", "order", "knots", "include_intercept", "standardize"}
        unknown = set(obj) - allowed
        if unknown:
            raise InvalidArgument(f"unknown basis keys {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    psi: np.ndarray
    spec: BasisSpec
    names: tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    @property
    def p(self) -> int:
        return self.psi.shape[1]

    def zero_columns(self) -> np.ndarray:
        return np.flatnonzero(~np.any(self.psi != 0.0, axis=0))


def count_terms(spec: BasisSpec, k: int) -> int:
    """Number of columns ``build_design`` produces for ``k`` regressors."""
    c = 1 if spec.include_intercept else 0
    if spec.family == "power":
        return comb(k + spec.degree, spec.degree) - (1 - c)
    if spec.family == "trig":
        return (9 if spec.level == 1 else 13) - (1 - c)
    return c + k * spec.order


def _power_exponents(k, degree):
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), total):
            e = [0] * k
            for j in combo:
                e[j] += 1
            yield tuple(e)


def _power(x, spec):
    cols, names = [], []
    for e in _power_exponents(x.shape[1], spec.degree):
        if sum(e) == 0 and not spec.include_intercept:
            continue
        cols.append(np.prod(x ** np.asarray(e), axis=1))
        names.append("*".join(f"x{j + 1}^{p}" for j, p in enumerate(e) if p) or "1")
    return cols, names


def _trig(x, spec):
    if x.shape[1] != 2:
        raise InvalidArgument("the trigonometric basis is defined for two regressors")
    x1, x2 = x[:, 0], x[:, 1]
    cols = [
        np.sin(x1), np.sin(x1 / 2), np.sin(x2), np.sin(x2 / 2),
        np.cos(x1), np.cos(x1 / 2), np.cos(x2), np.cos(x2 / 2),
    ]
    names = ["sin(x1)", "sin(x1/2)", "sin(x2)", "sin(x2/2)",
             "cos(x1)", "cos(x1/2)", "cos(x2)", "cos(x2/2)"]
    if spec.level == 2:
        cols += [np.sin(x1**2), np.cos(x1**2), np.sin(x2**2), np.cos(x2**2)]
        names += ["sin(x1^2)", "cos(x1^2)", "sin(x2^2)", "cos(x2^2)"]
    if spec.include_intercept:
        cols.insert(0, np.ones_like(x1))
        names.insert(0, "1")
    return cols, names


def _bspline_columns(v, spec):
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        raise InvalidArgument("cannot build splines on a constant regressor")
    if spec.knots is not None:
        interior = np.asarray(spec.knots, dtype=float)
    else:
        n_int = spec.order - SPLINE_DEGREE
        interior = np.linspace(lo, hi, n_int + 2)[1:-1]
    t = np.concatenate([[lo] * (SPLINE_DEGREE + 1), interior, [hi] * (SPLINE_DEGREE + 1)])
    B = BSpline.design_matrix(np.clip(v, lo, hi), t, SPLINE_DEGREE).toarray()
    # the full set sums to one; drop the first column to keep the intercept separate
    return B[:, 1:]


def _bspline(x, spec):
    cols, names = [], []
    if spec.include_intercept:
        cols.append(np.ones(x.shape[0]))
        names.append("1")
    for j in range(x.shape[1]):
        B = _bspline_columns(x[:, j], spec)
        cols.extend(B.T)
        names.extend(f"bs{b + 1}(x{j + 1})" for b in range(B.shape[1]))
    return cols, names


def build_design(x, spec: BasisSpec) -> DesignMatrix:
    """Evaluate the series basis at each row of ``x`` (``n x k``)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("regressors must be finite")
    builder = {"power": _power, "trig": _trig, "bspline": _bspline}[spec.family]
    cols, names = builder(x, spec)
    psi = np.column_stack(cols) if cols else np.empty((x.shape[0], 0))
    if spec.standardize:
        rms = np.sqrt(np.mean(psi**2, axis=0))
        const = np.all(psi == psi[:1], axis=0)
        scale = np.where((rms > 0) & ~const, rms, 1.0)
        psi = psi / scale
    return DesignMatrix(psi, spec, tuple(names))
