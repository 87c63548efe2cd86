"""Command-line interface: ``spatialspec {fit,test,simulate}``.

Exit codes: 0 success, 2 bad or missing input data, 3 numerical failure
(singular covariance, rank-deficient design, failed optimisation).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from ._parallel import THREADS_ENV, default_threads
from .basis import BasisSpec, build_design
from .bootstrap import bootstrap_pvalues
from .covariance import load_model
from .errors import (
    AllEvaluationsFailed, InvalidArgument, RankDeficientDesign, SingularCovariance, SpatialSpecError, StageError,
)
from .optimize import OptimizeOptions, ParamSpace
from .qmle import LINEAR, ConcentratedLikelihood, ParametricFamily, _fit, default_space
from .simulation import McDesign, run_mc, with_overrides
from .spectest import TestInput, TestPipeline
from .weights import read_weights

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3
NUMERICAL = (SingularCovariance, RankDeficientDesign, AllEvaluationsFailed, np.linalg.LinAlgError)


class DataError(Exception):
    """Input could not be read or is inconsistent."""


# -- input parsing -------------------------------------------------------------


def _read_table(path, what):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{what} file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{what} file is empty: {path}")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = rows[0], rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"{what} file {path}: {exc}") from None
    if data.ndim != 2 or data.shape[0] == 0 or len({len(r) for r in rows}) != 1:
        raise DataError(f"{what} file {path}: ragged or empty table")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{what} file {path}: non-finite values")
    return data, header


def read_y(path):
    data, _ = _read_table(path, "y")
    if data.shape[1] != 1:
        raise DataError(f"y file {path} must have a single column, found {data.shape[1]}")
    return data[:, 0]


def read_x(path):
    return _read_table(path, "x")[0]


def parse_basis(text) -> BasisSpec:
    """A basis from a JSON file, inline JSON, or ``family:value`` shorthand."""
    if text is None:
        raise DataError("--basis is required")
    p = Path(text)
    try:
        if p.suffix == ".json" or p.is_file():
            if not p.is_file():
                raise DataError(f"basis file not found: {p}")
            return BasisSpec.from_json(json.loads(p.read_text()))
        if text.lstrip().startswith("{"):
            return BasisSpec.from_json(json.loads(text))
        fam, _, val = text.partition(":")
        key = {"power": "degree", "trig": "level", "bspline": "order"}.get(fam)
        if key is None or not val:
            raise DataError(f"cannot parse basis {text!r}; use e.g. power:3, trig:1, bspline:4 or JSON")
        return BasisSpec(fam, **{key: int(val)})
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise DataError(f"invalid basis {text!r}: {exc}") from None


def _load_weights(paths, n):
    out = []
    for p in paths:
        if not Path(p).is_file():
            raise DataError(f"weights file not found: {p}")
        out.append(read_weights(p, n))
    return out


def parse_model(args, n):
    """Covariance model, SAR weights and parameter box from ``--model``/``--weights``.

    ``--model`` is a JSON file, inline JSON, or a bare family name. Weight
    paths inside a JSON file are relative to that file; a model without
    weight paths takes them from ``--weights``.
    """
    text = args.model or "SEM"
    base = Path(".")
    p = Path(text)
    if p.suffix == ".json" or p.is_file():
        if not p.is_file():
            raise DataError(f"model file not found: {p}")
        try:
            obj = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"model file {p}: {exc}") from None
        base = p.parent
    elif text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid model JSON: {exc}") from None
    else:
        obj = {"family": text}
    obj = dict(obj)
    fam = obj.get("family")
    if fam == "iid":
        obj.setdefault("n", n)
    key = {"SEM": "weights", "SMA": "weights", "MESS": "weights", "SARMA": "ar_weights"}.get(fam)
    if key and key not in obj and not (fam == "SARMA" and "ma_weights" in obj):
        if not args.weights:
            raise DataError(f"model {fam} needs --weights or weight paths in the model JSON")
        obj[key] = [str(Path(w).resolve()) for w in args.weights]
    for k in ("weights", "ar_weights", "ma_weights", "distances", "mask"):
        for q in np.atleast_1d(obj.get(k, [])):
            if not (base / q).is_file():
                raise DataError(f"{k} file not found: {base / q}")
    sar_paths = [str(base / q) for q in obj.pop("sar_weights", [])] + list(args.sar_weights or [])
    bounds = obj.pop("bounds", None)
    model = load_model(obj, base)
    if model.n != n:
        raise DataError(f"model has n={model.n} but y has {n} observations")
    sar = [w.matrix for w in _load_weights(sar_paths, n)]
    space = None
    if bounds is not None:
        # the box covers phi = (lambda, gamma)
        log_scale = np.concatenate([np.zeros(len(sar), bool), model.log_scale()])
        try:
            space = ParamSpace(bounds["lower"], bounds["upper"], log_scale)
        except (KeyError, TypeError) as exc:
            raise DataError(f"model bounds need lower and upper vectors ({exc})") from None
    return model, sar, space


def parse_null(text) -> ParametricFamily:
    if text in (None, "linear"):
        return LINEAR
    if text == "constant":
        return ParametricFamily("constant")
    raise DataError(f"unsupported null family {text!r} (use linear or constant)")


def _load_common(args):
    y = read_y(args.y)
    x = read_x(args.x)
    if x.shape[0] != y.size:
        raise DataError(f"x has {x.shape[0]} rows but y has {y.size}")
    basis = parse_basis(args.basis)
    model, sar, space = parse_model(args, y.size)
    return y, x, basis, model, sar, space


# -- output --------------------------------------------------------------------


def _emit(args, payload, summary):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    if args.json:
        sys.stdout.write(text)
    else:
        sys.stdout.write(summary)


def _vec(v):
    return " ".join(f"{float(a):.6g}" for a in np.atleast_1d(v)) or "-"


def _fit_summary(fit):
    rows = [
        ("lambda_hat", _vec(fit.lambda_hat)),
        ("gamma_hat", _vec(fit.gamma_hat)),
        ("sigma2_hat", f"{fit.sigma2_hat:.6g}"),
        ("neg_loglik", f"{fit.neg_loglik:.10g}"),
        ("evaluations", str(fit.n_evals)),
        ("converged", str(fit.converged)),
        ("at_boundary", str(fit.at_boundary)),
    ]
    return "".join(f"{k:<12} {v}\n" for k, v in rows)


def _write_trace(path, fit, dim):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eval_index"] + [f"phi{j + 1}" for j in range(dim)] + ["loglik"])
        for row in fit.trace_rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


# -- commands ------------------------------------------------------------------


def cmd_fit(args) -> int:
    y, x, basis, model, sar, space = _load_common(args)
    design = build_design(x, basis)
    opts = OptimizeOptions(trace=bool(args.trace))
    try:
        obj = ConcentratedLikelihood(y, design, model, sar)
        fit = _fit(obj, space or default_space(model, len(sar)), opts)
    except SpatialSpecError as exc:
        raise StageError("fit_alternative", exc) from exc
    if args.trace:
        _write_trace(args.trace, fit, obj.dim)
    _emit(args, fit.to_json(), _fit_summary(fit))
    return EXIT_OK


def cmd_test(args) -> int:
    y, x, basis, model, sar, space = _load_common(args)
    inp = TestInput(y, x, basis, model, tuple(sar), parse_null(args.null), space)
    pipe = TestPipeline(inp, OptimizeOptions(trace=bool(args.trace)))
    res = pipe.run(y)
    if args.trace:
        _write_trace(args.trace, res.fit_alt, pipe.space.dim)
    if args.boot:
        res.boot = bootstrap_pvalues(inp, res, args.boot, seed=args.seed, threads=args.threads, pipeline=pipe)
    b = res.boot
    lines = [
        f"{'statistic':<10}{'value':>14}{'p_asym':>14}{'p_boot':>14}",
        f"{'T_n':<10}{res.t_n:>14.6f}{res.p_asym:>14.6f}{(f'{b.p_star:.4f}' if b else '-'):>14}",
        f"{'T_n^a':<10}{res.t_n_a:>14.6f}{res.p_asym_a:>14.6f}{(f'{b.p_a_star:.4f}' if b else '-'):>14}",
        f"n={res.n} p={res.p}" + (f" B={b.b} failed={b.n_failed}" if b else ""),
    ]
    _emit(args, res.to_json(), "\n".join(lines) + "\n")
    return EXIT_OK


def load_design(text) -> McDesign:
    """A design JSON path, or the name of a bundled design."""
    p = Path(text)
    if p.is_file():
        src = p.read_text()
    else:
        bundled = resources.files("spatialspec") / "designs" / f"{p.stem}.json"
        if not bundled.is_file():
            raise DataError(f"design file not found: {text}")
        src = bundled.read_text()
    try:
        return McDesign.from_json(json.loads(src))
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"invalid design {text}: {exc}") from None


def cmd_simulate(args) -> int:
    design = with_overrides(load_design(args.design), seed=args.seed, reps=args.reps, boot_b=args.boot)
    table = run_mc(design, threads=args.threads)
    csv_text = table.to_csv()
    if args.out:
        table.write(args.out)
    if args.json:
        sys.stdout.write(json.dumps(table.to_json(), indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(csv_text)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatialspec",
        description="Series-based specification tests for regressions with spatially dependent errors.",
        epilog="Exit codes: 0 ok, 2 data error, 3 numerical failure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p):
        p.add_argument("--y", required=True, help="single-column CSV of responses")
        p.add_argument("--x", required=True, help="CSV of regressors, optional header row")
        p.add_argument("--weights", nargs="+", help="weight matrix file(s), triplet or dense CSV")
        p.add_argument("--sar-weights", nargs="+", help="weight matrices of spatial lags in y")
        p.add_argument("--model", help="covariance model: JSON file, inline JSON or family name (default SEM)")
        p.add_argument("--basis", required=True, help="basis JSON or shorthand such as power:3")
        p.add_argument("--out", help="write the JSON result here")
        p.add_argument("--json", action="store_true", help="print JSON instead of a summary")
        p.add_argument("--trace", metavar="CSV", help="log every likelihood evaluation to this CSV")

    p_fit = sub.add_parser("fit", help="QMLE of the series regression with spatial errors")
    data_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="specification test of a parametric null")
    data_flags(p_test)
    p_test.add_argument("--null", default="linear", help="null family: linear (default) or constant")
    p_test.add_argument("--boot", type=int, default=0, metavar="B", help="bootstrap replications (0: none)")
    p_test.add_argument("--seed", type=int, default=0, metavar="S")
    p_test.add_argument("--threads", type=int, default=None, metavar="N",
                        help=f"worker processes (default: ${THREADS_ENV} or all cores)")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="Monte Carlo rejection-rate table")
    p_sim.add_argument("--design", required=True, help="design JSON or bundled design name")
    p_sim.add_argument("--out", help="CSV output; a JSON sidecar is written next to it")
    p_sim.add_argument("--seed", type=int, default=None, metavar="S", help="override the design seed")
    p_sim.add_argument("--reps", type=int, default=None, help="override the number of replications")
    p_sim.add_argument("--boot", type=int, default=None, metavar="B", help="override bootstrap replications")
    p_sim.add_argument("--threads", type=int, default=None, metavar="N",
                       help=f"worker processes (default: ${THREADS_ENV} or all cores)")
    p_sim.add_argument("--json", action="store_true", help="print the JSON sidecar instead of the CSV")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def _classify(exc):
    inner = exc.error if isinstance(exc, StageError) else exc
    stage = exc.stage if isinstance(exc, StageError) else None
    return inner, stage


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    prefix = f"spatialspec {args.command}"
    try:
        return args.func(args)
    except (DataError, InvalidArgument, OSError) as exc:
        print(f"{prefix}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SpatialSpecError as exc:
        inner, stage = _classify(exc)
        where = f" in stage {stage}" if stage else ""
        if isinstance(inner, InvalidArgument):
            print(f"{prefix}: data error{where}: {inner}", file=sys.stderr)
            return EXIT_DATA
        print(f"{prefix}: numerical failure{where}: {type(inner).__name__}: {inner}", file=sys.stderr)
        return EXIT_NUMERIC
    except NUMERICAL as exc:
        print(f"{prefix}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
