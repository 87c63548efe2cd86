import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from spatialspec import BasisSpec, InvalidArgument, build_design, count_terms


def test_power_degree3_at_origin():
    D = build_design(np.zeros((1, 2)), BasisSpec.power(3))
    assert D.p == 10
    np.testing.assert_array_equal(D.psi[0], [1] + [0] * 9)


def test_trig1_at_origin():
    D = build_design(np.zeros((1, 2)), BasisSpec.trig(1))
    np.testing.assert_array_equal(D.psi[0], [1, 0, 0, 0, 0, 1, 1, 1, 1])


def test_trig2_columns(rng):
    x = rng.uniform(0, 6, size=(5, 2))
    D = build_design(x, BasisSpec.trig(2))
    assert D.p == 13
    x1, x2 = x.T
    np.testing.assert_allclose(D.psi[:, 9:], np.column_stack(
        [np.sin(x1**2), np.cos(x1**2), np.sin(x2**2), np.cos(x2**2)]))
    np.testing.assert_allclose(D.psi[:, :9], build_design(x, BasisSpec.trig(1)).psi)


def test_power_degree4_has_15_columns(rng):
    assert build_design(rng.normal(size=(20, 2)), BasisSpec.power(4)).p == 15


def test_power_columns_are_all_monomials(rng):
    x = rng.normal(size=(7, 2))
    D = build_design(x, BasisSpec.power(3))
    expected = {(a, b) for a in range(4) for b in range(4) if a + b <= 3}
    got = set()
    for col in D.psi.T:
        for a, b in expected:
            if np.allclose(col, x[:, 0] ** a * x[:, 1] ** b):
                got.add((a, b))
    assert got == expected


@pytest.mark.parametrize("spec,k,p", [
    (BasisSpec.power(3), 2, 10),
    (BasisSpec.power(0), 5, 1),
    (BasisSpec.trig(2), 2, 13),
    (BasisSpec.trig(1), 2, 9),
    (BasisSpec.bspline(4), 2, 9),
])
def test_count_terms(spec, k, p):
    assert count_terms(spec, k) == p


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["power", "trig", "bspline"]), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_count_matches_columns(family, val, seed):
    x = np.random.default_rng(seed).uniform(0, 6, size=(30, 2))
    spec = {
        "power": BasisSpec.power(val),
        "trig": BasisSpec.trig(1 + val % 2),
        "bspline": BasisSpec.bspline(3 + val),
    }[family]
    assert build_design(x, spec).p == count_terms(spec, 2)


def test_power_any_k():
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert build_design(x, BasisSpec.power(2)).p == comb(5, 2)


def test_power_homogeneity(rng):
    x = rng.normal(size=(12, 2))
    a = build_design(x, BasisSpec.power(4)).psi
    b = build_design(2 * x, BasisSpec.power(4)).psi
    for j in range(a.shape[1]):
        ratio = b[:, j] / a[:, j]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
        assert np.log2(ratio[0]) == pytest.approx(round(np.log2(ratio[0])))


def test_bspline_partition_of_unity(rng):
    x = rng.uniform(0, 1, size=(50, 2))
    spec = BasisSpec.bspline(5)
    D = build_design(x, spec)
    # each coordinate block plus the dropped first spline sums to one
    lo, hi = x[:, 0].min(), x[:, 0].max()
    interior = np.linspace(lo, hi, 4)[1:-1]
    t = np.r_[[lo] * 4, interior, [hi] * 4]
    first = BSpline.design_matrix(x[:, 0], t, 3).toarray()[:, 0]
    np.testing.assert_allclose(D.psi[:, 1:6].sum(axis=1) + first, 1.0, atol=1e-12)


def test_bspline_explicit_knots(rng):
    x = rng.uniform(0, 1, size=(40, 2))
    spec = BasisSpec.bspline(order=None, knots=(0.3, 0.6))
    assert spec.order == 5
    assert build_design(x, spec).p == 11


def test_nonfinite_rejected():
    with pytest.raises(InvalidArgument):
        build_design(np.array([[0.0, np.nan]]), BasisSpec.power(2))


def test_trig_needs_two_regressors():
    with pytest.raises(InvalidArgument):
        build_design(np.zeros((3, 3)), BasisSpec.trig(1))


def test_zero_column_is_not_an_error():
    x = np.zeros((5, 2))
    D = build_design(x, BasisSpec.power(2))
    assert list(D.zero_columns()) == [1, 2, 3, 4, 5]


def test_standardize_rescales_columns(rng):
    x = rng.uniform(0, 6, size=(30, 2))
    raw = build_design(x, BasisSpec.power(3)).psi
    std = build_design(x, BasisSpec.power(3, standardize=True)).psi
    np.testing.assert_allclose(np.mean(std[:, 1:] ** 2, axis=0), 1.0)
    np.testing.assert_allclose(std[:, 0], raw[:, 0])


@pytest.mark.parametrize("spec", [
    BasisSpec.power(3), BasisSpec.trig(2), BasisSpec.bspline(4), BasisSpec.bspline(None, knots=(0.5,)),
    BasisSpec.power(2, include_intercept=False),
])
def test_json_roundtrip(spec):
    assert BasisSpec.from_json(json.dumps(spec.to_json())) == spec


def test_unknown_family():
    with pytest.raises(InvalidArgument):
        BasisSpec("wavelet")
