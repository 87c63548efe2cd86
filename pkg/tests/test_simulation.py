import json

import numpy as np
import pytest

from spatialspec import BasisSpec, InvalidArgument, McDesign, gen_outcome, gen_regressors, gen_theta, run_mc
from spatialspec.errors import SpatialSpecError
from spatialspec.simulation import ALPHA, GAMMA2, GAMMA3, LAMBDA1, _McTask
from spatialspec.weights import WeightMatrix

from conftest import random_knn


def tiny(model="sararma_0_1_0", **kw):
    base = dict(n=40, c=(0.0, 6.0), basis=BasisSpec.power(2), reps=4, boot_b=9, seed=3)
    base.update(kw)
    return McDesign(model, **base)


class TestRegressors:
    def test_compact_range(self, rng):
        x = gen_regressors(1000, "compact_u02pi", rng)
        assert x.shape == (1000, 2) and x.min() >= 0 and x.max() <= 2 * np.pi

    def test_correlation_half(self, rng):
        x = gen_regressors(100_000, "compact_u02pi", rng)
        assert np.corrcoef(x.T)[0, 1] == pytest.approx(0.5, abs=0.01)

    def test_gaussian_variance(self, rng):
        x = gen_regressors(100_000, "gaussian", rng)
        np.testing.assert_allclose(x.var(axis=0), 0.5, atol=0.01)

    def test_unknown_support(self, rng):
        with pytest.raises(InvalidArgument):
            gen_regressors(5, "cauchy", rng)


class TestTheta:
    def test_null_linear(self, rng):
        x = rng.normal(size=(10, 2))
        np.testing.assert_allclose(gen_theta(x, ALPHA, 0.0, 10, 100), 1 + x[:, 0] + x[:, 1], rtol=0, atol=1e-14)

    def test_c3_value(self):
        x = np.array([[np.pi / 4 - 0.5, np.pi / 4 - 0.5]])
        got = gen_theta(x, ALPHA, 3.0, 10, 100)[0]
        assert got - np.pi / 2 == pytest.approx(0.53348, abs=1e-5)

    def test_linear_in_c(self, rng):
        x = rng.normal(size=(10, 2))
        lin = gen_theta(x, ALPHA, 0, 10, 100)
        np.testing.assert_allclose(gen_theta(x, ALPHA, 6, 10, 100) - lin, 2 * (gen_theta(x, ALPHA, 3, 10, 100) - lin))


class TestOutcome:
    def test_zero_innovations(self, rng):
        W = random_knn(20, 2, rng)
        th = rng.normal(size=20)
        y = gen_outcome(tiny("sararma_1_0_1"), th, W, rng, xi=np.zeros(20))
        np.testing.assert_allclose(y, np.linalg.solve(np.eye(20) - LAMBDA1 * W.to_dense(), th), atol=1e-12)

    def test_no_weights_is_additive(self, rng):
        W = WeightMatrix(np.zeros((6, 6)))
        th, xi = rng.normal(size=6), rng.normal(size=6)
        np.testing.assert_allclose(gen_outcome(tiny(), th, W, rng, xi=xi), th + xi)

    def test_sem_covariance_three(self):
        d = np.array([[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]], dtype=float)
        W = WeightMatrix(d)
        G = np.column_stack([gen_outcome(tiny(), np.zeros(3), W, None, xi=e) for e in np.eye(3)])
        A = np.eye(3) - GAMMA2 * d
        np.testing.assert_allclose(G @ G.T, np.linalg.inv(A) @ np.linalg.inv(A.T), atol=1e-12)

    def test_sararma_101_dense(self, rng):
        W = random_knn(15, 2, rng)
        th, xi = rng.normal(size=15), rng.normal(size=15)
        Wd, I = W.to_dense(), np.eye(15)
        ref = np.linalg.solve(I - LAMBDA1 * Wd, th + (I + GAMMA3 * Wd) @ xi)
        np.testing.assert_allclose(gen_outcome(tiny("sararma_1_0_1"), th, W, rng, xi=xi), ref, atol=1e-12)


class TestDesign:
    def test_validation(self):
        with pytest.raises(InvalidArgument):
            tiny(levels=(0.1, 0.05))
        with pytest.raises(InvalidArgument):
            tiny(model="sar")
        with pytest.raises(InvalidArgument):
            tiny(model="npw_sem")

    def test_json_roundtrip(self):
        d = tiny(r=None)
        assert McDesign.from_json(json.loads(json.dumps(d.to_json()))) == d

    def test_unknown_key(self):
        with pytest.raises(InvalidArgument):
            McDesign.from_json({"model": "sararma_0_1_0", "n": 10, "bogus": 1})

    def test_defaults(self):
        d = McDesign("sararma_0_1_0", 100)
        assert d.k == 5 and d.p == 10 and d.levels == (0.01, 0.05, 0.1)


class TestRunMc:
    def test_one_rep_is_binary(self):
        t = run_mc(tiny(reps=1))
        assert set(np.unique(t.rates_boot)) <= {0.0, 1.0}
        assert set(np.unique(t.rates_asym)) <= {0.0, 1.0}

    def test_thread_invariance(self):
        d = tiny(reps=3, boot_b=5)
        a, b = run_mc(d, threads=1), run_mc(d, threads=2)
        assert a.to_csv() == b.to_csv()
        np.testing.assert_array_equal(a.stats, b.stats)

    def test_monotone_in_level(self):
        t = run_mc(tiny(reps=6, boot_b=9))
        assert np.all(np.diff(t.rates_asym, axis=-1) >= 0)
        assert np.all(np.diff(t.rates_boot, axis=-1) >= 0)

    def test_mc_se(self):
        t = run_mc(tiny(reps=5, boot_b=0))
        np.testing.assert_allclose(t.mc_se, np.sqrt(t.rates_asym * (1 - t.rates_asym) / 5))
        assert np.all(np.isnan(t.rates_boot))

    def test_csv_layout(self):
        t = run_mc(tiny(reps=2, boot_b=4))
        lines = t.to_csv().splitlines()
        assert lines[0] == "c,statistic,critical_value,0.01,0.05,0.1"
        assert len(lines) == 1 + 2 * 2 * 2
        assert lines[1].startswith("0,T,bootstrap,")

    def test_write_sidecar(self, tmp_path):
        t = run_mc(tiny(reps=2, boot_b=0))
        csv_path, side = t.write(tmp_path / "t.csv")
        js = json.loads(side.read_text())
        assert js["n_success"] == [2, 2] and js["mc_se_boot"] is None

    def test_fixed_design(self):
        t = run_mc(tiny(reps=2, boot_b=0, fixed_design=True))
        assert t.n_success.tolist() == [2, 2]

    @pytest.mark.parametrize("model,kw", [("sararma_1_0_1", {}), ("npw_sem", {"r": 1, "n": 60})])
    def test_other_models(self, model, kw):
        t = run_mc(tiny(model, reps=2, boot_b=0, **kw))
        assert np.all(t.n_success == 2)

    def test_too_many_failures(self, monkeypatch):
        monkeypatch.setattr(_McTask, "__call__", lambda self, key: None)
        with pytest.raises(SpatialSpecError):
            run_mc(tiny(reps=2))

    def test_power_ordering(self):
        t = run_mc(tiny(n=80, c=(0.0, 3.0, 6.0), reps=12, boot_b=0, seed=5))
        r = t.rates_asym[:, 0, 1]
        se = t.mc_se_asym[:, 0, 1]
        assert r[2] >= r[1] - 2 * se[1] and r[1] >= r[0] - 2 * se[0]
