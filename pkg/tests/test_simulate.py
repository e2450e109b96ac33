import json

import numpy as np
import pytest

from jasper.data import load_counts
from jasper.simulate import (
    SimConfig,
    equicorrelated_noise,
    nb_from_logit,
    read_truth,
    simulate,
    simulate_kernel_misspec,
    simulate_setting1,
    simulate_setting2,
    write_synthetic,
)


class TestNoise:
    def test_equicorrelation(self):
        e = equicorrelated_noise(20_000, 2, 0.3, np.random.default_rng(0))
        assert np.corrcoef(e.T)[0, 1] == pytest.approx(0.3, abs=0.015)
        np.testing.assert_allclose(e.var(axis=0), 1.0, rtol=0.03)

    def test_nb_moments(self):
        x = nb_from_logit(np.full(200_000, np.log(0.002)), size=1000.0, rng=np.random.default_rng(1))
        assert x.mean() == pytest.approx(2.0, rel=0.01)
        assert x.var() == pytest.approx(2.0 * (1 + 2.0 / 1000), rel=0.02)

    def test_nb_rejects_nan(self):
        with pytest.raises(ValueError):
            nb_from_logit(np.array([np.nan]), rng=0)


class TestGenerators:
    def test_setting2_shapes_and_truth(self):
        ds = simulate_setting2(SimConfig(n=60, p=30, n_svg=7, psi=0.4, seed=2))
        assert ds.counts.counts.shape == (30, 60)
        assert ds.svg_truth.sum() == 7
        assert ds.coords.shape == (60, 2)

    def test_same_seed_same_data(self):
        a = simulate(SimConfig(setting="setting1", n=40, p=10, n_svg=3, seed=3))
        b = simulate(SimConfig(setting="setting1", n=40, p=10, n_svg=3, seed=3))
        np.testing.assert_array_equal(a.counts.counts, b.counts.counts)

    def test_setting1_null_loadings_centered(self):
        ds = simulate_setting1(SimConfig(setting="setting1", n=30, p=400, n_svg=0, seed=4))
        beta = ds.provenance["beta"]
        assert abs(beta.mean()) < 0.03
        assert beta.var() == pytest.approx(0.1, rel=0.1)

    def test_kernel_misspec_layout(self):
        ds = simulate_kernel_misspec(SimConfig.kernel_misspec(seed=5))
        assert ds.normalized.values.shape == (50, 200)
        np.testing.assert_array_equal(np.flatnonzero(ds.svg_truth), np.arange(10))
        noise = ds.normalized.values[10:]
        assert noise.var() == pytest.approx(0.1, rel=0.05)

    def test_provenance_recomputes_mean(self):
        ds = simulate_setting2(SimConfig(n=50, p=12, n_svg=4, psi=0.5, seed=6))
        prov = ds.provenance
        mu = -10.0 + np.where(ds.svg_truth[None, :], prov["fields_long"].T @ prov["beta"],
                              prov["fields_short"].T @ prov["beta"])
        np.testing.assert_allclose(prov["mu"], mu, rtol=1e-14)

    @pytest.mark.parametrize("kw", [dict(setting="x"), dict(n_svg=101), dict(rho=1.0), dict(psi=0.0)])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)


class TestWriting:
    def test_files(self, tmp_path):
        ds = simulate_setting2(SimConfig(n=30, p=8, n_svg=2, seed=7))
        files = write_synthetic(ds, tmp_path)
        back = load_counts(tmp_path / files["counts"])
        np.testing.assert_array_equal(back.counts, ds.counts.counts)
        genes, truth = read_truth(tmp_path / "truth.csv")
        np.testing.assert_array_equal(truth, ds.svg_truth)
        assert json.loads((tmp_path / "sim_config.json").read_text())["seed"] == 7
