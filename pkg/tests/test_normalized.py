import numpy as np
import pytest

from jasper.data import NormalizedMatrix
from jasper.gibbs import GibbsConfig
from jasper.normalized import run_gibbs_normalized
from jasper.splines import design_from_coords


def instance(seed=0, n=120, p=6):
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    X = design_from_coords(coords, 1)
    Y = 0.3 * rng.standard_normal((n, p))
    Y[:, 0] += np.sin(5 * coords[:, 0]) + coords[:, 1] ** 2
    Y[:, 1] += np.cos(4 * coords[:, 1])
    return Y, X


class TestNormalizedSampler:
    def test_strong_signal_detected(self):
        Y, X = instance()
        post = run_gibbs_normalized(Y, X, config=GibbsConfig(600, 200, seed=1))
        assert post.ppi[0] > 0.95 and post.ppi[1] > 0.95
        post.meta["final_state"].check()

    def test_accepts_normalized_matrix(self):
        Y, X = instance()
        m = NormalizedMatrix(Y.T, 1.0, tuple("abcdef"))
        a = run_gibbs_normalized(m, X, config=GibbsConfig(10, 2, seed=2))
        b = run_gibbs_normalized(Y, X, config=GibbsConfig(10, 2, seed=2))
        np.testing.assert_array_equal(a.gamma_draws, b.gamma_draws)
        assert a.gene_ids == tuple("abcdef")

    def test_non_finite_rejected(self):
        Y, X = instance()
        Y[3, 2] = np.nan
        with pytest.raises(ValueError):
            run_gibbs_normalized(Y, X, config=GibbsConfig(2, 0))

    def test_row_mismatch(self):
        Y, X = instance()
        with pytest.raises(ValueError, match="rows"):
            run_gibbs_normalized(Y[:-1], X, config=GibbsConfig(2, 0))

    def test_deterministic(self):
        Y, X = instance()
        a = run_gibbs_normalized(Y, X, config=GibbsConfig(15, 5, seed=3))
        b = run_gibbs_normalized(Y, X, config=GibbsConfig(15, 5, seed=3))
        np.testing.assert_array_equal(a.g, b.g)
