import numpy as np
import pytest

from jasper.selection import compute_ppi, pefdr, pefdr_select, read_selection, write_selection


class TestPPI:
    def test_chain_average(self):
        draws = np.array([[1, 0, 1], [1, 0, 0], [1, 1, 0], [1, 0, 0]])
        np.testing.assert_array_equal(compute_ppi(draws), [1.0, 0.25, 0.25])

    def test_empty_chain(self):
        with pytest.raises(ValueError):
            compute_ppi(np.zeros((0, 3)))


class TestPeFDR:
    def test_worked_example(self):
        rep = pefdr_select([0.99, 0.98, 0.90])
        np.testing.assert_array_equal(rep.selected, [0, 1, 2])
        assert rep.pefdr_at_c == pytest.approx((0.01 + 0.02 + 0.10) / 3, rel=1e-12)
        assert round(rep.pefdr_at_c, 4) == 0.0433

    def test_stops_before_target_is_exceeded(self):
        rep = pefdr_select([0.99, 0.98, 0.90, 0.5, 0.2])
        np.testing.assert_array_equal(rep.selected, [0, 1, 2])
        assert rep.threshold_c == 0.5

    def test_ties_enter_together(self):
        # {0.99, 0.9, 0.9} has peFDR 0.07; {0.99} alone is admissible
        rep = pefdr_select([0.9, 0.99, 0.9])
        np.testing.assert_array_equal(rep.selected, [1])

    def test_nothing_admissible(self):
        rep = pefdr_select([0.5, 0.4])
        assert rep.empty and rep.selected.size == 0 and np.isnan(rep.pefdr_at_c)

    def test_all_certain(self):
        rep = pefdr_select([1.0, 1.0, 1.0])
        assert rep.pefdr_at_c == 0.0 and rep.selected.size == 3

    @pytest.mark.parametrize("t", [0.0, 1.0, -0.1])
    def test_bad_target(self, t):
        with pytest.raises(ValueError):
            pefdr_select([0.9], t)

    def test_monotone_in_target(self):
        ppi = np.random.default_rng(0).random(50)
        sizes = [pefdr_select(ppi, t).selected.size for t in (0.01, 0.05, 0.1, 0.2, 0.5)]
        assert sizes == sorted(sizes)

    def test_pefdr_at_cutoff(self):
        assert pefdr([0.99, 0.98, 0.9, 0.2], 0.5) == pytest.approx(0.13 / 3)
        assert np.isnan(pefdr([0.1], 0.5))

    def test_csv_round_trip(self, tmp_path):
        rep = pefdr_select([0.99, 0.2, 0.97])
        write_selection(rep, ["a", "b", "c"], tmp_path / "s.csv")
        genes, ppi, sel = read_selection(tmp_path / "s.csv")
        assert genes == ["a", "b", "c"]
        np.testing.assert_array_equal(ppi, [0.99, 0.2, 0.97])
        np.testing.assert_array_equal(sel, [True, False, True])
