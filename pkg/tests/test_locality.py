import numpy as np
import pytest

from mftsim import (MftState, SamplerConfig, cross_time_sensitivity,
                    epr_timing_scan, integrate_sheet, sample_initial,
                    sensitivity_scan, single_time_oracle)


@pytest.fixture(scope="module")
def product_state(pair_state):
    # one branch of the entangled pair, alone: a strict product state
    return MftState(branches=[pair_state.branches[0]], coefficients=[1.0])


class TestSingleTimeOracle:
    def test_zero_offset_sheet_reduces_to_single_time(self, free_state,
                                                      pair_state):
        for state, x0, t1 in [(free_state, [1.0], 2.0),
                              (pair_state, [0.4, -0.3], 1.5)]:
            delta = [0.0] * state.n_particles
            sheet = integrate_sheet(state, delta, x0, 0.0, t1, 1e-3)
            tr = single_time_oracle(state, x0, 0.0, t1)
            sup = 0.0
            for i in range(state.n_particles):
                oi = np.interp(sheet.tau_grid, tr.t_grid, tr.positions[:, i])
                sup = max(sup, float(np.max(np.abs(
                    oi - sheet.positions[:, i]))))
            assert sup < 1e-6

    def test_oracle_matches_closed_form(self, free_state):
        tr = single_time_oracle(free_state, [1.0], 0.0, 2.0)
        want = np.sqrt(1.0 + tr.t_grid ** 2 / 4.0)
        assert np.max(np.abs(tr.positions[:, 0] - want)) < 1e-8

    def test_validates_input(self, pair_state):
        with pytest.raises(ValueError):
            single_time_oracle(pair_state, [0.1], 0.0, 1.0)
        with pytest.raises(ValueError):
            single_time_oracle(pair_state, [0.1, 0.2], 0.0, 1.0, h=0.0)


class TestCrossTimeSensitivity:
    def test_product_state_is_insensitive(self, product_state):
        r = cross_time_sensitivity(product_state, [0.4, -0.3], [1.0, 0.7],
                                   0, 1)
        assert abs(r.dvi_dtj) < 1e-9

    def test_entangled_state_is_sensitive(self, pair_state):
        r = cross_time_sensitivity(pair_state, [0.4, -0.3], [1.0, 0.7], 0, 1)
        assert r.converged
        assert abs(r.dvi_dtj) > 1e-3

    def test_scan_covers_probe_grid(self, pair_state, product_state):
        rows = sensitivity_scan(pair_state, [1.0, 0.7], 0, 1)
        assert len(rows) == 25
        assert max(abs(r.dvi_dtj) for r in rows) > 1e-3
        rows_p = sensitivity_scan(product_state, [1.0, 0.7], 0, 1)
        assert max(abs(r.dvi_dtj) for r in rows_p) < 1e-9

    def test_report_records_probe(self, pair_state):
        r = cross_time_sensitivity(pair_state, [0.4, -0.3], [1.0, 0.7], 0, 1)
        assert r.i == 0 and r.j == 1
        assert r.x == (0.4, -0.3)
        assert r.t == (1.0, 0.7)
        assert r.step > 0


@pytest.fixture(scope="module")
def small_scan(collapse_state):
    X0 = sample_initial(collapse_state, [0.0, 0.0],
                        SamplerConfig(n_samples=60, seed=9))
    return epr_timing_scan(collapse_state, 3.0, [0.0, 0.5, 1.0], X0,
                           offsets=[0.0, 0.0])


class TestEprTimingScan:
    def test_no_flips_across_t2(self, small_scan):
        assert small_scan.flips == 0
        assert small_scan.frequencies[0] == small_scan.frequencies[1]
        assert small_scan.frequencies[1] == small_scan.frequencies[2]

    def test_all_samples_classified(self, small_scan):
        assert small_scan.unclassified == (0.0, 0.0, 0.0)
        assert small_scan.n_samples == 60
        assert len(small_scan.rows) == 60 * 3

    def test_frequencies_near_weights(self, small_scan):
        assert small_scan.expected[0] == pytest.approx(0.3, abs=1e-12)
        for freqs in small_scan.frequencies:
            assert abs(freqs[0] - 0.3) < 0.25  # n = 60: loose gate only

    def test_rows_are_classified_labels(self, small_scan):
        for row in small_scan.rows[:10]:
            assert row.branch in (0, 1)
            assert row.w_max > 0.999
            assert row.t2 in (0.0, 0.5, 1.0)
