import numpy as np
import pytest

from mftsim import (DiagonalChart, NodeStall, beable_at, flow_ensemble,
                    integrate_sheet, newton_report, newton_residual,
                    velocity_field)

from oracles import free_packet_moments


class TestDiagonalChart:
    def test_offsets_must_sum_to_zero(self):
        with pytest.raises(ValueError):
            DiagonalChart(tau=0.0, offsets=(0.5, -0.4))

    def test_from_times_roundtrip(self):
        chart = DiagonalChart.from_times([1.3, 0.2, 0.6])
        assert np.allclose(chart.times(), [1.3, 0.2, 0.6], atol=1e-15)
        assert abs(sum(chart.offsets)) <= 1e-12

    def test_times_reconstruction_exact(self):
        chart = DiagonalChart(tau=0.0, offsets=(0.5, -0.5))
        assert tuple(chart.times(1.25)) == (1.75, 0.75)


class TestFreePacketFlow:
    def test_closed_form_endpoint(self, free_state):
        # sigma0 = 1, x0 = 1: x(tau) = sqrt(1 + tau^2/4), so x(2) = sqrt(2)
        sheet = integrate_sheet(free_state, [0.0], [1.0], 0.0, 2.0, 1e-3)
        assert sheet.positions[-1][0] == pytest.approx(np.sqrt(2.0),
                                                       abs=1e-9)

    def test_closed_form_along_whole_sheet(self, free_state):
        sheet = integrate_sheet(free_state, [0.0], [1.0], 0.0, 2.0, 1e-3)
        packet = free_state.branches[0][0]
        _, s0 = free_packet_moments(packet, 0.0)
        want = np.array([free_packet_moments(packet, t)[1] / s0
                         for t in sheet.tau_grid])
        assert np.max(np.abs(sheet.positions[:, 0] - want)) < 1e-8

    def test_beable_at_backward(self, free_state):
        x2 = beable_at(free_state, [1.0], 0.0, [2.0])
        assert x2[0] == pytest.approx(np.sqrt(2.0), abs=1e-9)
        back = beable_at(free_state, x2, 2.0, [0.0])
        assert back[0] == pytest.approx(1.0, abs=1e-10)


class TestHarmonicFlow:
    def test_coherent_flow_is_rigid_translation(self, harmonic_state):
        # A = i m w / 2 makes grad S independent of x: every point is carried
        # at the classical velocity and returns after one period
        sheet = integrate_sheet(harmonic_state, [0.0], [1.5], 0.0,
                                2.0 * np.pi, 1e-3)
        assert sheet.positions[-1][0] == pytest.approx(1.5, abs=1e-9)


class TestVelocityField:
    def test_real_state_has_zero_velocity(self, cat_state):
        # equal and opposite momenta with real coefficients: Psi(x, 0) real
        v = velocity_field(cat_state, [0.2], [0.0])
        assert abs(v[0]) < 1e-12

    def test_packet_center_moves_at_momentum(self):
        from mftsim import GaussianPacket, MftState, Potential, PotentialSpec
        p = GaussianPacket(mass=1.0, potential=PotentialSpec(Potential.FREE),
                           center=0.3, momentum=2.0, width_param=0.25j)
        s = MftState(branches=[[p]], coefficients=[1.0])
        v = velocity_field(s, [0.3], [0.0])
        assert v[0] == pytest.approx(2.0, abs=1e-12)

    def test_entangled_velocity_depends_on_other_particle(self, pair_state):
        T = [0.8, 0.8]
        va = velocity_field(pair_state, [0.2, 0.5], T)[0]
        vb = velocity_field(pair_state, [0.2, -0.5], T)[0]
        assert abs(va - vb) > 1e-3


class TestSheets:
    def test_sheet_records_chart_and_grid(self, pair_state):
        sheet = integrate_sheet(pair_state, [0.5, -0.5], [0.4, -0.3],
                                0.0, 1.5, 1e-3)
        assert sheet.offsets == (0.5, -0.5)
        assert sheet.tau_grid[0] == 0.0
        assert sheet.tau_grid[-1] == pytest.approx(1.5, abs=1e-12)
        assert np.all(np.diff(sheet.tau_grid) > 0)
        assert sheet.positions.shape == (len(sheet.tau_grid), 2)

    def test_flow_ensemble_matches_lockstep(self, pair_state):
        X0 = np.array([[0.4, -0.3], [0.1, 0.2], [-0.5, 0.6]])
        Xf, stalled = flow_ensemble(pair_state, [0.5, -0.5], X0, 0.0, 1.5,
                                    1e-3)
        assert not stalled.any()
        for k in range(X0.shape[0]):
            sheet = integrate_sheet(pair_state, [0.5, -0.5], X0[k], 0.0, 1.5,
                                    1e-3)
            assert np.array_equal(Xf[k], sheet.positions[-1])

    def test_node_start_stalls(self, cat_state):
        with pytest.raises(NodeStall) as exc:
            integrate_sheet(cat_state, [0.0], [np.pi / 4], 0.0, 1.0, 1e-3)
        assert exc.value.last_good_tau == 0.0


class TestQuantumNewton:
    def test_residual_small_on_smooth_sheets(self, free_state, pair_state):
        for state, delta, x0, tau1 in [
                (free_state, [0.0], [1.0], 2.0),
                (pair_state, [0.5, -0.5], [0.4, -0.3], 1.5)]:
            sheet = integrate_sheet(state, delta, x0, 0.0, tau1, 1e-3)
            taus, res = newton_report(sheet)
            assert res.shape == (len(sheet.tau_grid) - 2, state.n_particles)
            assert len(taus) == res.shape[0]
            assert np.max(np.abs(res)) < 1e-3

    def test_residual_second_order_in_step(self, pair_state):
        def worst(h):
            sheet = integrate_sheet(pair_state, [0.5, -0.5], [0.4, -0.3],
                                    0.0, 1.5, h)
            return float(newton_residual(sheet).max())

        ratio = worst(4e-3) / worst(2e-3)
        assert 3.4 < ratio < 5.0
