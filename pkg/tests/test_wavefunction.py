import numpy as np
import pytest

import mftsim.wavefunction as wf
from mftsim import (GaussianPacket, MftState, NODE_EPS, NodeError, Potential,
                    PotentialSpec, density, effective_coefficients,
                    evaluate_psi, evolve_packet, gram_matrix, phase_gradient,
                    quantum_potential, state_fingerprint)
from mftsim.residuals import schrodinger_residual

from oracles import crank_nicolson, mp_state_value, packet_value_at_ref

FREE = PotentialSpec(Potential.FREE)
HARM = PotentialSpec(Potential.HARMONIC, omega=1.0)


def _single(packet):
    return MftState(branches=[[packet]], coefficients=[1.0])


@pytest.fixture(scope="module")
def free_single():
    return _single(GaussianPacket(mass=1.0, potential=FREE, center=0.0,
                                  momentum=1.0, width_param=0.25j))


@pytest.fixture(scope="module")
def harm_single():
    return _single(GaussianPacket(mass=1.0, potential=HARM, center=1.0,
                                  momentum=0.0, width_param=0.5j))


@pytest.mark.slow
class TestAgainstOdeOracle:
    """Values vs an mpmath integration of the Gaussian parameter ODEs.

    The oracle never touches the closed-form evolution: winding, classical
    action and norm drift all emerge from the integration.
    """

    def test_free_packet(self, free_single):
        for x, t in [(0.7, 1.3), (-0.4, 2.0)]:
            got = evaluate_psi(free_single, [x], [t]).value
            want = complex(mp_state_value(free_single, [x], [t]))
            assert abs(got - want) < 1e-12

    def test_harmonic_past_winding(self, harm_single):
        # t = 7 crosses the u-plane branch cut; the closed form must agree
        # with the ODE's continuously accumulated phase
        for x, t in [(0.8, 2.5), (0.0, 7.0)]:
            got = evaluate_psi(harm_single, [x], [t]).value
            want = complex(mp_state_value(harm_single, [x], [t]))
            assert abs(got - want) < 1e-12

    def test_entangled_pair_mixed_times(self, pair_state):
        for X, T in [([0.4, -0.3], [0.7, 0.3]), ([1.0, 0.2], [1.5, 0.9])]:
            got = evaluate_psi(pair_state, X, T).value
            want = complex(mp_state_value(pair_state, X, T))
            assert abs(got - want) < 1e-12


@pytest.mark.slow
class TestAgainstGridPropagator:
    """Values vs an independent Crank-Nicolson solve of the PDE itself."""

    def _run(self, state, vfun, tend, span):
        x = np.linspace(span[0], span[1], int((span[1] - span[0]) / 0.01) + 1)
        psi0 = np.array([evaluate_psi(state, [xx], [0.0]).value for xx in x])
        dt = 2e-4
        psi = crank_nicolson(psi0, x, dt, round(tend / dt), 1.0, vfun(x))
        ref = np.array([evaluate_psi(state, [xx], [tend]).value for xx in x])
        return float(np.max(np.abs(psi - ref)) / np.max(np.abs(ref)))

    def test_free_packet(self, free_single):
        err = self._run(free_single, lambda x: 0.0 * x, 1.0, (-12.0, 14.0))
        assert err < 1e-4

    def test_harmonic_coherent(self, harm_single):
        err = self._run(harm_single, lambda x: 0.5 * x ** 2, 1.0, (-9.0, 9.0))
        assert err < 1e-4

    def test_grid_refinement_second_order(self, free_single):
        # the dx^2 term dominates at these resolutions; halving dx must cut
        # the disagreement by about 4
        def run(dx):
            x = np.arange(-12.0, 14.0 + dx / 2, dx)
            psi0 = packet_value_at_ref(free_single.branches[0][0], x)
            psi = crank_nicolson(psi0, x, 2e-4, 5000, 1.0, 0.0 * x)
            ref = np.array([evaluate_psi(free_single, [xx], [1.0]).value
                            for xx in x])
            return float(np.max(np.abs(psi - ref)))

        ratio = run(0.02) / run(0.01)
        assert 2.5 < ratio < 6.0


class TestGram:
    def test_pair_gram_vs_quadrature(self, pair_state):
        g = gram_matrix(pair_state)
        x = np.linspace(-12.0, 12.0, 24001)
        packs = pair_state.branches
        num = np.empty_like(np.asarray(g))
        for a in range(2):
            for b in range(2):
                prod = 1.0 + 0.0j
                for i in range(pair_state.n_particles):
                    va = packet_value_at_ref(packs[a][i], x)
                    vb = packet_value_at_ref(packs[b][i], x)
                    prod *= np.trapezoid(np.conj(va) * vb, x)
                num[a, b] = prod
        assert np.max(np.abs(np.asarray(g) - num)) < 1e-10

    def test_pair_norm_squared_value(self, pair_state):
        # equal-center opposite-momentum branches: the cross overlap per slot
        # is exp(-2), so c^dag G c = 1 + e^-4
        g = np.asarray(gram_matrix(pair_state))
        c = np.asarray(pair_state.coefficients)
        norm2 = float(np.real(np.conj(c) @ g @ c))
        assert norm2 == pytest.approx(1.0 + np.exp(-4.0), abs=1e-13)
        assert norm2 == pytest.approx(1.018315638888734, abs=1e-12)

    def test_effective_coefficients_normalized(self, pair_state, triple_state):
        for state in (pair_state, triple_state):
            g = np.asarray(gram_matrix(state))
            ce = effective_coefficients(state)
            assert np.real(np.conj(ce) @ g @ ce) == pytest.approx(1.0,
                                                                  abs=1e-12)


class TestPointwise:
    def test_density_is_squared_magnitude(self, pair_state):
        X, T = [0.4, -0.3], [0.7, 0.3]
        amp = evaluate_psi(pair_state, X, T)
        assert density(pair_state, X, T) == pytest.approx(
            abs(amp.value) ** 2, rel=1e-12)

    def test_phase_gradient_matches_fd(self, pair_state):
        X, T = np.array([0.4, -0.3]), np.array([0.7, 0.3])
        h = 1e-5
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            pp = evaluate_psi(pair_state, X + e, T).phase
            pm = evaluate_psi(pair_state, X - e, T).phase
            fd = np.angle(np.exp(1j * (pp - pm))) / (2 * h)
            assert phase_gradient(pair_state, X, T, i) == pytest.approx(
                fd, abs=1e-6)

    def test_quantum_potential_free_closed_form(self, free_single):
        # single Gaussian: Q = (1/m) (1/(4 sigma^2) - d^2/(8 sigma^4))
        t = 0.9
        q = evolve_packet(free_single.branches[0][0], t)
        ai = q.width_param.imag
        s2 = 1.0 / (4.0 * ai)
        for x in (0.5, 1.4, -0.2):
            d = x - q.center
            want = (1.0 / (4.0 * s2) - d * d / (8.0 * s2 * s2))
            assert quantum_potential(free_single, [x], [t]) == pytest.approx(
                want, rel=1e-9, abs=1e-12)

    def test_tail_evaluation_stays_finite(self, free_single):
        # 40 sigma out: the (log magnitude, phase) carrier must not overflow
        amp = evaluate_psi(free_single, [40.0], [0.0])
        assert np.isfinite(amp.log_magnitude)
        assert amp.log_magnitude < -300.0
        assert 0.0 < abs(amp.value) < 1e-150


class TestNodes:
    def test_node_raises(self, cat_state):
        x_node = np.pi / 4  # cos(2x) zero at t = 0
        with pytest.raises(NodeError):
            evaluate_psi(cat_state, [x_node], [0.0])

    def test_off_node_fine(self, cat_state):
        amp = evaluate_psi(cat_state, [np.pi / 4 + 0.1], [0.0])
        assert np.isfinite(amp.log_magnitude)

    def test_node_eps_exported(self):
        assert NODE_EPS == 1e-12


class TestFingerprint:
    def test_stable_and_distinct(self, free_single, harm_single, pair_state):
        prints = [state_fingerprint(s)
                  for s in (free_single, harm_single, pair_state)]
        assert len(set(prints)) == 3
        assert state_fingerprint(free_single) == prints[0]


class TestCorruptedEvolution:
    def test_width_drift_breaks_schrodinger_residual(self, free_single,
                                                     monkeypatch):
        X, T = [0.9], [0.8]
        clean = schrodinger_residual(free_single, X, T, 0, hx=1e-3, ht=1e-3)
        assert clean < 1e-5

        original = wf.evolve_tables

        def corrupted(ps, T):
            xi, pp, ar, ai, ph, lnn = original(ps, T)
            return xi, pp, ar, ai * 1.05, ph, lnn  # 5% width error

        monkeypatch.setattr(wf, "evolve_tables", corrupted)
        broken = schrodinger_residual(free_single, X, T, 0, hx=1e-3, ht=1e-3)
        assert broken > 1e-2
