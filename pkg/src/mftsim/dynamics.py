"""Beable dynamics: diagonal time charts and the guidance-law flow.

The beable configuration moves along the diagonal direction of multi-time:
fix constant offsets Delta_i with sum_i Delta_i = 0 and sweep tau, visiting
time vectors T(tau) = tau + Delta. Along that sweep each coordinate follows

    dx_i/dtau = Im(d_i Psi / Psi)(X, T(tau)) / m_i .

Integration is classic fixed-step RK4 on a uniform tau grid (reproducible
sheets, simple convergence analysis). If any RK4 stage lands inside an
interference node (relative magnitude below the node threshold), the
offending interval is retried with 2, 4, 8, ... uniform substeps; if
2^max_halvings substeps still touch the node, integration stops with
NodeStall carrying the last clean tau.

How the beable varies transversally to the diagonal flow is not fixed by the
guidance law; the constant-X0 sheet rule used by beable_at (same initial
configuration on the tau = tau0 slice of every chart) is the minimal
completion and is deliberately exposed rather than hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NodeError, NodeStall
from .wavefunction import MftState, NODE_EPS, velocity_batch

OFFSET_SUM_TOL = 1e-12
DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class DiagonalChart:
    """A point tau on a constant-offset diagonal slicing of multi-time.

    offsets must sum to zero within 1e-12 (the gauge making tau the mean of
    the slot times); times() reconstructs T = tau + Delta exactly.
    """

    tau: float
    offsets: tuple

    def __post_init__(self):
        off = tuple(float(d) for d in self.offsets)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "offsets", off)
        if len(off) == 0:
            raise ValueError("chart needs at least one offset")
        s = float(np.sum(np.asarray(off)))
        if abs(s) > OFFSET_SUM_TOL:
            raise ValueError(
                f"offsets must sum to zero (got {s:.3e}); re-center them")

    @classmethod
    def from_times(cls, T) -> "DiagonalChart":
        """Chart point through the time vector T, tau = mean(T)."""
        t = np.asarray(T, dtype=float)
        tau = float(t.mean())
        off = t - tau
        off = off - off.mean()  # second pass kills the fp remainder
        return cls(tau=tau, offsets=tuple(off))

    @property
    def n(self) -> int:
        return len(self.offsets)

    def times(self, tau: float | None = None) -> np.ndarray:
        if tau is None:
            tau = self.tau
        return tau + np.asarray(self.offsets)

    def at(self, tau: float) -> "DiagonalChart":
        return DiagonalChart(tau=tau, offsets=self.offsets)


def _as_offsets(delta, n: int) -> tuple:
    if isinstance(delta, DiagonalChart):
        off = delta.offsets
    else:
        off = tuple(float(d) for d in np.asarray(delta, dtype=float).ravel())
    if len(off) != n:
        raise ValueError(f"need {n} offsets, got {len(off)}")
    return off


@dataclass(frozen=True, eq=False)
class BeableSheet:
    """One integrated flow line: positions[k] at chart times tau_grid[k]."""

    state: MftState
    chart: DiagonalChart
    tau_grid: np.ndarray
    positions: np.ndarray

    @property
    def offsets(self) -> tuple:
        return self.chart.offsets

    def times(self, k: int) -> np.ndarray:
        return self.chart.times(float(self.tau_grid[k]))


def velocity_field(state: MftState, X, T) -> np.ndarray:
    """v_i = grad_i S / m_i at one configuration. NodeError at nodes."""
    v, rel = velocity_batch(state, np.atleast_2d(np.asarray(X, float)), T)
    if rel[0] < NODE_EPS:
        raise NodeError("velocity undefined at a node",
                        rel_magnitude=float(rel[0]), rel_threshold=NODE_EPS)
    return v[0].copy()


def _rk4_step_batch(state, chart, X, tau, dtau):
    """One RK4 step for a batch of configurations.

    Returns (X_next, bad) where bad flags samples whose stencil touched a
    node at any stage; their X_next values are unusable.
    """
    k1, r1 = velocity_batch(state, X, chart.times(tau))
    k2, r2 = velocity_batch(state, X + 0.5 * dtau * k1,
                            chart.times(tau + 0.5 * dtau))
    k3, r3 = velocity_batch(state, X + 0.5 * dtau * k2,
                            chart.times(tau + 0.5 * dtau))
    k4, r4 = velocity_batch(state, X + dtau * k3, chart.times(tau + dtau))
    Xn = X + (dtau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    bad = ((r1 < NODE_EPS) | (r2 < NODE_EPS)
           | (r3 < NODE_EPS) | (r4 < NODE_EPS))
    return Xn, bad


def _grid(tau0: float, tau1: float, step: float):
    span = tau1 - tau0
    if step <= 0:
        raise ValueError("step must be positive")
    N = max(1, int(round(abs(span) / step)))
    taus = tau0 + (span / N) * np.arange(N + 1)
    taus[-1] = tau1
    return taus


def _advance_interval(state, chart, X, ta, tb, max_halvings):
    """X across [ta, tb] with node-triggered halving; raises NodeStall."""
    for j in range(max_halvings + 1):
        M = 2 ** j
        h = (tb - ta) / M
        Y = X
        ok = True
        for q in range(M):
            Y, bad = _rk4_step_batch(state, chart, Y, ta + q * h, h)
            if bad.any():
                ok = False
                break
        if ok:
            return Y
    raise NodeStall(
        f"node region not resolvable after {max_halvings} halvings "
        f"in tau interval [{ta:.6g}, {tb:.6g}]", last_good_tau=ta)


def integrate_sheet(state: MftState, delta, x0, tau0: float, tau1: float,
                    step: float = DEFAULT_STEP,
                    max_halvings: int = 20) -> BeableSheet:
    """Integrate one flow line from tau0 to tau1 on the offsets `delta`.

    The returned sheet samples the uniform grid of round(|tau1-tau0|/step)
    intervals; node-triggered substeps refine the interior of an interval but
    the reported grid stays uniform. tau1 < tau0 integrates backward.
    """
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    if x0.shape[1] != state.n_particles:
        raise ValueError("x0 length must match the particle count")
    chart = DiagonalChart(tau=tau0,
                          offsets=_as_offsets(delta, state.n_particles))
    if tau1 == tau0:
        return BeableSheet(state, chart, np.array([tau0]), x0.copy())
    taus = _grid(tau0, tau1, step)
    pos = np.empty((len(taus), x0.shape[1]))
    pos[0] = x0[0]
    X = x0
    for k in range(len(taus) - 1):
        Xn, bad = _rk4_step_batch(state, chart, X, taus[k],
                                  taus[k + 1] - taus[k])
        if bad.any():
            Xn = _advance_interval(state, chart, X, taus[k], taus[k + 1],
                                   max_halvings)
        X = Xn
        pos[k + 1] = X[0]
    return BeableSheet(state, chart, taus, pos)


def flow_ensemble(state: MftState, delta, X0s, tau0: float, tau1: float,
                  step: float = DEFAULT_STEP, max_halvings: int = 20):
    """Endpoint-only flow of many samples in lockstep.

    Samples that touch a node are retried one by one with halving; the ones
    that still stall are flagged in the returned mask and keep their position
    at the last clean tau.
    """
    X = np.array(X0s, dtype=float)
    if X.ndim != 2 or X.shape[1] != state.n_particles:
        raise ValueError("X0s must be (n_samples, n_particles)")
    offsets = _as_offsets(delta, state.n_particles)
    chart = DiagonalChart(tau=tau0, offsets=offsets)
    stalled = np.zeros(X.shape[0], dtype=bool)
    if tau1 == tau0:
        return X, stalled
    taus = _grid(tau0, tau1, step)
    contaminated = np.zeros(X.shape[0], dtype=bool)
    X0_saved = X.copy()
    for k in range(len(taus) - 1):
        Xn, bad = _rk4_step_batch(state, chart, X, taus[k],
                                  taus[k + 1] - taus[k])
        contaminated |= bad
        X = Xn
    for s in np.nonzero(contaminated)[0]:
        try:
            sheet = integrate_sheet(state, offsets, X0_saved[s], tau0, tau1,
                                    step, max_halvings)
            X[s] = sheet.positions[-1]
        except NodeStall as stall:
            stalled[s] = True
            sheet = integrate_sheet(state, offsets, X0_saved[s], tau0,
                                    stall.last_good_tau, step, max_halvings)
            X[s] = sheet.positions[-1]
    return X, stalled


def beable_at(state: MftState, x0, tau0: float, T,
              step: float = DEFAULT_STEP) -> np.ndarray:
    """Beable position at the time vector T under the constant-X0 rule.

    T decomposes into the chart through it (tau = mean of T); x0 is the
    configuration on that chart's tau = tau0 slice. Backward sweeps
    (mean(T) < tau0) work the same way.
    """
    chart = DiagonalChart.from_times(T)
    sheet = integrate_sheet(state, chart.offsets, x0, tau0, chart.tau, step)
    return sheet.positions[-1].copy()


def newton_report(sheet: BeableSheet, state: MftState | None = None,
                  q_step: float = 1e-3):
    """Signed residuals m_i x_i'' + d_i(V_i + Q): (taus, (K-2, n) array).

    Acceleration is a central second difference of the integrated positions;
    dV is analytic and dQ a central difference with q_step. Both error terms
    are O(step^2) + O(q_step^2). Probes whether the integrated flow line
    obeys the second-order law implied by the guidance equation along the
    diagonal flow.
    """
    from .wavefunction import potential_gradient, quantum_potential_batch

    state = sheet.state if state is None else state
    taus = sheet.tau_grid
    pos = sheet.positions
    if len(taus) < 3:
        raise ValueError("sheet too short for a second difference")
    dtau = taus[1] - taus[0]
    acc = (pos[2:] - 2.0 * pos[1:-1] + pos[:-2]) / dtau ** 2
    n = pos.shape[1]
    mass = np.asarray(state.masses)
    res = np.empty_like(acc)
    for k in range(1, len(taus) - 1):
        X = pos[k]
        T = sheet.chart.times(float(taus[k]))
        disp = np.repeat(X[None, :], 2 * n, axis=0)
        for i in range(n):
            disp[2 * i, i] += q_step
            disp[2 * i + 1, i] -= q_step
        Q = quantum_potential_batch(state, disp, T)
        dQ = (Q[0::2] - Q[1::2]) / (2.0 * q_step)
        dV = potential_gradient(state, X[None, :])[0]
        res[k - 1] = mass * acc[k - 1] + dV + dQ
    return taus[1:-1].copy(), res


def newton_residual(sheet: BeableSheet, state: MftState | None = None,
                    q_step: float = 1e-3) -> np.ndarray:
    """Max-over-particles |m_i x_i'' + d_i(V_i + Q)| per interior grid point."""
    _, res = newton_report(sheet, state, q_step)
    return np.abs(res).max(axis=1)
