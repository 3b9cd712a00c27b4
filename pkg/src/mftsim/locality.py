"""Global-vs-local consistency probes and the single-time reference path.

Three jobs live here:

  - single_time_oracle: an ordinary one-time Bohmian integrator that sets
    t_1 = ... = t_n = t by construction. It deliberately repeats the RK4
    stepping logic instead of reusing the chart machinery, so agreement with
    the diagonal flow at zero offsets cross-validates two code paths rather
    than one.

  - cross_time_sensitivity: the finite-mode version of the consistency
    question for a local (per-time) beable equation. A local equation needs
    dv_i/dt_j = 0 for j != i; a product state satisfies that identically,
    while entangled superpositions do not. The probe measures the derivative
    by central differences with a step-halving convergence check.

  - epr_timing_scan: with particle 1's branches fully separated at t1, the
    occupied branch must not depend on the choice of t2. Each sample is
    classified at (t1, t2) for every t2 in the grid; any change of label
    across the grid counts as a flip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DiagonalChart, flow_ensemble, velocity_field
from .ensemble import classify_batch, expected_branch_probs
from .errors import NodeStall
from .wavefunction import (MftState, NODE_EPS, as_times, evolve_tables,
                           pack_state, velocity_batch)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Single-time Bohmian trajectory: positions[k] at times t_grid[k]."""

    t_grid: np.ndarray
    positions: np.ndarray


def _vel_equal_times(state, X, t):
    # all slot clocks read t; no chart decomposition anywhere in this path
    n = state.n_particles
    return velocity_batch(state, X, np.full(n, t))


def single_time_oracle(state: MftState, X0, t0: float, t1: float,
                       h: float = 1e-3, max_halvings: int = 20) -> Trajectory:
    """Integrate dx_i/dt = grad_i S(X, t*1)/m_i with fixed-step RK4.

    Same step policy as the sheet integrator (uniform grid, node-triggered
    interval halving, NodeStall on exhaustion) but an independent code path.
    """
    X = np.asarray(X0, dtype=float).reshape(1, -1)
    if X.shape[1] != state.n_particles:
        raise ValueError("X0 length must match the particle count")
    if t1 == t0:
        return Trajectory(np.array([t0]), X.copy())
    if h <= 0:
        raise ValueError("step must be positive")
    span = t1 - t0
    N = max(1, int(round(abs(span) / h)))
    ts = t0 + (span / N) * np.arange(N + 1)
    ts[-1] = t1

    def rk4(Xc, ta, dt):
        k1, r1 = _vel_equal_times(state, Xc, ta)
        k2, r2 = _vel_equal_times(state, Xc + 0.5 * dt * k1, ta + 0.5 * dt)
        k3, r3 = _vel_equal_times(state, Xc + 0.5 * dt * k2, ta + 0.5 * dt)
        k4, r4 = _vel_equal_times(state, Xc + dt * k3, ta + dt)
        bad = ((r1 < NODE_EPS) | (r2 < NODE_EPS)
               | (r3 < NODE_EPS) | (r4 < NODE_EPS)).any()
        return Xc + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), bad

    pos = np.empty((N + 1, X.shape[1]))
    pos[0] = X[0]
    for k in range(N):
        ta, tb = ts[k], ts[k + 1]
        Xn, bad = rk4(X, ta, tb - ta)
        if bad:
            Xn = None
            for j in range(1, max_halvings + 1):
                M = 2 ** j
                sub = (tb - ta) / M
                Y = X
                clean = True
                for q in range(M):
                    Y, b = rk4(Y, ta + q * sub, sub)
                    if b:
                        clean = False
                        break
                if clean:
                    Xn = Y
                    break
            if Xn is None:
                raise NodeStall(
                    f"single-time flow stalled in [{ta:.6g}, {tb:.6g}]",
                    last_good_tau=float(ta))
        X = Xn
        pos[k + 1] = X[0]
    return Trajectory(ts, pos)


@dataclass(frozen=True)
class SensitivityReport:
    """Converged central-difference estimate of dv_i/dt_j at one point."""

    i: int
    j: int
    x: tuple
    t: tuple
    dvi_dtj: float
    step: float
    coarse: float
    converged: bool


def cross_time_sensitivity(state: MftState, X, T, i: int, j: int,
                           step: float = 1e-4) -> SensitivityReport:
    """dv_i/dt_j by central differences at step and step/2.

    The halved estimate is reported; convergence means the two agree within
    10% (or both are below 1e-12, where the difference is pure roundoff).
    """
    if i == j:
        raise ValueError("cross-time sensitivity needs i != j")
    t = as_times(T, state.n_particles)
    x = np.asarray(X, dtype=float)
    ej = np.zeros(state.n_particles)
    ej[j] = 1.0

    def fd(h):
        vp = velocity_field(state, x, t + h * ej)[i]
        vm = velocity_field(state, x, t - h * ej)[i]
        return (vp - vm) / (2.0 * h)

    coarse = fd(step)
    fine = fd(0.5 * step)
    converged = abs(coarse - fine) <= max(0.1 * abs(fine), 1e-12)
    return SensitivityReport(i=i, j=j, x=tuple(x), t=tuple(t),
                             dvi_dtj=float(fine), step=step,
                             coarse=float(coarse), converged=bool(converged))


def sensitivity_probe_grid(state: MftState, T, i: int, j: int,
                           n_per_axis: int = 5,
                           half_widths: float = 2.0) -> np.ndarray:
    """Default probe lattice: n_per_axis^2 points in the (x_i, x_j) plane
    spanning +-half_widths packet widths around the inter-branch midpoint;
    remaining coordinates sit at the midpoint. Sensitivity is largest where
    branches interfere, which is exactly this region."""
    ps = pack_state(state)
    t = as_times(T, ps.n)
    xi, pp, ar, ai, ph, lnn = evolve_tables(ps, t)
    sigma = np.sqrt(1.0 / (4.0 * ai))
    mid = xi.mean(axis=0)
    span = sigma.max(axis=0) * half_widths
    ax_i = np.linspace(mid[i] - span[i], mid[i] + span[i], n_per_axis)
    ax_j = np.linspace(mid[j] - span[j], mid[j] + span[j], n_per_axis)
    gi, gj = np.meshgrid(ax_i, ax_j, indexing="ij")
    pts = np.repeat(mid[None, :], n_per_axis ** 2, axis=0)
    pts[:, i] = gi.ravel()
    pts[:, j] = gj.ravel()
    return pts


def sensitivity_scan(state: MftState, T, i: int, j: int,
                     n_per_axis: int = 5, half_widths: float = 2.0,
                     step: float = 1e-4):
    """cross_time_sensitivity at every point of the default probe grid."""
    pts = sensitivity_probe_grid(state, T, i, j, n_per_axis, half_widths)
    return [cross_time_sensitivity(state, x, T, i, j, step) for x in pts]


@dataclass(frozen=True, eq=False)
class EprScanRow:
    sample: int
    t2: float
    branch: int
    w_max: float


@dataclass(frozen=True, eq=False)
class EprScanReport:
    rows: tuple
    flips: int
    n_samples: int
    t2_grid: tuple
    frequencies: tuple        # one (per-branch frequency tuple) per t2
    expected: tuple
    unclassified: tuple       # unclassified fraction per t2
    max_freq_deviation: float


def epr_timing_scan(state: MftState, t1_fixed: float, t2_grid, sample_set,
                    tau0: float = 0.0, step: float = 1e-3,
                    offsets=None) -> EprScanReport:
    """Branch classification of each sample at T = (t1_fixed, t2), per t2.

    sample_set holds initial configurations on the tau = tau0 slice of the
    scenario chart (`offsets`, zero by default). Each sample's beable evolves
    along that chart until particle 1's clock reads t1_fixed; the collapsed
    branch is the one whose posterior dominates there. The scan then asks
    whether that branch assignment survives re-synchronizing particle 2: the
    same beable configuration is scored against the branch posteriors at
    every (t1_fixed, t2). A sample whose classified branch differs between
    any two t2 values counts as one flip.
    """
    if state.n_particles != 2:
        raise ValueError("timing scan is defined for 2-particle states")
    X0 = np.asarray(sample_set, dtype=float)
    m = X0.shape[0]
    t2s = [float(t2) for t2 in t2_grid]
    off = np.zeros(2) if offsets is None else np.asarray(offsets, dtype=float)
    tau_star = t1_fixed - off[0]
    Xf, stalled = flow_ensemble(state, off, X0, tau0, tau_star, step)
    labels_by_t2 = []
    wmax_by_t2 = []
    for t2 in t2s:
        labels, wmax = classify_batch(state, Xf, np.array([t1_fixed, t2]))
        labels[stalled] = -1
        labels_by_t2.append(labels)
        wmax_by_t2.append(wmax)

    flips = 0
    for s in range(m):
        seen = {int(lab[s]) for lab in labels_by_t2 if lab[s] >= 0}
        if len(seen) > 1:
            flips += 1

    expected = expected_branch_probs(state)
    freqs = []
    unclass = []
    dev = 0.0
    for labels in labels_by_t2:
        f = np.array([np.mean(labels == a) for a in range(state.n_branches)])
        freqs.append(tuple(float(v) for v in f))
        unclass.append(float(np.mean(labels < 0)))
        dev = max(dev, float(np.abs(f - expected).max()))

    rows = []
    for k, t2 in enumerate(t2s):
        for s in range(m):
            rows.append(EprScanRow(sample=s, t2=t2,
                                   branch=int(labels_by_t2[k][s]),
                                   w_max=float(wmax_by_t2[k][s])))
    return EprScanReport(rows=tuple(rows), flips=flips, n_samples=m,
                         t2_grid=tuple(t2s), frequencies=tuple(freqs),
                         expected=tuple(float(v) for v in expected),
                         unclassified=tuple(unclass),
                         max_freq_deviation=dev)
