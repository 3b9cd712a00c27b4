"""Finite-difference consistency checks on the evolved wave function.

Everything here differences *ratios* of Psi rather than raw values: a stencil
neighbour enters as r = Psi(shifted)/Psi(base) = exp(dlogmag) * exp(i dphase),
which is scale-free (no overflow in the tails) and immune to phase wrapping
because the phase difference is re-exponentiated instead of unwrapped. Stencil
steps are small enough that principal-value phase differences are exact where
a real difference is needed (|dS| << pi for the h used here).

Checked identities, all of which the closed-form evolution satisfies up to
O(h^2) stencil truncation:
  - per-slot Schroedinger equation in the slot's own time,
  - the Hamilton-Jacobi equation along the diagonal time direction, with the
    quantum potential term,
  - the continuity equation along the diagonal time direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wavefunction import (MftState, NODE_EPS, amplitude_batch, as_times,
                           density_batch, evolve_tables, grad2_batch,
                           pack_state, potential_values, velocity_batch)


def _ratio(base, shifted):
    """exp(L_shifted - L_base) elementwise from (logmag, phase) pairs."""
    lm0, ph0, _ = base
    lm1, ph1, _ = shifted
    return np.exp(lm1 - lm0) * np.exp(1j * (ph1 - ph0))


def _rel_ok(*evals):
    ok = np.ones_like(evals[0][2], dtype=bool)
    for e in evals:
        ok &= e[2] >= NODE_EPS
    return ok


def schrodinger_residual_batch(state: MftState, Xs, T, i: int,
                               hx: float = 1e-3, ht: float = 1e-3) -> np.ndarray:
    """| -(1/2m_i) d_i^2 Psi/Psi + V_i - i (d Psi/d t_i)/Psi | per sample.

    Central second difference in x_i and central first difference in t_i,
    both built from amplitude ratios. NaN where a stencil point hits a node.
    """
    ps = pack_state(state)
    t = as_times(T, ps.n)
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    ei = np.zeros(ps.n)
    ei[i] = 1.0

    base = amplitude_batch(state, Xs, t)
    xp = amplitude_batch(state, Xs + hx * ei, t)
    xm = amplitude_batch(state, Xs - hx * ei, t)
    tp = amplitude_batch(state, Xs, t + ht * ei)
    tm = amplitude_batch(state, Xs, t - ht * ei)

    lap = (_ratio(base, xp) - 2.0 + _ratio(base, xm)) / hx ** 2
    dt = (_ratio(base, tp) - _ratio(base, tm)) / (2.0 * ht)
    vloc = potential_values(state, Xs)[:, i]
    res = np.abs(-0.5 * ps.inv_mass[i] * lap + vloc - 1j * dt)
    res[~_rel_ok(base, xp, xm, tp, tm)] = np.nan
    return res


def hj_residual_batch(state: MftState, Xs, T,
                      hx: float = 1e-3, ht: float = 1e-3) -> np.ndarray:
    """Hamilton-Jacobi residual along the diagonal time direction.

    | sum_i (d_i S)^2/(2 m_i) + sum_i V_i + Q + sum_j dS/dt_j |. The spatial
    parts are analytic (log-derivative kernels); dS/dt_j is a central phase
    difference taken as the principal argument of the amplitude ratio.
    """
    ps = pack_state(state)
    t = as_times(T, ps.n)
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))

    gre, gim, hre, him, rel = grad2_batch(state, Xs, t)
    kin = 0.5 * np.sum(ps.inv_mass[None, :] * gim * gim, axis=1)
    pot = np.sum(potential_values(state, Xs), axis=1)
    lapR_over_R = hre + gim * gim
    Q = -0.5 * np.sum(ps.inv_mass[None, :] * lapR_over_R, axis=1)

    ok = rel >= NODE_EPS
    dSdT = np.zeros(Xs.shape[0])
    for j in range(ps.n):
        ej = np.zeros(ps.n)
        ej[j] = 1.0
        tp = amplitude_batch(state, Xs, t + ht * ej)
        tm = amplitude_batch(state, Xs, t - ht * ej)
        dphi = np.angle(np.exp(1j * (tp[1] - tm[1])))
        dSdT += dphi / (2.0 * ht)
        ok &= (tp[2] >= NODE_EPS) & (tm[2] >= NODE_EPS)

    res = np.abs(kin + pot + Q + dSdT)
    res[~ok] = np.nan
    return res


def continuity_residual_batch(state: MftState, Xs, T,
                              hx: float = 1e-3, ht: float = 1e-3) -> np.ndarray:
    """| (1/rho) d rho/dT + (1/rho) sum_i d_i (rho v_i) | per sample.

    Density ratios exp(2 dlogmag) keep everything relative to rho(X, T), so
    the residual is meaningful arbitrarily far into the tails.
    """
    ps = pack_state(state)
    t = as_times(T, ps.n)
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))

    base = amplitude_batch(state, Xs, t)
    ok = base[2] >= NODE_EPS

    drho_dT = np.zeros(Xs.shape[0])
    for j in range(ps.n):
        ej = np.zeros(ps.n)
        ej[j] = 1.0
        tp = amplitude_batch(state, Xs, t + ht * ej)
        tm = amplitude_batch(state, Xs, t - ht * ej)
        drho_dT += (np.exp(2.0 * (tp[0] - base[0]))
                    - np.exp(2.0 * (tm[0] - base[0]))) / (2.0 * ht)
        ok &= (tp[2] >= NODE_EPS) & (tm[2] >= NODE_EPS)

    div = np.zeros(Xs.shape[0])
    for i in range(ps.n):
        ei = np.zeros(ps.n)
        ei[i] = 1.0
        xp = amplitude_batch(state, Xs + hx * ei, t)
        xm = amplitude_batch(state, Xs - hx * ei, t)
        vp, rp = velocity_batch(state, Xs + hx * ei, t)
        vm, rm = velocity_batch(state, Xs - hx * ei, t)
        div += (np.exp(2.0 * (xp[0] - base[0])) * vp[:, i]
                - np.exp(2.0 * (xm[0] - base[0])) * vm[:, i]) / (2.0 * hx)
        ok &= (xp[2] >= NODE_EPS) & (xm[2] >= NODE_EPS)
        ok &= (rp >= NODE_EPS) & (rm >= NODE_EPS)

    res = np.abs(drho_dT + div)
    res[~ok] = np.nan
    return res


def schrodinger_residual(state, X, T, i, hx=1e-3, ht=1e-3) -> float:
    return float(schrodinger_residual_batch(state, X, T, i, hx, ht)[0])


def hj_continuity_residual(state, X, T, hx=1e-3, ht=1e-3):
    """(Hamilton-Jacobi, continuity) residual pair at one configuration."""
    hj = float(hj_residual_batch(state, X, T, hx, ht)[0])
    cont = float(continuity_residual_batch(state, X, T, hx, ht)[0])
    return hj, cont


def probe_points(state: MftState, T, half_widths: float = 2.0,
                 n_per_axis: int = 5) -> np.ndarray:
    """Probe configurations covering every branch at times T.

    Per branch, a cartesian grid of n_per_axis points per particle spanning
    center +- half_widths sigma at that particle's local time; the union over
    branches is returned, duplicates kept (harmless for max/mean reports).
    """
    ps = pack_state(state)
    t = as_times(T, ps.n)
    xi, pp, ar, ai, ph, lnn = evolve_tables(ps, t)
    sigma = np.sqrt(1.0 / (4.0 * ai))
    grids = []
    for a in range(ps.n_branches):
        axes = [np.linspace(xi[a, i] - half_widths * sigma[a, i],
                            xi[a, i] + half_widths * sigma[a, i], n_per_axis)
                for i in range(ps.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        grids.append(np.column_stack([g.ravel() for g in mesh]))
    return np.vstack(grids)


def random_probe_points(state: MftState, T, n: int, rng,
                        half_widths: float = 2.0,
                        node_floor: float = 1e-6) -> np.ndarray:
    """n random non-node probes at times T.

    Each point picks a branch uniformly and draws uniformly from that
    branch's center +- half_widths sigma box; draws landing within
    node_floor of an interference node are rejected and redrawn.
    """
    ps = pack_state(state)
    t = as_times(T, ps.n)
    xi, pp, ar, ai, ph, lnn = evolve_tables(ps, t)
    sigma = np.sqrt(1.0 / (4.0 * ai))
    out = np.empty((n, ps.n))
    filled = 0
    while filled < n:
        take = n - filled
        a = rng.integers(0, ps.n_branches, size=take)
        u = rng.uniform(-1.0, 1.0, size=(take, ps.n))
        pts = xi[a] + half_widths * sigma[a] * u
        _, _, rel = amplitude_batch(state, pts, t)
        good = pts[rel > node_floor]
        out[filled:filled + good.shape[0]] = good
        filled += good.shape[0]
    return out


@dataclass(frozen=True)
class ResidualSummary:
    max_schrodinger: float
    max_hj: float
    max_continuity: float
    n_probes: int
    n_dropped: int
    per_particle_max: tuple


def residual_report(state: MftState, times, hx=1e-3, ht=1e-3,
                    half_widths=2.0, n_per_axis=5,
                    probe_fn=None) -> ResidualSummary:
    """Worst-case residuals over probe points at each time vector in `times`.

    Probes come from the deterministic per-branch grid unless probe_fn(state,
    T) supplies them (e.g. random_probe_points with a seeded rng). Probes
    whose stencil touches a node are dropped and counted, never silently
    averaged in.
    """
    per_particle = [0.0] * state.n_particles
    worst_hj = 0.0
    worst_cont = 0.0
    n_probes = 0
    n_dropped = 0
    for T in times:
        if probe_fn is None:
            Xs = probe_points(state, T, half_widths, n_per_axis)
        else:
            Xs = probe_fn(state, T)
        n_probes += Xs.shape[0]
        cols = []
        for i in range(state.n_particles):
            r = schrodinger_residual_batch(state, Xs, T, i, hx, ht)
            cols.append(r)
            good = r[~np.isnan(r)]
            if good.size:
                per_particle[i] = max(per_particle[i], float(good.max()))
        hj = hj_residual_batch(state, Xs, T, hx, ht)
        cont = continuity_residual_batch(state, Xs, T, hx, ht)
        rows_bad = np.zeros(Xs.shape[0], dtype=bool)
        for r in cols + [hj, cont]:
            rows_bad |= np.isnan(r)
        n_dropped += int(rows_bad.sum())
        if (~rows_bad).any():
            worst_hj = max(worst_hj, float(np.nanmax(hj)))
            worst_cont = max(worst_cont, float(np.nanmax(cont)))
    return ResidualSummary(
        max_schrodinger=max(per_particle) if per_particle else 0.0,
        max_hj=worst_hj,
        max_continuity=worst_cont,
        n_probes=n_probes,
        n_dropped=n_dropped,
        per_particle_max=tuple(per_particle))
