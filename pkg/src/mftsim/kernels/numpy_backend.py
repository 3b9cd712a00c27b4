"""Pure-numpy kernels, vectorized across samples.

Branch and particle loops are explicit Python (they are tiny) so the
accumulation order matches the numba backend exactly; remaining differences
across backends are libm-vs-SIMD rounding in exp/log/cos/sin only.

Table layout shared by all kernels: arrays of shape (A, n) hold the Heller
parameters of branch a, particle i, already evolved to the evaluation times:
xi (centers), pp (momenta), ar/ai (Re A, Im A), ph (phases gamma), lnn
(per-factor log norms). lc/ca are log magnitude and argument of the branch
coefficients. X is (m, n): m configurations of n particles.

Complex sums are kept as explicit (re, im) pairs and the final division uses
the plain quotient formula, so both backends do the same arithmetic.
"""

from __future__ import annotations

import numpy as np


def eval_amp(X, xi, pp, ar, ai, ph, lnn, lc, ca):
    """Log-magnitude, phase and relative interference magnitude of Psi.

    Returns (logmag, phase, rel) with rel = |sum_a c_a exp(L_a - M)| where
    M = max_a (Re L_a + ln|c_a|). rel is ~1 away from nodes and -> 0 at them;
    callers compare it against the node threshold.
    """
    m, n = X.shape
    nb = xi.shape[0]
    lre = np.empty((nb, m))
    lim = np.empty((nb, m))
    for a in range(nb):
        re = np.full(m, lc[a])
        im = np.full(m, ca[a])
        for i in range(n):
            d = X[:, i] - xi[a, i]
            d2 = d * d
            re += lnn[a, i] - ai[a, i] * d2
            im += ar[a, i] * d2 + pp[a, i] * d + ph[a, i]
        lre[a] = re
        lim[a] = im
    mx = lre[0].copy()
    for a in range(1, nb):
        np.maximum(mx, lre[a], out=mx)
    sre = np.zeros(m)
    sim = np.zeros(m)
    for a in range(nb):
        w = np.exp(lre[a] - mx)
        sre += w * np.cos(lim[a])
        sim += w * np.sin(lim[a])
    rel = np.hypot(sre, sim)
    with np.errstate(divide="ignore"):
        logmag = mx + np.log(rel)
    phase = np.arctan2(sim, sre)
    return logmag, phase, rel


def _branch_terms(X, xi, pp, ar, ai, ph, lnn, lc, ca):
    """Per-branch (Re L + ln|c|, Im L + arg c) for all samples: (A, m) pairs."""
    m, n = X.shape
    nb = xi.shape[0]
    lre = np.empty((nb, m))
    lim = np.empty((nb, m))
    for a in range(nb):
        re = np.full(m, lc[a])
        im = np.full(m, ca[a])
        for i in range(n):
            d = X[:, i] - xi[a, i]
            d2 = d * d
            re += lnn[a, i] - ai[a, i] * d2
            im += ar[a, i] * d2 + pp[a, i] * d + ph[a, i]
        lre[a] = re
        lim[a] = im
    return lre, lim


def eval_vel(X, xi, pp, ar, ai, ph, lnn, lc, ca, inv_mass):
    """Guidance-law velocity v_i = Im(d_i Psi / Psi) / m_i for a batch.

    Returns (v, rel) with v of shape (m, n).
    """
    m, n = X.shape
    nb = xi.shape[0]
    lre, lim = _branch_terms(X, xi, pp, ar, ai, ph, lnn, lc, ca)
    mx = lre[0].copy()
    for a in range(1, nb):
        np.maximum(mx, lre[a], out=mx)
    den_re = np.zeros(m)
    den_im = np.zeros(m)
    num_re = np.zeros((m, n))
    num_im = np.zeros((m, n))
    for a in range(nb):
        w = np.exp(lre[a] - mx)
        wre = w * np.cos(lim[a])
        wim = w * np.sin(lim[a])
        den_re += wre
        den_im += wim
        for i in range(n):
            d = X[:, i] - xi[a, i]
            dre = -2.0 * ai[a, i] * d
            dim = 2.0 * ar[a, i] * d + pp[a, i]
            num_re[:, i] += wre * dre - wim * dim
            num_im[:, i] += wre * dim + wim * dre
    rel = np.hypot(den_re, den_im)
    d2 = den_re * den_re + den_im * den_im
    with np.errstate(divide="ignore", invalid="ignore"):
        v = ((num_im * den_re[:, None] - num_re * den_im[:, None]) / d2[:, None]
             * inv_mass[None, :])
    return v, rel


def eval_grad(X, xi, pp, ar, ai, ph, lnn, lc, ca):
    """First log-derivatives G_i = d_i Psi / Psi. Returns (gre, gim, rel)."""
    gre, gim, _, _, rel = eval_grad2(X, xi, pp, ar, ai, ph, lnn, lc, ca)
    return gre, gim, rel


def eval_grad2(X, xi, pp, ar, ai, ph, lnn, lc, ca):
    """G_i = d_i Psi / Psi and H_i = d_i^2 Psi / Psi for a batch.

    Returns (gre, gim, hre, him, rel), each derivative array (m, n).
    """
    m, n = X.shape
    nb = xi.shape[0]
    lre, lim = _branch_terms(X, xi, pp, ar, ai, ph, lnn, lc, ca)
    mx = lre[0].copy()
    for a in range(1, nb):
        np.maximum(mx, lre[a], out=mx)
    den_re = np.zeros(m)
    den_im = np.zeros(m)
    gnum_re = np.zeros((m, n))
    gnum_im = np.zeros((m, n))
    hnum_re = np.zeros((m, n))
    hnum_im = np.zeros((m, n))
    for a in range(nb):
        w = np.exp(lre[a] - mx)
        wre = w * np.cos(lim[a])
        wim = w * np.sin(lim[a])
        den_re += wre
        den_im += wim
        for i in range(n):
            d = X[:, i] - xi[a, i]
            dre = -2.0 * ai[a, i] * d
            dim = 2.0 * ar[a, i] * d + pp[a, i]
            # l'' + (l')^2 with l'' = 2iA
            tre = -2.0 * ai[a, i] + dre * dre - dim * dim
            tim = 2.0 * ar[a, i] + 2.0 * dre * dim
            gnum_re[:, i] += wre * dre - wim * dim
            gnum_im[:, i] += wre * dim + wim * dre
            hnum_re[:, i] += wre * tre - wim * tim
            hnum_im[:, i] += wre * tim + wim * tre
    rel = np.hypot(den_re, den_im)
    d2 = (den_re * den_re + den_im * den_im)[:, None]
    dr = den_re[:, None]
    di = den_im[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        gre = (gnum_re * dr + gnum_im * di) / d2
        gim = (gnum_im * dr - gnum_re * di) / d2
        hre = (hnum_re * dr + hnum_im * di) / d2
        him = (hnum_im * dr - hnum_re * di) / d2
    return gre, gim, hre, him, rel


def eval_branch_relog(X, xi, pp, ar, ai, lnn):
    """Re log Psi_a per branch, coefficients excluded. Returns (m, A)."""
    m, n = X.shape
    nb = xi.shape[0]
    out = np.empty((m, nb))
    for a in range(nb):
        re = np.zeros(m)
        for i in range(n):
            d = X[:, i] - xi[a, i]
            re += lnn[a, i] - ai[a, i] * d * d
        out[:, a] = re
    return out
