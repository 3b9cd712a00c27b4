"""Numba kernels: same contract as numpy_backend, explicit loops.

prange runs over samples; every sample writes disjoint output rows, so the
results are bitwise independent of the thread count. No fastmath: the
branch-then-particle accumulation order is part of the contract and fastmath
reassociation would break cross-backend agreement.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

_SIG_CACHE = dict(cache=True, parallel=True)


@njit(**_SIG_CACHE)
def eval_amp(X, xi, pp, ar, ai, ph, lnn, lc, ca):
    m, n = X.shape
    nb = xi.shape[0]
    logmag = np.empty(m)
    phase = np.empty(m)
    rel = np.empty(m)
    for s in prange(m):
        mx = -np.inf
        for a in range(nb):
            re = lc[a]
            for i in range(n):
                d = X[s, i] - xi[a, i]
                re += lnn[a, i] - ai[a, i] * d * d
            if re > mx:
                mx = re
        sre = 0.0
        sim = 0.0
        for a in range(nb):
            re = lc[a]
            im = ca[a]
            for i in range(n):
                d = X[s, i] - xi[a, i]
                d2 = d * d
                re += lnn[a, i] - ai[a, i] * d2
                im += ar[a, i] * d2 + pp[a, i] * d + ph[a, i]
            w = math.exp(re - mx)
            sre += w * math.cos(im)
            sim += w * math.sin(im)
        sab = math.hypot(sre, sim)
        rel[s] = sab
        if sab > 0.0:
            logmag[s] = mx + math.log(sab)
        else:
            logmag[s] = -np.inf
        phase[s] = math.atan2(sim, sre)
    return logmag, phase, rel


@njit(**_SIG_CACHE)
def eval_vel(X, xi, pp, ar, ai, ph, lnn, lc, ca, inv_mass):
    m, n = X.shape
    nb = xi.shape[0]
    v = np.empty((m, n))
    rel = np.empty(m)
    num_re = np.zeros((m, n))
    num_im = np.zeros((m, n))
    for s in prange(m):
        mx = -np.inf
        for a in range(nb):
            re = lc[a]
            for i in range(n):
                d = X[s, i] - xi[a, i]
                re += lnn[a, i] - ai[a, i] * d * d
            if re > mx:
                mx = re
        den_re = 0.0
        den_im = 0.0
        for a in range(nb):
            re = lc[a]
            im = ca[a]
            for i in range(n):
                d = X[s, i] - xi[a, i]
                d2 = d * d
                re += lnn[a, i] - ai[a, i] * d2
                im += ar[a, i] * d2 + pp[a, i] * d + ph[a, i]
            w = math.exp(re - mx)
            wre = w * math.cos(im)
            wim = w * math.sin(im)
            den_re += wre
            den_im += wim
            for i in range(n):
                d = X[s, i] - xi[a, i]
                dre = -2.0 * ai[a, i] * d
                dim = 2.0 * ar[a, i] * d + pp[a, i]
                num_re[s, i] += wre * dre - wim * dim
                num_im[s, i] += wre * dim + wim * dre
        rel[s] = math.hypot(den_re, den_im)
        d2 = den_re * den_re + den_im * den_im
        for i in range(n):
            v[s, i] = ((num_im[s, i] * den_re - num_re[s, i] * den_im) / d2
                       * inv_mass[i])
    return v, rel


@njit(**_SIG_CACHE)
def eval_grad2(X, xi, pp, ar, ai, ph, lnn, lc, ca):
    m, n = X.shape
    nb = xi.shape[0]
    gre = np.empty((m, n))
    gim = np.empty((m, n))
    hre = np.empty((m, n))
    him = np.empty((m, n))
    rel = np.empty(m)
    gnum_re = np.zeros((m, n))
    gnum_im = np.zeros((m, n))
    hnum_re = np.zeros((m, n))
    hnum_im = np.zeros((m, n))
    for s in prange(m):
        mx = -np.inf
        for a in range(nb):
            re = lc[a]
            for i in range(n):
                d = X[s, i] - xi[a, i]
                re += lnn[a, i] - ai[a, i] * d * d
            if re > mx:
                mx = re
        den_re = 0.0
        den_im = 0.0
        for a in range(nb):
            re = lc[a]
            im = ca[a]
            for i in range(n):
                d = X[s, i] - xi[a, i]
                d2 = d * d
                re += lnn[a, i] - ai[a, i] * d2
                im += ar[a, i] * d2 + pp[a, i] * d + ph[a, i]
            w = math.exp(re - mx)
            wre = w * math.cos(im)
            wim = w * math.sin(im)
            den_re += wre
            den_im += wim
            for i in range(n):
                d = X[s, i] - xi[a, i]
                dre = -2.0 * ai[a, i] * d
                dim = 2.0 * ar[a, i] * d + pp[a, i]
                tre = -2.0 * ai[a, i] + dre * dre - dim * dim
                tim = 2.0 * ar[a, i] + 2.0 * dre * dim
                gnum_re[s, i] += wre * dre - wim * dim
                gnum_im[s, i] += wre * dim + wim * dre
                hnum_re[s, i] += wre * tre - wim * tim
                hnum_im[s, i] += wre * tim + wim * tre
        rel[s] = math.hypot(den_re, den_im)
        d2 = den_re * den_re + den_im * den_im
        for i in range(n):
            gre[s, i] = (gnum_re[s, i] * den_re + gnum_im[s, i] * den_im) / d2
            gim[s, i] = (gnum_im[s, i] * den_re - gnum_re[s, i] * den_im) / d2
            hre[s, i] = (hnum_re[s, i] * den_re + hnum_im[s, i] * den_im) / d2
            him[s, i] = (hnum_im[s, i] * den_re - hnum_re[s, i] * den_im) / d2
    return gre, gim, hre, him, rel


def eval_grad(X, xi, pp, ar, ai, ph, lnn, lc, ca):
    gre, gim, _, _, rel = eval_grad2(X, xi, pp, ar, ai, ph, lnn, lc, ca)
    return gre, gim, rel


@njit(**_SIG_CACHE)
def eval_branch_relog(X, xi, pp, ar, ai, lnn):
    m, n = X.shape
    nb = xi.shape[0]
    out = np.empty((m, nb))
    for s in prange(m):
        for a in range(nb):
            re = 0.0
            for i in range(n):
                d = X[s, i] - xi[a, i]
                re += lnn[a, i] - ai[a, i] * d * d
            out[s, a] = re
    return out
