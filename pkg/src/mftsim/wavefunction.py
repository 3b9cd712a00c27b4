"""Multi-time wave functions built from Gaussian product branches.

A state is a superposition of A product branches; branch a assigns particle i
its own packet evolving in its own time t_i, and Psi(X, T) is evaluated by
exponent bookkeeping: each branch contributes a complex log

    L_a(X, T) = sum_i [ ln N_ai(t_i) + i (A_ai d^2 + p_ai d + gamma_ai) ]

with d = x_i - xi_ai(t_i). The kernels combine branches through a max-shifted
sum of exp(L_a - M), so magnitudes stay representable far into the tails.

Branches built from shifted/boosted copies of one packet are not orthogonal,
so physical normalization divides the coefficients by sqrt(c^dag O c) with O
the branch Gram matrix (a product of per-slot packet overlaps, constant in
every t_i by unitarity of the per-slot evolution).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import NodeError
from .packets import GaussianPacket, Potential, packet_overlap

NODE_EPS = 1e-12


@dataclass(frozen=True)
class Amplitude:
    """Psi value carried as (log magnitude, phase) to survive deep tails."""

    log_magnitude: float
    phase: float

    @property
    def value(self) -> complex:
        if self.log_magnitude == -math.inf:
            return 0.0 + 0.0j
        return cmath.exp(complex(self.log_magnitude, self.phase))


@dataclass(frozen=True)
class ProductState:
    """One branch: a product of per-particle packets, each in its own time."""

    packets: tuple

    def __post_init__(self):
        pk = tuple(self.packets)
        object.__setattr__(self, "packets", pk)
        if not pk:
            raise ValueError("product state needs at least one packet")
        for p in pk:
            if not isinstance(p, GaussianPacket):
                raise TypeError("packets must be GaussianPacket")

    def __len__(self):
        return len(self.packets)

    def __getitem__(self, i):
        return self.packets[i]

    def __iter__(self):
        return iter(self.packets)


@dataclass(frozen=True)
class MftState:
    """Superposition of product branches with fixed coefficients.

    branches[a][i] is the packet of particle i in branch a. Every branch must
    assign slot i the same mass and the same potential: the slot Hamiltonian
    is a property of the particle, not of the branch.
    """

    branches: tuple
    coefficients: tuple

    def __post_init__(self):
        branches = tuple(
            b if isinstance(b, ProductState) else ProductState(tuple(b))
            for b in self.branches)
        coeffs = tuple(complex(c) for c in self.coefficients)
        object.__setattr__(self, "branches", branches)
        object.__setattr__(self, "coefficients", coeffs)
        if not branches:
            raise ValueError("state needs at least one branch")
        n = len(branches[0])
        for b in branches:
            if len(b) != n:
                raise ValueError("all branches must have the same particle count")
        for i in range(n):
            masses = {b[i].mass for b in branches}
            if len(masses) > 1:
                raise ValueError(f"slot {i}: mass differs across branches")
            pots = {b[i].potential for b in branches}
            if len(pots) > 1:
                raise ValueError(f"slot {i}: potential differs across branches")
        if len(coeffs) != len(branches):
            raise ValueError("one coefficient per branch required")
        if all(c == 0 for c in coeffs):
            raise ValueError("coefficients must not all vanish")

    @property
    def n_particles(self) -> int:
        return len(self.branches[0])

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def masses(self) -> tuple:
        return tuple(p.mass for p in self.branches[0])


def gram_matrix(state: MftState) -> np.ndarray:
    """Branch Gram matrix O_ab = prod_i <psi_ai | psi_bi>, evaluated at t=0."""
    A = state.n_branches
    O = np.empty((A, A), dtype=complex)
    for a in range(A):
        for b in range(A):
            acc = 1.0 + 0.0j
            for i in range(state.n_particles):
                acc *= packet_overlap(state.branches[a][i], state.branches[b][i])
            O[a, b] = acc
    return O


@lru_cache(maxsize=128)
def effective_coefficients(state: MftState) -> np.ndarray:
    """Coefficients rescaled so the full state has unit physical norm."""
    c = np.asarray(state.coefficients, dtype=complex)
    O = gram_matrix(state)
    norm2 = float(np.real(np.conj(c) @ O @ c))
    if norm2 <= 0:
        raise ValueError("state has vanishing norm")
    return c / math.sqrt(norm2)


class PackedState:
    """Reference-time parameter tables of one state, ready for evolve_tables.

    All arrays are (A, n) float64 except the per-slot ones (n,) and the
    coefficient logs (A,). Coefficients enter the kernels as
    lc = ln|c_eff| and ca = arg c_eff.
    """

    __slots__ = ("xi0", "pp0", "ar0", "ai0", "ph0", "ref", "mass", "inv_mass",
                 "kind", "omega", "lc", "ca", "n", "n_branches")

    def __init__(self, state: MftState):
        A, n = state.n_branches, state.n_particles
        self.n, self.n_branches = n, A
        get = lambda f: np.array(
            [[f(state.branches[a][i]) for i in range(n)] for a in range(A)])
        self.xi0 = get(lambda p: p.center)
        self.pp0 = get(lambda p: p.momentum)
        self.ar0 = get(lambda p: p.width_param.real)
        self.ai0 = get(lambda p: p.width_param.imag)
        self.ph0 = get(lambda p: p.phase)
        self.ref = get(lambda p: p.ref_time)
        self.mass = np.array([p.mass for p in state.branches[0]])
        self.inv_mass = 1.0 / self.mass
        self.kind = np.array(
            [1 if p.potential.kind is Potential.HARMONIC else 0
             for p in state.branches[0]], dtype=np.int64)
        self.omega = np.array([p.potential.omega for p in state.branches[0]])
        c = effective_coefficients(state)
        mag = np.abs(c)
        with np.errstate(divide="ignore"):
            self.lc = np.log(mag)
        self.ca = np.arctan2(c.imag, c.real)


@lru_cache(maxsize=128)
def pack_state(state: MftState) -> PackedState:
    return PackedState(state)


def _continuous_arg_grid(u: np.ndarray, theta: np.ndarray) -> np.ndarray:
    # arg u tracked continuously from theta=0: exact pi-per-half-turn winding,
    # same construction as packets._continuous_arg but vectorized.
    alpha = np.arctan2(u.imag, u.real)
    mfl = np.floor(theta / np.pi)
    k = np.round(((mfl + 0.5) * np.pi - alpha) / (2.0 * np.pi))
    return alpha + 2.0 * np.pi * k


def evolve_tables(ps: PackedState, T: np.ndarray):
    """Heller parameters of every (branch, slot) at slot times T: six (A, n)
    arrays (xi, pp, ar, ai, ph, lnn) consumed directly by the kernels."""
    dt = T[None, :] - ps.ref
    m = ps.mass[None, :]
    a0 = ps.ar0 + 1j * ps.ai0
    harm = (ps.kind == 1)[None, :] & np.ones_like(dt, dtype=bool)

    # free columns
    uf = 1.0 + 2.0 * a0 * dt / m
    xif = ps.xi0 + ps.pp0 * dt / m
    af = a0 / uf
    phf = (ps.ph0 + ps.pp0 ** 2 * dt / (2.0 * m)
           - 0.5 * np.arctan2(uf.imag, uf.real))

    # harmonic columns (omega guarded so the dead lane stays finite)
    w = np.where(ps.kind == 1, ps.omega, 1.0)[None, :]
    th = w * dt
    cth, sth = np.cos(th), np.sin(th)
    xih = ps.xi0 * cth + ps.pp0 / (m * w) * sth
    pph = ps.pp0 * cth - m * w * ps.xi0 * sth
    q = 2.0 * a0 / (m * w)
    u = cth + q * sth
    udot = w * (-sth + q * cth)
    ah = m * udot / (2.0 * u)
    scl = 0.5 * (pph * xih - ps.pp0 * ps.xi0)
    phh = ps.ph0 + scl - 0.5 * _continuous_arg_grid(u, th)

    xi = np.where(harm, xih, xif)
    pp = np.where(harm, pph, ps.pp0)
    aa = np.where(harm, ah, af)
    ph = np.where(harm, phh, phf)
    ar = np.ascontiguousarray(aa.real)
    ai = np.ascontiguousarray(aa.imag)
    lnn = 0.25 * np.log(2.0 * ai / np.pi)
    return (np.ascontiguousarray(xi), np.ascontiguousarray(pp), ar, ai,
            np.ascontiguousarray(ph), np.ascontiguousarray(lnn))


def _as_batch(X, n: int) -> np.ndarray:
    Xs = np.atleast_2d(np.asarray(X, dtype=float))
    if Xs.shape[1] != n:
        raise ValueError(f"configuration needs {n} coordinates, got {Xs.shape[1]}")
    return np.ascontiguousarray(Xs)


def as_times(T, n: int) -> np.ndarray:
    """Coerce T to an (n,) float array; a scalar means all slots equal."""
    t = np.asarray(T, dtype=float)
    if t.ndim == 0:
        return np.full(n, float(t))
    if t.shape != (n,):
        raise ValueError(f"time vector needs {n} entries, got shape {t.shape}")
    return t


def _tables(state: MftState, T) -> tuple:
    ps = pack_state(state)
    t = as_times(T, ps.n)
    return ps, evolve_tables(ps, t)


def amplitude_batch(state: MftState, Xs, T):
    """(logmag, phase, rel) arrays over a batch of configurations."""
    ps, tb = _tables(state, T)
    Xb = _as_batch(Xs, ps.n)
    return kernels.eval_amp(Xb, *tb, ps.lc, ps.ca)


def evaluate_psi(state: MftState, X, T) -> Amplitude:
    """Psi at one configuration. Raises NodeError inside a node region."""
    logmag, phase, rel = amplitude_batch(state, X, T)
    if rel[0] < NODE_EPS:
        raise NodeError(
            f"interference node at X={np.asarray(X, float)}: "
            f"relative magnitude {rel[0]:.3e} < {NODE_EPS:.0e}",
            rel_magnitude=float(rel[0]), rel_threshold=NODE_EPS)
    return Amplitude(float(logmag[0]), float(phase[0]))


def density(state: MftState, X, T) -> float:
    """|Psi|^2 at one configuration; exactly 0.0 at a detected node."""
    logmag, _, rel = amplitude_batch(state, X, T)
    if rel[0] < NODE_EPS:
        return 0.0
    return float(np.exp(2.0 * logmag[0]))


def density_batch(state: MftState, Xs, T) -> np.ndarray:
    logmag, _, rel = amplitude_batch(state, Xs, T)
    out = np.exp(2.0 * logmag)
    out[rel < NODE_EPS] = 0.0
    return out


def velocity_batch(state: MftState, Xs, T):
    """Guidance velocities (m, n) and the node indicator rel (m,)."""
    ps, tb = _tables(state, T)
    Xb = _as_batch(Xs, ps.n)
    return kernels.eval_vel(Xb, *tb, ps.lc, ps.ca, ps.inv_mass)


def phase_gradient_all(state: MftState, X, T) -> np.ndarray:
    """grad S at one configuration, all components (S = Im log Psi)."""
    ps, tb = _tables(state, T)
    Xb = _as_batch(X, ps.n)
    gre, gim, rel = kernels.eval_grad(Xb, *tb, ps.lc, ps.ca)
    if rel[0] < NODE_EPS:
        raise NodeError("phase gradient undefined at a node",
                        rel_magnitude=float(rel[0]), rel_threshold=NODE_EPS)
    return gim[0].copy()


def phase_gradient(state: MftState, X, T, i: int) -> float:
    """grad_i S for particle i at one configuration. NodeError at nodes."""
    return float(phase_gradient_all(state, X, T)[i])


def grad2_batch(state: MftState, Xs, T):
    """(gre, gim, hre, him, rel) of log-derivatives over a batch."""
    ps, tb = _tables(state, T)
    Xb = _as_batch(Xs, ps.n)
    return kernels.eval_grad2(Xb, *tb, ps.lc, ps.ca)


def quantum_potential_batch(state: MftState, Xs, T) -> np.ndarray:
    """Q(X, T) = -sum_i (1/2m_i) (lap_i R)/R via the log-derivative identity
    (lap R)/R = Re(lap Psi/Psi) + (Im(grad Psi/Psi))^2."""
    ps = pack_state(state)
    gre, gim, hre, him, rel = grad2_batch(state, Xs, T)
    lapR_over_R = hre + gim * gim
    Q = -0.5 * np.sum(ps.inv_mass[None, :] * lapR_over_R, axis=1)
    Q[rel < NODE_EPS] = np.nan
    return Q


def quantum_potential(state: MftState, X, T) -> float:
    q = quantum_potential_batch(state, X, T)
    if np.isnan(q[0]):
        raise NodeError("quantum potential undefined at a node")
    return float(q[0])


def branch_log_weights(state: MftState, Xs, T) -> np.ndarray:
    """Unnormalized log weights 2 ln|c_a psi_a(X, T)| per sample: (m, A)."""
    ps = pack_state(state)
    t = as_times(T, ps.n)
    xi, pp, ar, ai, ph, lnn = evolve_tables(ps, t)
    Xb = _as_batch(Xs, ps.n)
    relog = kernels.eval_branch_relog(Xb, xi, pp, ar, ai, lnn)
    return 2.0 * (relog + ps.lc[None, :])


def state_fingerprint(state: MftState) -> str:
    """Short content hash of the state's defining parameters."""
    import hashlib

    ps = pack_state(state)
    h = hashlib.sha256()
    for arr in (ps.xi0, ps.pp0, ps.ar0, ps.ai0, ps.ph0, ps.ref, ps.mass,
                ps.omega, ps.lc, ps.ca):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    h.update(ps.kind.tobytes())
    return h.hexdigest()[:16]


def potential_values(state: MftState, Xs) -> np.ndarray:
    """Per-particle external potential V_i(x_i) over a batch: (m, n)."""
    ps = pack_state(state)
    Xb = _as_batch(Xs, ps.n)
    harm = (ps.kind == 1)[None, :]
    vh = 0.5 * ps.mass[None, :] * ps.omega[None, :] ** 2 * Xb ** 2
    return np.where(harm, vh, 0.0)


def potential_gradient(state: MftState, Xs) -> np.ndarray:
    """dV_i/dx_i over a batch: (m, n). Analytic, no differencing."""
    ps = pack_state(state)
    Xb = _as_batch(Xs, ps.n)
    harm = (ps.kind == 1)[None, :]
    return np.where(harm, ps.mass[None, :] * ps.omega[None, :] ** 2 * Xb, 0.0)
