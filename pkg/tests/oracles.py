"""Independent reference implementations used only by the tests.

Nothing here shares code paths with the package: the PDE oracle is a
Crank-Nicolson grid propagator, the packet oracle integrates the Gaussian
parameter ODEs with mpmath at 60+ bits (no closed-form u(t), no winding
bookkeeping, no classical-action formula), and branch overlaps come from
mpmath quadrature rather than the Gaussian overlap closed form.
"""

import mpmath as mp
import numpy as np
from scipy.linalg import solve_banded

from mftsim.packets import Potential


def crank_nicolson(psi0, x, dt, n_steps, mass, v):
    """Propagate i psi_t = -psi_xx/(2m) + V psi on a fixed grid.

    Unconditionally stable, O(dt^2 + dx^2), hard-wall boundaries; keep the
    support several sigma away from the edges.
    """
    n = x.size
    dx = x[1] - x[0]
    k = 1.0 / (2.0 * mass * dx * dx)
    # H as a tridiagonal: diag 2k + V, off-diag -k
    diag = 2.0 * k + np.asarray(v, dtype=float)
    off = -k * np.ones(n - 1)
    a = 0.5j * dt
    # (1 + a H) psi' = (1 - a H) psi
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = a * off
    ab[1, :] = 1.0 + a * diag
    ab[2, :-1] = a * off
    psi = np.asarray(psi0, dtype=complex).copy()
    for _ in range(n_steps):
        rhs = (1.0 - a * diag) * psi
        rhs[:-1] -= a * off * psi[1:]
        rhs[1:] -= a * off * psi[:-1]
        psi = solve_banded((1, 1), ab, rhs)
    return psi


def _packet_ode_rhs(mass, omega2):
    def rhs(state):
        xi, p, A, g = state
        return (
            p / mass,
            -mass * omega2 * xi,
            -2 * A * A / mass - mass * omega2 / 2,
            p * p / (2 * mass) - mass * omega2 * xi * xi / 2 + 1j * A / mass,
        )
    return rhs


def mp_evolve_packet(packet, t_values, dps=30, step=mp.mpf("1e-3")):
    """High-precision (xi, p, A, gamma) at each requested time.

    Fixed-step complex RK4 on the Gaussian parameter ODEs
        xi' = p/m,  p' = -m w^2 xi,
        A' = -2A^2/m - m w^2/2,
        gamma' = p^2/2m - V(xi) + iA/m,
    starting from the packet's reference time. gamma(t) is complex here: its
    imaginary part carries the norm drift that the package keeps inside the
    (2 Im A / pi)^(1/4) prefactor instead.
    """
    with mp.workdps(dps):
        omega2 = (packet.potential.omega ** 2
                  if packet.potential.kind is Potential.HARMONIC else 0.0)
        rhs = _packet_ode_rhs(mp.mpf(packet.mass), mp.mpf(omega2))
        out = {}
        todo = sorted(set(float(t) for t in t_values),
                      key=lambda t: abs(t - packet.ref_time))
        state = (mp.mpf(packet.center), mp.mpf(packet.momentum),
                 mp.mpc(packet.width_param), mp.mpc(packet.phase))
        cur = mp.mpf(packet.ref_time)
        for t_target in todo:
            target = mp.mpf(t_target)
            span = target - cur
            if span != 0:
                n = max(1, int(mp.ceil(abs(span) / step)))
                h = span / n
                for _ in range(n):
                    k1 = rhs(state)
                    s2 = tuple(s + h / 2 * k for s, k in zip(state, k1))
                    k2 = rhs(s2)
                    s3 = tuple(s + h / 2 * k for s, k in zip(state, k2))
                    k3 = rhs(s3)
                    s4 = tuple(s + h * k for s, k in zip(state, k3))
                    k4 = rhs(s4)
                    state = tuple(
                        s + h / 6 * (a + 2 * b + 2 * c + d)
                        for s, a, b, c, d in zip(state, k1, k2, k3, k4))
                cur = target
            out[t_target] = state
        return out


def _packet_key(packet):
    return (packet.mass, packet.potential.kind, packet.potential.omega,
            packet.center, packet.momentum, packet.width_param,
            packet.phase, packet.ref_time)


def mp_packet_value(packet, x, t, dps=30, _cache={}):
    """psi(x, t) as an mpmath complex, from the ODE-integrated parameters."""
    key = (_packet_key(packet), float(t), dps)
    if key not in _cache:
        _cache[key] = mp_evolve_packet(packet, [t], dps=dps)[float(t)]
    xi, p, A, g = _cache[key]
    with mp.workdps(dps):
        n0 = (2 * mp.im(mp.mpc(packet.width_param)) / mp.pi) ** mp.mpf("0.25")
        d = mp.mpf(x) - xi
        return n0 * mp.exp(1j * (A * d * d + p * d + g))


def mp_state_value(state, X, T, dps=30):
    """Normalized superposition value via mpmath: packet ODE integration for
    each factor and quadrature (not the closed form) for the Gram matrix."""
    with mp.workdps(dps):
        A = state.n_branches
        n = state.n_particles
        vals = mp.matrix(A, 1)
        for a in range(A):
            prod = mp.mpc(1)
            for i in range(n):
                prod *= mp_packet_value(state.branches[a][i], X[i], T[i], dps)
            vals[a] = prod
        gram = mp.matrix(A, A)
        for a in range(A):
            for b in range(A):
                if b < a:
                    gram[a, b] = mp.conj(gram[b, a])
                    continue
                prod = mp.mpc(1)
                for i in range(n):
                    pa, pb = state.branches[a][i], state.branches[b][i]
                    f = (lambda x, pa=pa, pb=pb, t=T[i]:
                         mp.conj(mp_packet_value(pa, x, t, dps))
                         * mp_packet_value(pb, x, t, dps))
                    lo = min(pa.center, pb.center) - 30
                    hi = max(pa.center, pb.center) + 30
                    prod *= mp.quad(f, [lo, hi])
                gram[a, b] = prod
        c = mp.matrix([mp.mpc(cc) for cc in state.coefficients])
        norm2 = mp.mpf(0)
        total = mp.mpc(0)
        for a in range(A):
            total += c[a] * vals[a]
            for b in range(A):
                norm2 += mp.re(mp.conj(c[a]) * gram[a, b] * c[b])
        return total / mp.sqrt(norm2)


def packet_value_at_ref(packet, x):
    """psi(x) straight from the stored Heller parameters (valid only at the
    packet's own ref_time)."""
    d = np.asarray(x, dtype=float) - packet.center
    a = complex(packet.width_param)
    pref = (2.0 * a.imag / np.pi) ** 0.25
    return pref * np.exp(1j * (a * d * d + packet.momentum * d + packet.phase))


def free_packet_moments(packet, t):
    """(center, sigma) of |psi|^2 for a free Gaussian packet at time t.

    sigma0^2 = 1/(4 Im A0) at ref_time; the spreading law is the textbook
    sigma(t)^2 = sigma0^2 (1 + (dt / (2 m sigma0^2))^2) for Re A0 = 0.
    """
    if packet.width_param.real != 0.0:
        raise ValueError("moment formula frozen for Re A0 = 0 only")
    dt = t - packet.ref_time
    s0sq = 1.0 / (4.0 * packet.width_param.imag)
    center = packet.center + packet.momentum * dt / packet.mass
    ssq = s0sq * (1.0 + (dt / (2.0 * packet.mass * s0sq)) ** 2)
    return center, np.sqrt(ssq)


def coherent_packet_moments(packet, t):
    """(center, sigma) for a width-stationary harmonic packet at time t."""
    w = packet.potential.omega
    m = packet.mass
    if abs(packet.width_param - 0.5j * m * w) > 1e-12:
        raise ValueError("moment formula frozen for the coherent width only")
    dt = t - packet.ref_time
    center = (packet.center * np.cos(w * dt)
              + packet.momentum / (m * w) * np.sin(w * dt))
    return center, np.sqrt(1.0 / (2.0 * m * w))
