"""Closed-form Gaussian wave packets (hbar = 1).

A packet is kept in Heller form

    psi(x, t) = (2 Im A / pi)^(1/4) exp( i [ A (x - xi)^2 + p (x - xi) + gamma ] )

with complex width parameter A (Im A > 0), real center xi, real momentum p and
real accumulated phase gamma. The prefactor ties the norm to A, so every
packet has unit L2 norm at every time by construction.

For potentials that are at most quadratic the Heller parameters obey
closed-form flows, so evolution to any time, forward or backward, is a
parameter update rather than a PDE solve. Both supported potentials reduce to
the same structure: with u(t) solving u'' = -omega^2 u, u(t0) = 1,
u'(t0) = 2 A0 / m,

    A(t)     = (m/2) u'(t) / u(t)
    gamma(t) = gamma0 + S_cl(t0 -> t) - arg u(t) / 2

where S_cl is the classical action along (xi, p) and arg u must be the branch
continuous along the evolution path (the Gouy / zero-point phase). Since
Im A > 0 the curve u(t) winds monotonically and crosses arg = k*pi exactly at
theta = omega (t - t0) = k*pi, which pins the winding number analytically; no
sampled unwrapping is involved.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from enum import Enum

__all__ = [
    "Potential",
    "PotentialSpec",
    "GaussianPacket",
    "evolve_packet",
    "packet_overlap",
]


class Potential(Enum):
    FREE = "free"
    HARMONIC = "harmonic"


@dataclass(frozen=True)
class PotentialSpec:
    """One-particle potential: V(x) = 0 or V(x) = m omega^2 x^2 / 2."""

    kind: Potential
    omega: float = 0.0

    def __post_init__(self):
        if self.kind is Potential.HARMONIC:
            if not self.omega > 0.0:
                raise ValueError(f"harmonic potential needs omega > 0, got {self.omega}")
        elif self.omega != 0.0:
            raise ValueError("free potential must have omega = 0")


@dataclass(frozen=True)
class GaussianPacket:
    """Heller Gaussian packet for one particle.

    width_param is A at ref_time; Im A > 0 is required and is preserved by
    evolution (Im A(t) = Im A0 / |u(t)|^2 > 0). phase is the real accumulated
    phase gamma at ref_time; the normalization prefactor is implied by A.
    """

    mass: float
    potential: PotentialSpec
    center: float
    momentum: float
    width_param: complex
    phase: float = 0.0
    ref_time: float = 0.0

    def __post_init__(self):
        if not self.mass > 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.width_param.imag > 0.0:
            raise ValueError(
                f"width_param needs Im A > 0, got {self.width_param}")

    @property
    def sigma(self) -> float:
        """Position spread: |psi|^2 has variance 1 / (4 Im A)."""
        return math.sqrt(1.0 / (4.0 * self.width_param.imag))


def _continuous_arg(u: complex, theta: float) -> float:
    """arg u(theta) on the branch continuous along the harmonic evolution.

    u(theta) = cos(theta) + q sin(theta) with Im q > 0 satisfies
    arg u(k*pi) = k*pi exactly and d(arg u)/d(theta) > 0, so the continuous
    argument lies in [m*pi, (m+1)*pi] for theta in the same interval. That
    fixes the 2*pi multiple of the principal value without tracking history.
    """
    alpha = math.atan2(u.imag, u.real)
    m = math.floor(theta / math.pi)
    k = round(((m + 0.5) * math.pi - alpha) / (2.0 * math.pi))
    return alpha + 2.0 * math.pi * k


def evolve_packet(packet: GaussianPacket, t: float) -> GaussianPacket:
    """Evolve all Heller parameters from ref_time to t (exact, any sign of dt)."""
    dt = t - packet.ref_time
    if dt == 0.0:
        return packet
    m = packet.mass
    a0 = complex(packet.width_param)
    xi0 = packet.center
    p0 = packet.momentum

    if packet.potential.kind is Potential.FREE:
        # u = 1 + 2 A0 dt / m stays off the negative real axis (Im u has the
        # sign of dt), so the principal arg is already the continuous one.
        u = 1.0 + 2.0 * a0 * dt / m
        xi = xi0 + p0 * dt / m
        p = p0
        a = a0 / u
        gamma = (packet.phase + p0 * p0 * dt / (2.0 * m)
                 - 0.5 * math.atan2(u.imag, u.real))
    else:
        omega = packet.potential.omega
        theta = omega * dt
        c = math.cos(theta)
        s = math.sin(theta)
        xi = xi0 * c + (p0 / (m * omega)) * s
        p = p0 * c - m * omega * xi0 * s
        q = 2.0 * a0 / (m * omega)
        u = c + q * s
        udot = omega * (-s + q * c)
        a = 0.5 * m * udot / u
        # S_cl = (p xi - p0 xi0)/2 integrates the Lagrangian exactly.
        gamma = (packet.phase + 0.5 * (p * xi - p0 * xi0)
                 - 0.5 * _continuous_arg(u, theta))
    return replace(packet, center=xi, momentum=p, width_param=a,
                   phase=gamma, ref_time=t)


def packet_overlap(a: GaussianPacket, b: GaussianPacket, t: float = 0.0) -> complex:
    """<psi_a | psi_b> with both packets evolved to the common time t.

    The value is independent of t when both packets share mass and potential
    (the evolution is the same unitary). Closed Gaussian integral; the square
    root is principal, which is safe because Re(alpha) = Im Aa + Im Ab > 0.
    """
    pa = evolve_packet(a, t)
    pb = evolve_packet(b, t)
    aa = complex(pa.width_param).conjugate()
    ab = complex(pb.width_param)
    na = (2.0 * pa.width_param.imag / math.pi) ** 0.25
    nb = (2.0 * pb.width_param.imag / math.pi) ** 0.25
    alpha = -1j * (ab - aa)
    beta = 2j * (aa * pa.center - ab * pb.center) + 1j * (pb.momentum - pa.momentum)
    delta = (1j * (ab * pb.center ** 2 - aa * pa.center ** 2)
             + 1j * (pa.momentum * pa.center - pb.momentum * pb.center)
             + 1j * (pb.phase - pa.phase))
    return na * nb * cmath.sqrt(math.pi / alpha) * cmath.exp(beta * beta / (4.0 * alpha) + delta)
