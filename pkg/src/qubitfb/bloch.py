"""Qubit state representations restricted to the xz-plane of the Bloch sphere.

The target (ground) state sits at the south pole, ``(0, 0, -1)``. A state in
the xz-plane is described by its length ``a`` and the signed angle ``theta``
measured from the ground state toward ``+x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PLANE_TOL = 1e-9
NORM_TOL = 1e-9


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class BlochVector:
    ax: float
    ay: float
    az: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.ax * self.ax + self.ay * self.ay + self.az * self.az)

    def density_matrix(self) -> np.ndarray:
        """Return rho = (I + a.sigma)/2 as a 2x2 complex array."""
        return 0.5 * np.array(
            [[1.0 + self.az, self.ax - 1j * self.ay],
             [self.ax + 1j * self.ay, 1.0 - self.az]],
            dtype=complex,
        )

    @classmethod
    def from_density_matrix(cls, rho: np.ndarray) -> "BlochVector":
        return cls(
            2.0 * float(rho[1, 0].real),
            2.0 * float(rho[1, 0].imag),
            float((rho[0, 0] - rho[1, 1]).real),
        )


@dataclass(frozen=True)
class PolarState:
    a: float
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.a <= 1.0 + NORM_TOL):
            raise ValueError(f"Bloch length a={self.a!r} outside [0, 1]")
        if not -math.pi - 1e-12 < self.theta <= math.pi + 1e-12:
            raise ValueError(f"theta={self.theta!r} not wrapped into (-pi, pi]")

    @classmethod
    def make(cls, a: float, theta: float) -> "PolarState":
        """Build a state, clamping ``a`` into [0, 1] and wrapping ``theta``."""
        a = min(max(a, 0.0), 1.0)
        theta = wrap_angle(theta) if a > 0.0 else 0.0
        return cls(a, theta)


def to_polar(b: BlochVector) -> PolarState:
    if abs(b.ay) > PLANE_TOL:
        raise ValueError(f"state not in the xz-plane (ay={b.ay!r})")
    a = math.hypot(b.ax, b.az)
    if a > 1.0 + NORM_TOL:
        raise ValueError(f"|a|={a!r} exceeds 1")
    if a == 0.0:
        return PolarState(0.0, 0.0)
    return PolarState(min(a, 1.0), math.atan2(b.ax, -b.az))


def from_polar(p: PolarState) -> BlochVector:
    return BlochVector(p.a * math.sin(p.theta), 0.0, -p.a * math.cos(p.theta))


def rotate_to_xz(b: BlochVector, keep_sign: bool = False) -> BlochVector:
    """Rotate about z so that ``ay`` vanishes.

    By default the in-plane component lands on ``+x``. With ``keep_sign`` the
    sign of ``ax`` is carried over, which keeps the sign of ``theta`` intact
    for states that were in the xz-plane at the start of a step.
    """
    r = math.hypot(b.ax, b.ay)
    if keep_sign and b.ax < 0.0:
        r = -r
    return BlochVector(r, 0.0, b.az)


def error_probability(p: PolarState) -> float:
    """Probability of finding the qubit outside the ground state."""
    return 1.0 - 0.5 * (1.0 + p.a * math.cos(p.theta))


def excited_population(nT: float) -> float:
    """Thermal-equilibrium excited-state population nT/(1+2nT)."""
    if nT < 0:
        raise ValueError("nT must be non-negative")
    if math.isinf(nT):
        return 0.5
    return nT / (1.0 + 2.0 * nT)


def thermal_equilibrium(nT: float) -> PolarState:
    if nT < 0:
        raise ValueError("nT must be non-negative")
    if math.isinf(nT):
        return PolarState(0.0, 0.0)
    return PolarState(1.0 / (1.0 + 2.0 * nT), 0.0)
