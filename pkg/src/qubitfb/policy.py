"""Feedback protocols: the measurement-angle law and the rotation-speed law.

Orientation convention
----------------------
The engine measures the observable ``sin(phi) sx - cos(phi) sz`` where ``phi``
is an axis angle in the same frame as ``theta``. Protocol laws
``alpha = c0 + c1*theta + ...`` are written for angles measured from the
ground state in the *opposite* rotational sense, so the engine axis is
``phi = alpha(-theta)``. In this orientation ``c1 = -1`` is the aligned
(eigenbasis) measurement and ``c1 < 0`` drags the state toward the target;
the published coefficients (c1 = -0.5 at omega = 0) are stable only in it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bloch import wrap_angle

KIND_LAW = 0
KIND_ALIGNED = 1
KIND_FIXED = 2


@dataclass(frozen=True)
class ProtocolCoefficients:
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite protocol coefficients {values}")
        if abs(self.c0) > math.pi + 1e-12:
            raise ValueError(f"|c0|={abs(self.c0)!r} exceeds pi")

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ProtocolCoefficients":
        padded = list(values) + [0.0] * (4 - len(values))
        return cls(*map(float, padded[:4]))


@dataclass(frozen=True)
class PublishedProtocol:
    """One row of fitted parameters for ``c1 = -A - B(1 - exp(-r omega/k))``."""

    A: float
    B: float
    r: float
    m: float = 0.0
    sigma: float = 0.0
    switch_ratio: float = 45.0
    gamma_table: float = 0.1

    def __post_init__(self):
        if min(self.A, self.B, self.r) <= 0:
            raise ValueError("A, B and r must be positive")
        if not 30.0 <= self.switch_ratio <= 60.0:
            raise ValueError(f"switch_ratio={self.switch_ratio!r} outside [30, 60]")


TABLE1 = {
    0.1: PublishedProtocol(A=0.500, B=0.186, r=0.476, m=0.002, sigma=0.007, gamma_table=0.1),
    0.2: PublishedProtocol(A=0.479, B=0.211, r=0.705, m=-0.005, sigma=0.011, gamma_table=0.2),
    0.3: PublishedProtocol(A=0.478, B=0.217, r=0.529, m=0.001, sigma=0.008, gamma_table=0.3),
}


def table_row(gamma_over_k: float) -> PublishedProtocol:
    """Look up fitted parameters for gamma/k. No interpolation between rows."""
    for key, row in TABLE1.items():
        if math.isclose(key, gamma_over_k, rel_tol=1e-9, abs_tol=1e-12):
            return row
    raise KeyError(
        f"no fitted parameters for gamma/k={gamma_over_k!r}; supply A, B, r "
        f"explicitly or run the optimizer (available rows: {sorted(TABLE1)})"
    )


def _sign(x: float) -> float:
    return (x > 0) - (x < 0)


def measurement_angle(theta: float, coeffs: ProtocolCoefficients) -> float:
    """Evaluate ``alpha = c0*s + c1*theta + c2*theta**2 + c3*theta**3``.

    ``s = sgn(theta)`` (``+1`` at zero) so that a right-angle offset tracks the
    side the Bloch vector is on.
    """
    side = 1.0 if theta >= 0 else -1.0
    alpha = side * coeffs.c0 + theta * (coeffs.c1 + theta * (coeffs.c2 + theta * coeffs.c3))
    return wrap_angle(alpha)


def axis_angle(theta: float, coeffs: ProtocolCoefficients) -> float:
    """Engine measurement axis for a state at ``theta`` under the law ``coeffs``."""
    return measurement_angle(-theta, coeffs)


def published_coefficients(omega: float, k: float, proto: PublishedProtocol) -> ProtocolCoefficients:
    if omega < 0 or k <= 0:
        raise ValueError("need omega >= 0 and k > 0")
    ratio = omega / k
    c0 = 0.0 if ratio < proto.switch_ratio else math.pi / 2
    c1 = -proto.A - proto.B * (1.0 - math.exp(-proto.r * ratio))
    return ProtocolCoefficients(c0, c1)


def feedback_rotation(theta: float, omega: float, dt: float, clamp: bool = True) -> float:
    """Signed rotation speed toward the target, never overshooting in one step."""
    if omega < 0 or dt <= 0:
        raise ValueError("need omega >= 0 and dt > 0")
    speed = min(omega, abs(theta) / dt) if clamp else omega
    return _sign(theta) * speed


@dataclass(frozen=True)
class ControlPolicy:
    """Maps the current angle to (measurement axis, rotation speed).

    ``kind`` is one of ``"law"`` (protocol coefficients), ``"aligned"``
    (measure in the eigenbasis, ``phi = theta``) or ``"fixed"`` (constant axis
    ``fixed_axis``). ``feedback=False`` switches the Hamiltonian off.
    """

    kind: str = "law"
    coeffs: ProtocolCoefficients = field(default_factory=ProtocolCoefficients)
    fixed_axis: float = 0.0
    feedback: bool = True
    clamp: bool = True

    def __post_init__(self):
        if self.kind not in ("law", "aligned", "fixed"):
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def law(cls, c0=0.0, c1=0.0, c2=0.0, c3=0.0, **kw) -> "ControlPolicy":
        return cls("law", ProtocolCoefficients(c0, c1, c2, c3), **kw)

    @classmethod
    def aligned(cls, **kw) -> "ControlPolicy":
        return cls("aligned", **kw)

    @classmethod
    def fixed(cls, axis: float, **kw) -> "ControlPolicy":
        return cls("fixed", fixed_axis=float(axis), **kw)

    @classmethod
    def published(cls, omega: float, k: float = 1.0, proto: PublishedProtocol | None = None,
                  **kw) -> "ControlPolicy":
        proto = proto if proto is not None else TABLE1[0.1]
        return cls("law", published_coefficients(omega, k, proto), **kw)

    def axis(self, theta: float) -> float:
        if self.kind == "aligned":
            return wrap_angle(theta)
        if self.kind == "fixed":
            return wrap_angle(self.fixed_axis)
        return axis_angle(theta, self.coeffs)

    def rotation(self, theta: float, omega: float, dt: float) -> float:
        if not self.feedback:
            return 0.0
        return feedback_rotation(theta, omega, dt, self.clamp)

    def controls(self, theta: float, omega: float, dt: float) -> tuple[float, float]:
        return self.axis(theta), self.rotation(theta, omega, dt)

    def encode(self, omega: float) -> tuple[int, np.ndarray]:
        """Flat numeric form consumed by the compiled integrator."""
        kind = {"law": KIND_LAW, "aligned": KIND_ALIGNED, "fixed": KIND_FIXED}[self.kind]
        data = np.array([
            *self.coeffs.as_array(),
            self.fixed_axis,
            omega if self.feedback else 0.0,
            1.0 if self.clamp else 0.0,
        ])
        return kind, data

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "c0": self.coeffs.c0, "c1": self.coeffs.c1,
            "c2": self.coeffs.c2, "c3": self.coeffs.c3,
            "fixed_axis": self.fixed_axis,
            "feedback": self.feedback, "clamp": self.clamp,
        }
