"""Reduced (theta, a) dynamics and the small-angle mean-square-angle model.

Itô's rule applied to the Bloch-form measurement equations gives, with
``x = alpha - theta``,

    dtheta = [-mu + 2k sin(2x)(3 - 2/a^2)] dt + sqrt(8k) sin(x)/a dW
    da     = 4k sin^2(x)(1/a - a) dt + sqrt(8k) cos(x)(1 - a^2) dW

``mu`` is the signed feedback speed. A single dW drives both. Thermal terms
are not part of the reduced model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bloch import PolarState

MIN_LENGTH = 1e-6


@dataclass(frozen=True)
class PolarDrift:
    dtheta_dt: float
    da_dt: float
    g_theta: float
    g_a: float


def polar_coefficients(p: PolarState, alpha: float, mu: float, k: float) -> PolarDrift:
    a = p.a
    if a <= MIN_LENGTH:
        raise ValueError(f"a={a!r} too small for the reduced model; integrate the full SME instead")
    x = alpha - p.theta
    s = math.sin(x)
    root = math.sqrt(8.0 * k)
    return PolarDrift(
        dtheta_dt=-mu + 2.0 * k * math.sin(2.0 * x) * (3.0 - 2.0 / (a * a)),
        da_dt=4.0 * k * s * s * (1.0 / a - a),
        g_theta=root * s / a,
        g_a=root * math.cos(x) * (1.0 - a * a),
    )


def expanded_coefficients(p: PolarState, alpha: float, mu: float, k: float) -> PolarDrift:
    """First-order expansion of :func:`polar_coefficients` in ``delta = 1 - a``."""
    d = 1.0 - p.a
    x = alpha - p.theta
    s = math.sin(x)
    root = math.sqrt(8.0 * k)
    return PolarDrift(
        dtheta_dt=-mu + 2.0 * k * math.sin(2.0 * x) * (1.0 - 4.0 * d),
        da_dt=8.0 * k * s * s * d,
        g_theta=root * s * (1.0 + d),
        g_a=2.0 * d * root * math.cos(x),
    )


def polar_step(p: PolarState, alpha: float, mu: float, k: float, dt: float, dW: float,
               scheme: str = "euler") -> PolarState:
    """Euler-Maruyama step of the reduced equations.

    A step through ``a = 0`` is reflected to ``(-a, theta + pi)``; ``a`` is
    clamped to 1.

    ``scheme="milstein"`` adds ``0.5 (g.grad) g (dW^2 - dt)`` with ``alpha``
    held fixed over the step.
    """
    c = polar_coefficients(p, alpha, mu, k)
    theta = p.theta + c.dtheta_dt * dt + c.g_theta * dW
    a = p.a + c.da_dt * dt + c.g_a * dW
    if scheme == "milstein":
        x = alpha - p.theta
        root = math.sqrt(8.0 * k)
        h = 0.5 * (dW * dW - dt)
        theta += h * (-c.g_theta * root * math.cos(x) / p.a - c.g_a * root * math.sin(x) / p.a**2)
        a += h * (c.g_theta * root * math.sin(x) * (1.0 - p.a**2) - 2.0 * p.a * c.g_a * root * math.cos(x))
    elif scheme != "euler":
        raise ValueError(f"unknown scheme {scheme!r}")
    if a < 0:
        # passing through the centre: (a, theta) and (-a, theta + pi) are the same state
        a, theta = -a, theta + math.pi
    return PolarState.make(a, theta)


def theta2_steady_state(c1: float, k: float, gamma: float, nT: float) -> float:
    """Steady mean-square angle of the small-angle model without feedback.

    ``c1`` follows the protocol orientation (``c1 = -1`` is aligned).
    """
    denom = gamma - 8.0 * k * c1 * (c1 + 1.0)
    if denom <= 0:
        raise ValueError(
            f"no steady state for c1={c1!r}: gamma - 8k c1 (c1+1) = {denom!r} <= 0"
        )
    return 4.0 * gamma * nT / denom


def theta2_moment_step(theta2: float, c1: float, omega: float, k: float, gamma: float, nT: float,
                       dt: float) -> float:
    """Advance the averaged small-angle equation for <theta^2> by one step.

    For ``omega > 0`` the ``<|theta|>`` term uses the Gaussian closure
    ``sqrt(2 <theta^2> / pi)``; only the ``omega = 0`` case is exact.
    """
    if theta2 < 0:
        raise ValueError("theta2 must be non-negative")
    abs_theta = math.sqrt(2.0 * theta2 / math.pi)
    rate = 4.0 * gamma * nT - 2.0 * omega * abs_theta + (8.0 * k * c1 * (c1 + 1.0) - gamma) * theta2
    return max(theta2 + rate * dt, 0.0)


def theta2_scan(c1_grid, k: float, gamma: float, nT: float) -> np.ndarray:
    """Steady mean-square angle over a grid of c1 (inf where unstable)."""
    out = np.empty(len(c1_grid))
    for i, c1 in enumerate(c1_grid):
        try:
            out[i] = theta2_steady_state(c1, k, gamma, nT)
        except ValueError:
            out[i] = np.inf
    return out
