"""Independent reference computations at the 2x2 density-matrix level."""
import numpy as np
from scipy.linalg import expm

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)
LOWER = (SX - 1j * SY) / 2  # |ground><excited|, ground = (0, 1)


def rho_from_bloch(ax, ay, az):
    return 0.5 * (I2 + ax * SX + ay * SY + az * SZ)


def bloch_from_rho(rho):
    return np.array([np.trace(rho @ s).real for s in (SX, SY, SZ)])


def observable(alpha):
    return np.sin(alpha) * SX - np.cos(alpha) * SZ


def dissipator(c, rho):
    """D(c) = 2 c rho c^dag - c^dag c rho - rho c^dag c."""
    cd = c.conj().T
    return 2 * c @ rho @ cd - cd @ c @ rho - rho @ cd @ c


def thermal_rhs(rho, gamma, nT):
    return (gamma / 2) * (nT + 1) * dissipator(LOWER, rho) + (gamma / 2) * nT * dissipator(LOWER.conj().T, rho)


def matrix_sme_increment(rho, alpha, mu_signed, k, gamma, nT, dt, dW):
    """Euler-Maruyama increment of the conditional master equation (hbar = 1)."""
    s = observable(alpha)
    H = 0.5 * mu_signed * SY
    expect = np.trace(s @ rho).real
    comm = s @ rho - rho @ s
    drho = (-1j * (H @ rho - rho @ H) - k * (s @ comm - comm @ s) + thermal_rhs(rho, gamma, nT)) * dt
    drho += np.sqrt(2 * k) * (s @ rho + rho @ s - 2 * expect * rho) * dW
    return drho


def lindblad_superop(gamma, nT):
    """Generator acting on row-major vec(rho)."""
    basis = []
    for i in range(4):
        e = np.zeros(4, dtype=complex)
        e[i] = 1
        basis.append(thermal_rhs(e.reshape(2, 2), gamma, nT).reshape(4))
    return np.array(basis).T


def thermal_evolution(rho0, gamma, nT, t):
    L = lindblad_superop(gamma, nT)
    return (expm(L * t) @ rho0.reshape(4)).reshape(2, 2)


def kraus_measurement(rho, alpha, k, dt, dW):
    """Finite-step measurement map rho -> M rho M / tr, M = exp(4k y s_alpha)."""
    s = observable(alpha)
    y = np.trace(s @ rho).real * dt + dW / np.sqrt(8 * k)
    M = expm(4 * k * y * s)
    out = M @ rho @ M.conj().T
    return out / np.trace(out).real


def rotation(rho, psi):
    """Evolve under H = (mu/2) sy for a time with mu*t = psi."""
    U = expm(-0.5j * psi * SY)
    return U @ rho @ U.conj().T
