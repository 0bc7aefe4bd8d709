"""Stochastic integration of the conditional qubit dynamics.

The default scheme is Euler-Maruyama; ``milstein`` adds the strong-order-1
measurement correction and ``kraus`` replaces the measurement update by its
positivity-preserving finite-step map with exact thermal relaxation. The state is carried as the Bloch vector ``(ax, az)`` in the xz-plane. One step
applies, in Bloch form,

* measurement of ``s_phi = sin(phi) sx - cos(phi) sz`` at strength ``k``::

      da = -4k (a - m (m.a)) dt + sqrt(8k) (m - (m.a) a) dW,  m = (sin phi, 0, -cos phi)

* thermal relaxation (deterministic; the bath is not monitored)::

      dax = -(gamma/2)(1+2nT) ax dt,  daz = -gamma(1+2nT)(az + 1/(1+2nT)) dt

* the feedback Hamiltonian ``(mu/2) sy`` as an exact rotation of the result
  by ``-mu*dt`` about y (``mu`` carries the sign of theta).

Measurement axes in the xz-plane and y-rotations never generate ``ay``, so the
z-rotation back to the plane is the identity here and is skipped in the
compiled loops; :func:`sme_step` still routes through
:func:`~qubitfb.bloch.rotate_to_xz`. Lengths overshooting 1 are rescaled to 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .bloch import BlochVector, PolarState, error_probability, from_polar, rotate_to_xz, to_polar, wrap_angle
from .params import SimParams
from .policy import KIND_ALIGNED, KIND_LAW, ControlPolicy

PATH_COLUMNS = ("t", "a", "theta", "alpha", "mu", "dy", "epsilon")

EULER, MILSTEIN, KRAUS = 0, 1, 2
SCHEMES = {"euler": EULER, "milstein": MILSTEIN, "kraus": KRAUS}

# acc columns: eps sum over first half of window, second half, theta^2 sum, a sum, az sum
N_ACC = 5

# fast-math without the no-NaN/no-Inf assumptions, so divergence checks survive
_FM = {"nsz", "arcp", "contract", "afn", "reassoc"}


class IntegrationError(FloatingPointError):
    """Raised when a step produces non-finite values."""

    def __init__(self, message, **context):
        super().__init__(message + "".join(f"; {k}={v!r}" for k, v in context.items()))
        self.context = context


@dataclass(frozen=True)
class MeasurementAxis:
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", wrap_angle(self.alpha))


@dataclass(frozen=True)
class StepResult:
    state: PolarState
    dy: float
    dW: float


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _drift_noise(x, z, s, c, k, gamma, nT, dt, dW):
    """Measurement and thermal Euler-Maruyama update; returns (x, z, <s_phi>)."""
    mx = s
    mz = -c
    ma = mx * x + mz * z
    g = math.sqrt(8.0 * k) * dW
    relax = gamma * (1.0 + 2.0 * nT)
    nx = x + (-4.0 * k * (x - mx * ma) - 0.5 * relax * x) * dt + g * (mx - ma * x)
    nz = z + (-4.0 * k * (z - mz * ma) - relax * z - gamma) * dt + g * (mz - ma * z)
    return nx, nz, ma


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _kraus_noise(x, z, s, c, k, dt, dW, ex, ez, zeq):
    """Measurement as the finite-step Kraus map exp(2k y s_phi) . exp(2k y s_phi),
    followed by the exact thermal relaxation; returns (x, z, <s_phi>).

    ``y = <s_phi> dt + dW/sqrt(8k)`` is the record increment. The map keeps
    the state inside the Bloch ball and pure states pure.
    """
    mx = s
    mz = -c
    ma = mx * x + mz * z
    lam = 4.0 * k * ma * dt + math.sqrt(2.0 * k) * dW
    e = math.exp(2.0 * lam)
    ch = 0.5 * (e + 1.0 / e)
    sh = 0.5 * (e - 1.0 / e)
    par = sh + ma * ch - ma
    inv = 1.0 / (ch + ma * sh)
    nx = (x + par * mx) * inv
    nz = (z + par * mz) * inv
    return nx * ex, zeq + (nz - zeq) * ez, ma


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _milstein(nx, nz, x, z, s, c, ma, k, dt, dW):
    """Add 0.5 (b.grad) b (dW^2 - dt), b = sqrt(8k)(m - (m.a) a), axis held fixed."""
    root = math.sqrt(8.0 * k)
    bx = root * (s - ma * x)
    bz = root * (-c - ma * z)
    mb = s * bx - c * bz
    h = 0.5 * root * (dW * dW - dt)
    return nx + h * (-mb * x - ma * bx), nz + h * (-mb * z - ma * bz)


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _thermal_factors(gamma, nT, dt):
    relax = gamma * (1.0 + 2.0 * nT)
    return math.exp(-0.5 * relax * dt), math.exp(-relax * dt), -1.0 / (1.0 + 2.0 * nT)


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _rotate(x, z, cp, sp):
    """Rotate by angle psi (given cos, sin) so that theta -> theta - psi."""
    return x * cp + z * sp, z * cp - x * sp


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _record(ma, k, dt, dW):
    """Measurement record increment dy; undefined (NaN) without measurement."""
    if k <= 0.0:
        return math.nan
    return ma * dt + dW / math.sqrt(8.0 * k)


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _raw_step(x, z, phi, mu, k, gamma, nT, dt, dW, scheme=EULER):
    s = math.sin(phi)
    c = math.cos(phi)
    if scheme == KRAUS:
        ex, ez, zeq = _thermal_factors(gamma, nT, dt)
        nx, nz, ma = _kraus_noise(x, z, s, c, k, dt, dW, ex, ez, zeq)
    else:
        nx, nz, ma = _drift_noise(x, z, s, c, k, gamma, nT, dt, dW)
    if scheme == MILSTEIN:
        nx, nz = _milstein(nx, nz, x, z, s, c, ma, k, dt, dW)
    if mu != 0.0:
        nx, nz = _rotate(nx, nz, math.cos(mu * dt), math.sin(mu * dt))
    return nx, nz, _record(ma, k, dt, dW)


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _clamp(x, z):
    r2 = x * x + z * z
    if r2 > 1.0:
        r = math.sqrt(r2)
        return x / r, z / r
    return x, z


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _theta(x, z):
    if x == 0.0 and z == 0.0:
        return 0.0
    return math.atan2(x, -z)


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _axis(th, kind, pdata):
    if kind == KIND_LAW:
        tp = -th
        side = 1.0 if tp >= 0.0 else -1.0
        return side * pdata[0] + tp * (pdata[1] + tp * (pdata[2] + tp * pdata[3]))
    if kind == KIND_ALIGNED:
        return th
    return pdata[4]


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _speed(th, omega, clamp, dt):
    if th == 0.0 or omega <= 0.0:
        return 0.0
    speed = omega
    if clamp and abs(th) < omega * dt:
        speed = abs(th) / dt
    return speed if th > 0.0 else -speed


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _controls(x, z, kind, pdata, dt):
    """Return (theta, axis angle, signed rotation speed) for the current state."""
    th = _theta(x, z)
    return th, _axis(th, kind, pdata), _speed(th, pdata[5], pdata[6] != 0.0, dt)


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _fast_step(x, z, th, kind, pdata, k, gamma, nT, dt, dW, cw, sw, scheme, therm):
    """Controlled step reusing precomputed cos/sin of omega*dt and thermal factors."""
    phi = _axis(th, kind, pdata)
    if scheme == KRAUS:
        nx, nz, ma = _kraus_noise(x, z, math.sin(phi), math.cos(phi), k, dt, dW,
                                  therm[0], therm[1], therm[2])
    else:
        sp_, cp_ = math.sin(phi), math.cos(phi)
        nx, nz, ma = _drift_noise(x, z, sp_, cp_, k, gamma, nT, dt, dW)
        if scheme == MILSTEIN:
            nx, nz = _milstein(nx, nz, x, z, sp_, cp_, ma, k, dt, dW)
    omega = pdata[5]
    if th != 0.0 and omega > 0.0:
        if pdata[6] != 0.0 and abs(th) < omega * dt:
            # rotation by exactly theta: cos/sin from the pre-step state
            a = math.sqrt(x * x + z * z)
            cp = -z / a
            sp = abs(x) / a
        else:
            cp = cw
            sp = sw
        if th < 0.0:
            sp = -sp
        nx, nz = _rotate(nx, nz, cp, sp)
    return nx, nz


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _accumulate(acc, i, x, z, th, rel, half):
    eps = 0.5 * (1.0 + z)
    if rel < half:
        acc[i, 0] += eps
    else:
        acc[i, 1] += eps
    acc[i, 2] += th * th
    acc[i, 3] += math.sqrt(x * x + z * z)
    acc[i, 4] += z


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _advance_block(x, z, noise, step0, burn, half, total, kind, pdata, k, gamma, nT, dt, acc, fail,
                   scheme=EULER):
    """Advance every trajectory of a block through one chunk of noise.

    ``noise`` holds standard normals, shape (n_traj, n_steps); its first column
    drives global step ``step0``. The state produced by step ``s`` enters the
    time average when ``burn <= s < total``, the first ``half`` such states in
    ``acc[:, 0]`` and the rest in ``acc[:, 1]``. Returns the index of the first
    trajectory that went non-finite, or -1.
    """
    sdt = math.sqrt(dt)
    cw = math.cos(pdata[5] * dt)
    sw = math.sin(pdata[5] * dt)
    therm = _thermal_factors(gamma, nT, dt)
    n, m = noise.shape
    for i in range(n):
        xi = x[i]
        zi = z[i]
        th = _theta(xi, zi)
        for j in range(m):
            step = step0 + j
            if step >= total:
                break
            xi, zi = _fast_step(xi, zi, th, kind, pdata, k, gamma, nT, dt, noise[i, j] * sdt, cw, sw,
                                scheme, therm)
            if not (math.isfinite(xi) and math.isfinite(zi)):
                fail[0] = step
                x[i] = xi
                z[i] = zi
                return i
            xi, zi = _clamp(xi, zi)
            th = _theta(xi, zi)
            if step >= burn:
                _accumulate(acc, i, xi, zi, th, step - burn, half)
        x[i] = xi
        z[i] = zi
    return -1


@nb.njit(cache=True, nogil=True, fastmath=_FM)
def _advance_path(x, z, noise, step0, stride, burn, kind, pdata, k, gamma, nT, dt, out, row0, acc,
                  scheme=EULER):
    """Single-trajectory variant that records every ``stride``-th step into ``out``.

    ``acc[0]`` accumulates the error probability over steps ``>= burn``.
    """
    sdt = math.sqrt(dt)
    row = row0
    for j in range(noise.shape[0]):
        step = step0 + j
        th, phi, mu = _controls(x, z, kind, pdata, dt)
        dW = noise[j] * sdt
        nx, nz, dy = _raw_step(x, z, phi, mu, k, gamma, nT, dt, dW, scheme)
        if not (math.isfinite(nx) and math.isfinite(nz)):
            return -(step + 1), x, z, row
        x, z = _clamp(nx, nz)
        if step >= burn:
            acc[0] += 0.5 * (1.0 + z)
        if (step + 1) % stride == 0 and row < out.shape[0]:
            a = math.sqrt(x * x + z * z)
            out[row, 0] = (step + 1) * dt
            out[row, 1] = a
            out[row, 2] = _theta(x, z)
            out[row, 3] = phi
            out[row, 4] = mu
            out[row, 5] = dy
            out[row, 6] = 0.5 * (1.0 + z)
            row += 1
    return 0, x, z, row


def expectation_sigma_alpha(p: PolarState, axis: MeasurementAxis) -> float:
    return p.a * math.cos(axis.alpha - p.theta)


def sme_step(p: PolarState, axis: MeasurementAxis, mu: float, params: SimParams, dW: float,
             scheme: str | None = None) -> StepResult:
    """One integration step from ``p`` with measurement ``axis`` and signed speed ``mu``.

    ``scheme="milstein"`` adds the strong-order-1 correction for the
    measurement noise (axis frozen over the step); ``scheme="kraus"`` uses the
    positivity-preserving measurement map with exact thermal relaxation.
    ``None`` takes ``params.scheme``.
    """
    scheme = params.scheme if scheme is None else scheme
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not math.isfinite(dW):
        raise ValueError(f"non-finite Wiener increment {dW!r}")
    if abs(mu) > params.omega * (1 + 1e-12):
        raise ValueError(f"|mu|={abs(mu)!r} exceeds omega={params.omega!r}")
    b = from_polar(p)
    x, z, dy = _raw_step(b.ax, b.az, axis.alpha, mu, params.k, params.gamma, params.nT, params.dt, dW,
                         SCHEMES[scheme])
    if not (math.isfinite(x) and math.isfinite(z)):
        raise IntegrationError("non-finite state after SME step", state=p, axis=axis.alpha, mu=mu, dW=dW)
    x, z = _clamp(x, z)
    b = rotate_to_xz(BlochVector(x, 0.0, z), keep_sign=True)
    return StepResult(to_polar(b), dy, dW)


def noise_chunks(rng: np.random.Generator, n_steps: int, chunk: int):
    """Yield standard-normal blocks whose concatenation is one stream of ``n_steps`` draws."""
    done = 0
    while done < n_steps:
        m = min(chunk, n_steps - done)
        yield done, rng.standard_normal(m)
        done += m


@dataclass
class TrajectorySummary:
    epsilon_mean: float
    final: PolarState
    n_steps: int
    path: np.ndarray | None = None

    def write_csv(self, path) -> None:
        if self.path is None:
            raise ValueError("trajectory was run without path recording")
        write_path_csv(path, self.path)


def simulate_trajectory(p0: PolarState, policy: ControlPolicy, params: SimParams,
                        rng: np.random.Generator, stride: int | None = None,
                        chunk: int = 1 << 14) -> TrajectorySummary:
    """Run one trajectory over ``t_burn + t_avg``.

    Returns the time average of the error probability over the averaging
    window and, with ``stride``, the decimated path (columns ``PATH_COLUMNS``).
    """
    if params.t_avg < 10 * params.dt:
        raise ValueError("t_avg must span at least 10 steps")
    kind, pdata = policy.encode(params.omega)
    b = from_polar(p0)
    total = params.burn_steps + params.avg_steps
    if stride is None:
        x = np.array([b.ax])
        z = np.array([b.az])
        acc = np.zeros((1, N_ACC))
        fail = np.zeros(1, dtype=np.int64)
        for start, normals in noise_chunks(rng, total, chunk):
            bad = _advance_block(x, z, normals[None, :], start, params.burn_steps,
                                 params.avg_steps // 2, total, kind, pdata,
                                 params.k, params.gamma, params.nT, params.dt, acc, fail,
                                 SCHEMES[params.scheme])
            if bad >= 0:
                raise IntegrationError("trajectory diverged", step=int(fail[0]), seed=params.seed)
        eps = (acc[0, 0] + acc[0, 1]) / params.avg_steps
        final = to_polar(BlochVector(float(x[0]), 0.0, float(z[0])))
        return TrajectorySummary(eps, final, total)

    if stride < 1:
        raise ValueError("stride must be >= 1")
    out = np.empty((total // stride + 1, len(PATH_COLUMNS)))
    out[0] = (0.0, p0.a, p0.theta, np.nan, np.nan, np.nan, error_probability(p0))
    row = 1
    x, z = b.ax, b.az
    acc = np.zeros(1)
    for start, normals in noise_chunks(rng, total, chunk):
        status, x, z, new_row = _advance_path(x, z, normals, start, stride, params.burn_steps, kind,
                                              pdata, params.k, params.gamma, params.nT, params.dt,
                                              out, row, acc, SCHEMES[params.scheme])
        if status < 0:
            raise IntegrationError("trajectory diverged", step=-status - 1, seed=params.seed)
        row = new_row
    out = out[:row]
    eps = float(acc[0]) / params.avg_steps
    final = to_polar(BlochVector(x, 0.0, z))
    return TrajectorySummary(eps, final, total, out)


def write_path_csv(path, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATH_COLUMNS)
        for r in rows:
            writer.writerow([f"{v:.17g}" for v in r])
