import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qubitfb.bloch import PolarState, from_polar
from qubitfb.checks import theta2_fixed_point_gap
from qubitfb.policy import ControlPolicy
from qubitfb.polar import (expanded_coefficients, polar_coefficients, polar_step, theta2_moment_step,
                           theta2_scan, theta2_steady_state)
from qubitfb.sme import N_ACC, SCHEMES, _advance_block


def test_coefficients_worked_example():
    c = polar_coefficients(PolarState(1.0, 0.0), math.pi / 4, 0.0, 1.0)
    assert c.dtheta_dt == pytest.approx(2.0)
    assert c.g_theta == pytest.approx(2.0)
    assert c.da_dt == pytest.approx(0.0)
    assert c.g_a == pytest.approx(0.0)


def test_feedback_enters_theta_drift_only():
    base = polar_coefficients(PolarState(0.9, 0.2), 0.1, 0.0, 1.0)
    fb = polar_coefficients(PolarState(0.9, 0.2), 0.1, 7.0, 1.0)
    assert fb.dtheta_dt == pytest.approx(base.dtheta_dt - 7.0)
    assert (fb.da_dt, fb.g_theta, fb.g_a) == (base.da_dt, base.g_theta, base.g_a)


def test_rejects_centre():
    with pytest.raises(ValueError):
        polar_coefficients(PolarState(0.0, 0.0), 0.1, 0.0, 1.0)


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(1e-4, 1e-2))
def test_expansion_is_first_order_in_delta(theta, alpha, delta):
    p = PolarState(1.0 - delta, theta)
    exact = polar_coefficients(p, alpha, 0.0, 1.0)
    approx = expanded_coefficients(p, alpha, 0.0, 1.0)
    for name in ("dtheta_dt", "da_dt", "g_theta", "g_a"):
        assert abs(getattr(exact, name) - getattr(approx, name)) < 60 * delta**2


def _one_step_ensemble(p, alpha, dt, n, seed):
    b = from_polar(p)
    x = np.full(n, b.ax)
    z = np.full(n, b.az)
    noise = np.random.default_rng(seed).standard_normal((n, 1))
    kind, pdata = ControlPolicy.fixed(alpha, feedback=False).encode(0.0)
    _advance_block(x, z, noise, 0, 1, 1, 1, kind, pdata, 1.0, 0.0, 0.0, dt, np.zeros((n, N_ACC)),
                   np.zeros(1, dtype=np.int64), SCHEMES["euler"])
    dtheta = np.remainder(np.arctan2(x, -z) - p.theta + math.pi, 2 * math.pi) - math.pi
    da = np.hypot(x, z) - p.a
    return dtheta, da, noise[:, 0] * math.sqrt(dt)


@pytest.mark.parametrize("seed,a,theta,alpha", [(11, 0.8, 0.3, 0.9), (12, 0.6, -0.5, 0.2), (13, 0.95, 1.0, -0.4)])
def test_drift_matches_sme_finite_differences(seed, a, theta, alpha):
    dt, n = 1e-5, 10**6
    p = PolarState(a, theta)
    c = polar_coefficients(p, alpha, 0.0, 1.0)
    dtheta, da, dW = _one_step_ensemble(p, alpha, dt, n, seed)
    for inc, drift, g in ((dtheta, c.dtheta_dt, c.g_theta), (da, c.da_dt, c.g_a)):
        # g dW has mean zero exactly; removing it leaves the drift with far less noise
        est = (inc - g * dW) / dt
        se = est.std(ddof=1) / math.sqrt(n)
        assert abs(est.mean() - drift) < 3 * se
        slope = np.dot(inc, dW) / np.dot(dW, dW)
        assert slope == pytest.approx(g, rel=1e-2, abs=1e-3)


def test_polar_step_reflects_through_centre():
    p = PolarState(1e-3, 0.2)
    # alpha anti-aligned: g_a = -sqrt(8)(1 - a^2) pulls a through zero for dW > 0
    out = polar_step(p, 0.2 + math.pi, 0.0, 1.0, 1e-6, 0.01)
    assert out.a > 0
    assert math.remainder(out.theta - (0.2 + math.pi), 2 * math.pi) == pytest.approx(0.0, abs=0.05)


def test_polar_step_schemes():
    p = PolarState(0.9, 0.3)
    e = polar_step(p, 0.5, 0.0, 1.0, 1e-3, math.sqrt(1e-3))
    m = polar_step(p, 0.5, 0.0, 1.0, 1e-3, math.sqrt(1e-3), scheme="milstein")
    assert (e.a, e.theta) == pytest.approx((m.a, m.theta), abs=1e-14)
    with pytest.raises(ValueError):
        polar_step(p, 0.5, 0.0, 1.0, 1e-3, 0.0, scheme="heun")


def test_theta2_closed_form_value():
    assert theta2_steady_state(-0.5, 1.0, 0.1, 0.1) == pytest.approx(0.04 / 2.1)
    assert theta2_steady_state(-0.5, 1.0, 0.1, 0.1) == pytest.approx(0.019048, abs=5e-7)
    with pytest.raises(ValueError):
        theta2_steady_state(1.0, 1.0, 0.1, 0.1)


@given(st.floats(-1.0, 0.0))
def test_theta2_symmetry(c1):
    assert theta2_steady_state(c1, 1.0, 0.1, 0.1) == pytest.approx(theta2_steady_state(-1.0 - c1, 1.0, 0.1, 0.1))


def test_theta2_scan_argmin():
    grid = np.round(np.arange(-1.2, 0.2 + 5e-4, 1e-3), 6)
    values = theta2_scan(grid, 1.0, 0.1, 0.1)
    assert abs(grid[np.argmin(values)] + 0.5) <= 1e-3
    assert np.isinf(theta2_scan([1.0], 1.0, 0.1, 0.1)[0])


def test_theta2_moment_fixed_point():
    assert theta2_fixed_point_gap() <= 1e-12
    with pytest.raises(ValueError):
        theta2_moment_step(-1.0, -0.5, 0.0, 1.0, 0.1, 0.1, 1e-3)
    # feedback lowers the stationary value
    x = y = 0.0
    for _ in range(20000):
        x = theta2_moment_step(x, -0.5, 0.0, 1.0, 0.1, 0.1, 1e-2)
        y = theta2_moment_step(y, -0.5, 5.0, 1.0, 0.1, 0.1, 1e-2)
    assert y < x
