import csv
import math

import numpy as np
import pytest

from qubitfb.ensemble import (RESULT_COLUMNS, EnsembleEstimate, append_results, burn_in_heuristic,
                              error_curve, estimate_steady_error, paired_difference, result_row, run_ensemble,
                              trajectory_rng)
from qubitfb.params import ParamError, SimParams
from qubitfb.policy import ControlPolicy

FAST = SimParams(omega=10.0, dt=1e-3, t_burn=1.0, t_avg=2.0, seed=21)


def test_trajectory_streams_are_distinct_and_reproducible():
    a = trajectory_rng(5, 0).standard_normal(4)
    assert np.array_equal(a, trajectory_rng(5, 0).standard_normal(4))
    assert not np.array_equal(a, trajectory_rng(5, 1).standard_normal(4))
    assert not np.array_equal(a, trajectory_rng(6, 0).standard_normal(4))


def test_results_independent_of_workers_blocks_and_chunks():
    pol = ControlPolicy.published(10.0)
    ref = run_ensemble(FAST, pol, 37, workers=1)
    assert np.array_equal(ref, run_ensemble(FAST, pol, 37, workers=3, block=5))
    assert np.array_equal(ref, run_ensemble(FAST, pol, 37, workers=2, block=16, chunk=333))
    # a prefix of the ensemble is the smaller ensemble
    assert np.array_equal(ref[:10], run_ensemble(FAST, pol, 10, workers=1))


def test_estimate_fields():
    est = estimate_steady_error(FAST, ControlPolicy.published(10.0), 50)
    assert est.n_traj == 50 and est.seed == 21 and est.dt == FAST.dt
    assert 0 < est.epsilon_mean < 0.5
    assert est.std_error == pytest.approx(est.per_trajectory.std(ddof=1) / math.sqrt(50))
    assert math.isfinite(est.stationarity_z)
    assert -1 <= est.az_mean <= 0 and 0 < est.a_mean <= 1
    with pytest.raises(ValueError):
        estimate_steady_error(FAST, ControlPolicy.aligned(), 1)


def test_half_windows_combine_to_total():
    params = FAST.replace(t_avg=2.001)  # odd number of averaging steps
    samples = run_ensemble(params, ControlPolicy.published(10.0), 8)
    est = EnsembleEstimate.from_samples(samples, params)
    half = params.avg_steps // 2
    w = half / params.avg_steps
    assert est.epsilon_mean == pytest.approx(np.mean(w * samples[:, 0] + (1 - w) * samples[:, 1]))


def test_ensemble_matches_single_trajectory_runner():
    from qubitfb.bloch import thermal_equilibrium
    from qubitfb.sme import simulate_trajectory
    pol = ControlPolicy.published(10.0)
    samples = run_ensemble(FAST, pol, 3)
    est = EnsembleEstimate.from_samples(samples, FAST)
    for i in range(3):
        tr = simulate_trajectory(thermal_equilibrium(FAST.nT), pol, FAST, trajectory_rng(FAST.seed, i))
        assert est.per_trajectory[i] == pytest.approx(tr.epsilon_mean, rel=1e-12)


def test_paired_difference_reduces_variance():
    params = FAST.replace(t_avg=4.0)
    pair = paired_difference(params, ControlPolicy.law(0.0, -0.684), ControlPolicy.law(0.0, -0.634), 200)
    assert pair.std_error < 0.5 * pair.independent_std_error
    assert pair.difference == pytest.approx(pair.a.epsilon_mean - pair.b.epsilon_mean)
    same = paired_difference(params, ControlPolicy.aligned(), ControlPolicy.aligned(), 10)
    assert same.difference == 0.0 and same.std_error == 0.0


def test_burn_in_heuristic():
    p = SimParams(k=1.0, gamma=0.1, nT=0.1, omega=10.0)
    assert burn_in_heuristic(p) == pytest.approx(10 / 0.12)
    assert burn_in_heuristic(p.replace(gamma=10.0, dt=1e-3)) == pytest.approx(10.0)
    assert burn_in_heuristic(p.replace(gamma=0.0, omega=1.0)) == pytest.approx(5 * math.pi)
    assert burn_in_heuristic(p, override=3.0) == 3.0
    with pytest.raises(ValueError):
        burn_in_heuristic(SimParams(k=0.0, gamma=0.0, omega=0.0))


def test_error_curve_shape():
    t, mean, se = error_curve(FAST, ControlPolicy.published(10.0), 6, stride=100)
    assert t[0] == 0.0 and len(t) == len(mean) == len(se) == FAST.burn_steps // 100 + FAST.avg_steps // 100 + 1
    assert np.all(se >= 0)


def test_append_results_writes_header_once(tmp_path):
    est = estimate_steady_error(FAST, ControlPolicy.published(10.0), 4)
    row = result_row(FAST, ControlPolicy.published(10.0), est)
    path = tmp_path / "r.csv"
    append_results(path, [row])
    append_results(path, [row])
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert len(rows) == 3
    assert float(rows[1][RESULT_COLUMNS.index("epsilon_mean")]) == est.epsilon_mean


def test_param_validation_names_field():
    with pytest.raises(ParamError) as info:
        SimParams(dt=0.05, omega=10.0)
    assert info.value.field == "dt"
    with pytest.raises(ParamError) as info:
        SimParams(nT=-1.0)
    assert info.value.field == "nT"
    with pytest.raises(ParamError) as info:
        SimParams(scheme="rk4")
    assert info.value.field == "scheme"
    with pytest.raises(ParamError):
        SimParams(seed=-1)
    assert SimParams(t_burn=1.0, dt=1e-3).burn_steps == 1000


def test_half_window_estimates_agree_in_steady_state():
    params = SimParams(omega=10.0, dt=1e-3, t_burn=5.0, t_avg=10.0, seed=6, scheme="kraus")
    est = estimate_steady_error(params, ControlPolicy.published(10.0), 400)
    assert abs(est.stationarity_z) < 3
