from dataclasses import replace

import numpy as np
import pytest

from pmpnmpc.diagnostics import (
    DiagnosticsConfig,
    diagnostics_config,
    estimate_lipschitz,
    lyapunov_v,
    report,
    spectral_norm,
    zeta,
)
from pmpnmpc.dynamics import make_linear
from pmpnmpc.exceptions import ConfigurationError, DiagnosticsUnavailableError
from pmpnmpc.hamiltonian import InputBox
from pmpnmpc.integrator import TimeGrid, Trajectory
from pmpnmpc.loop import NmpcConfig, run_closed_loop

CFG = NmpcConfig(sample_time=1e-4, horizon=1e-3, horizon_steps=20, duration=3e-3)


def _traj(spec, offset):
    grid = TimeGrid(0.0, 1e-3, 20)
    return Trajectory(grid, spec.reference.state(grid.times) + offset, np.zeros((21, 2)))


def test_v_examples(lv_spec):
    assert lyapunov_v(_traj(lv_spec, 0.0), lv_spec.reference) == 0.0
    v1 = lyapunov_v(_traj(lv_spec, np.array([3.0, 4.0])), lv_spec.reference)
    assert v1 == pytest.approx(25.0 * 1e-3, rel=1e-12)
    v2 = lyapunov_v(_traj(lv_spec, np.array([6.0, 8.0])), lv_spec.reference)
    assert v2 == pytest.approx(4 * v1, rel=1e-12)


@pytest.fixture(scope="module")
def run():
    from conftest import predator_prey_spec
    spec = predator_prey_spec()
    log = run_closed_loop([40.0, 40.0], spec, CFG)
    return spec, log


def test_decomposition_identity(run):
    spec, log = run
    rep = report(log, diagnostics_config(log, spec), spec)
    assert rep.identity_errors.shape == (len(log) - 1,)
    assert np.max(rep.identity_errors) <= 1e-9
    assert np.all(rep.v_sequence >= 0)


def test_zeta_recomputed_independently(run):
    spec, log = run
    k = 5
    t_next = log.predicted_times(k + 1)
    t_k = log.predicted_times(k)
    xi = lambda t, s: np.sum((s - spec.reference.state(t)) ** 2, axis=1)
    first = np.trapezoid(xi(t_next, log.predicted_states[k + 1]), t_next)
    second = np.trapezoid(xi(t_k[2:], log.predicted_states[k][2:]), t_k[2:])
    assert zeta(log, k, spec.reference) == pytest.approx(first - second, rel=1e-12)


def test_zeta_bound_flags_only_when_violated(run):
    spec, log = run
    dcfg = diagnostics_config(log, spec)
    rep = report(log, dcfg, spec)
    flagged = {k for k, name in rep.flags if name == "zeta_bound"}
    for k, z in enumerate(rep.zeta_sequence):
        assert (abs(z) > rep.zeta_bound) == (k in flagged)


def test_violations_are_reported_not_raised(run):
    spec, log = run
    tight = DiagnosticsConfig(lipschitz_estimate=0.0, terminal_bound=1e6, p_min=1e12)
    rep = report(log, tight, spec)
    assert not rep.ok
    assert any(name == "zeta_bound" for _, name in rep.flags)


def test_equilibrium_run_is_clean(eq_spec):
    log = run_closed_loop([1.0, 1.0], eq_spec, CFG)
    rep = report(log, diagnostics_config(log, eq_spec), eq_spec)
    assert np.all(rep.v_sequence == 0) and np.all(rep.zeta_sequence == 0)
    assert rep.ok


def test_missing_predictions(lv_spec):
    log = run_closed_loop([40.0, 40.0], lv_spec, replace(CFG, duration=3e-4), store_predictions=False)
    with pytest.raises(DiagnosticsUnavailableError):
        zeta(log, 0, lv_spec.reference)


def test_sample_time_must_align_with_prediction_grid(lv_spec):
    log = run_closed_loop([40.0, 40.0], lv_spec, NmpcConfig(1e-4, 1e-3, 7, 3e-4))
    with pytest.raises(ConfigurationError):
        zeta(log, 0, lv_spec.reference)


def test_spectral_norm_matches_svd(rng):
    mats = rng.normal(size=(30, 3, 3))
    np.testing.assert_allclose(spectral_norm(mats), np.linalg.norm(mats, 2, axis=(1, 2)), rtol=1e-6)


def test_lipschitz_of_linear_system():
    A = np.array([[0.5, 2.0], [-1.0, -3.0]])
    model = make_linear(A, np.eye(2))
    box = InputBox(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    gamma = estimate_lipschitz(model, box, (np.zeros(2), np.ones(2)), grid_points=5)
    assert gamma == pytest.approx(np.max(np.abs(np.linalg.eigvals(A.T @ A))) ** 0.5, rel=1e-2)


def test_lipschitz_of_zero_dynamics():
    model = make_linear(np.zeros((2, 2)), np.eye(2))
    box = InputBox(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    assert estimate_lipschitz(model, box, (np.zeros(2), np.ones(2)), grid_points=5) == 0.0


def test_lipschitz_grows_with_region(lv_spec):
    small = estimate_lipschitz(lv_spec.model, lv_spec.box, ([40, 40], [60, 60]), grid_points=11)
    large = estimate_lipschitz(lv_spec.model, lv_spec.box, ([20, 20], [160, 160]), grid_points=11)
    assert large >= small


def test_config_derived_from_run(run):
    spec, log = run
    dcfg = diagnostics_config(log, spec)
    assert dcfg.p_min == 10.0
    e = log.predicted_states[:, -1] - spec.reference.state(log.times + 1e-3)
    assert dcfg.terminal_bound == pytest.approx(np.max(10 * e[:, 0] ** 2 + 35 * e[:, 1] ** 2))
    with pytest.raises(ConfigurationError):
        DiagnosticsConfig(-1.0, 1.0, 1.0)
