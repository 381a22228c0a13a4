import numpy as np
import pytest

from pmpnmpc.exceptions import ConfigurationError, IntegrationBlowupError
from pmpnmpc.integrator import TimeGrid, integrate, integrate_coupled_forward, propagate_plant
from pmpnmpc.verify import rk4_order


def test_constant_solution_for_zero_rhs():
    y = integrate(lambda t, v: np.zeros_like(v), np.array([3.0, -1.0]), TimeGrid(0.0, 2.0, 7))
    assert y.shape == (8, 2)
    np.testing.assert_array_equal(y, np.tile([3.0, -1.0], (8, 1)))


def test_exponential_decay_accuracy():
    y = integrate(lambda t, v: -v, np.array([1.0]), TimeGrid(0.0, 1.0, 100))
    assert y[0, 0] == 1.0
    assert abs(y[-1, 0] - np.exp(-1.0)) <= 1e-8


def test_halving_step_reduces_error_sixteenfold():
    err = [abs(integrate(lambda t, v: -v, np.array([1.0]), TimeGrid(0.0, 1.0, m))[-1, 0] - np.exp(-1)) for m in (20, 40)]
    assert 14.0 < err[0] / err[1] < 18.0


def test_empirical_order():
    assert 3.8 <= rk4_order() <= 4.2


def test_time_dependent_rhs():
    y = integrate(lambda t, v: np.array([np.cos(t)]), np.array([0.0]), TimeGrid(0.0, 1.0, 50))
    assert abs(y[-1, 0] - np.sin(1.0)) < 1e-9


def test_blowup_reports_node():
    with pytest.raises(IntegrationBlowupError) as info, np.errstate(over="ignore", invalid="ignore"):
        integrate(lambda t, v: v * v, np.array([1.0]), TimeGrid(0.0, 5.0, 50))
    assert info.value.node >= 1


@pytest.mark.parametrize("args", [(1.0, 1.0, 5), (0.0, 1.0, 0), (0.0, 1.0, 2.5), (0.0, np.inf, 3)])
def test_invalid_grids(args):
    with pytest.raises(ConfigurationError):
        TimeGrid(*args)


def test_coupled_equilibrium_fixed_point(eq_spec):
    traj = integrate_coupled_forward([1.0, 1.0], [0.0, 0.0], TimeGrid(0.0, 1e-3, 20), eq_spec)
    assert np.max(np.abs(traj.states - 1.0)) <= 1e-12
    assert np.max(np.abs(traj.costates)) <= 1e-12
    assert np.max(np.abs(traj.inputs)) <= 1e-12


def test_zero_costate_gives_zero_first_input(lv_spec):
    traj = integrate_coupled_forward([40.0, 40.0], [0.0, 0.0], TimeGrid(0.0, 1e-3, 20), lv_spec)
    np.testing.assert_array_equal(traj.inputs[0], [0.0, 0.0])


def test_coupled_step_halving_oracle(lv_spec):
    lam0 = np.array([-300.0, 50.0])
    coarse = integrate_coupled_forward([40.0, 40.0], lam0, TimeGrid(0.0, 1e-3, 20), lv_spec)
    fine = integrate_coupled_forward([40.0, 40.0], lam0, TimeGrid(0.0, 1e-3, 40), lv_spec)
    y_c = np.concatenate([coarse.states[-1], coarse.costates[-1]])
    y_f = np.concatenate([fine.states[-1], fine.costates[-1]])
    assert np.linalg.norm(y_c - y_f) <= 1e-6 * np.linalg.norm(y_f)


def test_batched_integration_matches_members(lv_spec, rng):
    lam = rng.normal(scale=200, size=(3, 2))
    grid = TimeGrid(0.0, 1e-3, 10)
    batch = integrate_coupled_forward([40.0, 40.0], lam, grid, lv_spec)
    for i in range(3):
        single = integrate_coupled_forward([40.0, 40.0], lam[i], grid, lv_spec)
        np.testing.assert_allclose(batch.select(i).states, single.states, rtol=1e-14)
        np.testing.assert_allclose(batch.select(i).costates, single.costates, rtol=1e-14)


def test_inputs_stay_in_box(lv_spec):
    traj = integrate_coupled_forward([40.0, 40.0], [-5000.0, -5000.0], TimeGrid(0.0, 1e-3, 20), lv_spec)
    assert np.all(traj.inputs <= lv_spec.box.u_max) and np.all(traj.inputs >= lv_spec.box.u_min)


def test_plant_at_equilibrium_stays_put(lv_spec):
    np.testing.assert_array_equal(propagate_plant([1.0, 1.0], [0.0, 0.0], 0.1, lv_spec.model), [1.0, 1.0])


def test_plant_matches_integrate_with_held_input(lv_spec):
    model = lv_spec.model
    u = np.array([1.5, -2.0])
    direct = integrate(lambda t, y: model.rhs(y, u), np.array([40.0, 30.0]), TimeGrid(0.0, 1e-3, 4))[-1]
    np.testing.assert_array_equal(propagate_plant([40.0, 30.0], u, 1e-3, model, 4), direct)


def test_plant_small_step_consistency(lv_spec):
    x = np.array([40.0, 30.0])
    u = np.array([1.0, 1.0])
    dt = 1e-6
    speed = np.linalg.norm(lv_spec.model.rhs(x, u))
    assert np.linalg.norm(propagate_plant(x, u, dt, lv_spec.model) - x) <= dt * speed * (1 + 1e-3)
    with pytest.raises(ConfigurationError):
        propagate_plant(x, u, 0.0, lv_spec.model)


def test_integration_is_deterministic(lv_spec):
    a = integrate_coupled_forward([40.0, 40.0], [-300.0, 20.0], TimeGrid(0.0, 1e-3, 20), lv_spec)
    b = integrate_coupled_forward([40.0, 40.0], [-300.0, 20.0], TimeGrid(0.0, 1e-3, 20), lv_spec)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.costates, b.costates)
