import numpy as np
import pytest

from pmpnmpc.exceptions import ConfigurationError
from pmpnmpc.hamiltonian import (
    CostWeights,
    InputBox,
    OcpSpec,
    circle_reference,
    costate_rhs,
    disk_exclusion,
    hamiltonian_value,
    penalty_gradient,
    penalty_value,
    running_cost,
    saturated_control,
    terminal_cost,
    terminal_costate,
    total_cost,
    tracking_error,
    unconstrained_control,
)
from pmpnmpc.integrator import TimeGrid, Trajectory, integrate_coupled_forward
from pmpnmpc.shooting import solve
from pmpnmpc.verify import check_costate_fd, check_hamiltonian_argmin, check_stationarity

from conftest import predator_prey_spec


def test_tracking_error_sign_and_value(lv_spec):
    np.testing.assert_allclose(tracking_error([40.0, 40.0], 0.0, lv_spec.reference), [-70.0, -10.0])
    ref = lv_spec.reference.state(0.3)
    np.testing.assert_array_equal(tracking_error(ref, 0.3, lv_spec.reference), [0.0, 0.0])


def test_running_cost_examples():
    spec = predator_prey_spec(penalties=False)
    x = spec.reference.state(0.0) + 1.0
    assert running_cost(x, [0.0, 0.0], 0.0, spec) == pytest.approx(45.0, rel=1e-12)
    assert running_cost(spec.reference.state(1.0), [0.0, 0.0], 1.0, spec) == 0.0


def test_penalty_peak_and_zero_gradient_on_the_boundary():
    pen = disk_exclusion([100.0, 51.5], 5.0, 1e6, 1.0)
    on_boundary = np.array([105.0, 51.5])
    assert pen.constraint(on_boundary) == pytest.approx(0.0, abs=1e-12)
    assert penalty_value(on_boundary, pen) == pytest.approx(1e6, rel=1e-12)
    np.testing.assert_allclose(penalty_gradient(on_boundary, pen), [0.0, 0.0], atol=1e-5)


def test_penalty_gradient_matches_finite_differences(rng):
    pen = disk_exclusion([100.0, 51.5], 5.0, 1e6, 1.0)
    angles = rng.uniform(0, 2 * np.pi, 50)
    radii = 5.0 + rng.uniform(-2.9, 2.9, 50)
    x = np.stack([100 + radii * np.cos(angles), 51.5 + radii * np.sin(angles)], axis=1)
    grad = penalty_gradient(x, pen)
    h = 1e-6
    fd = np.stack([(penalty_value(x + h * e, pen) - penalty_value(x - h * e, pen)) / (2 * h) for e in np.eye(2)], 1)
    assert np.max(np.linalg.norm(grad - fd, axis=1) / np.maximum(np.linalg.norm(fd, axis=1), 1.0)) <= 1e-5


def test_hamiltonian_vanishes_at_equilibrium(eq_spec):
    assert hamiltonian_value([1.0, 1.0], [0.0, 0.0], [0.0, 0.0], 0.0, eq_spec) == 0.0
    no_state_weight = OcpSpec(eq_spec.model, CostWeights([0.0, 0.0], [500.0, 500.0], [1.0, 1.0]), eq_spec.box,
                              eq_spec.reference, eq_spec.horizon)
    assert hamiltonian_value([1.0, 1.0], [0.0, 0.0], [1.0, 0.0], 0.0, no_state_weight) == 0.0


def test_hamiltonian_is_convex_in_the_input(lv_spec, rng):
    x = rng.uniform(20, 160, size=(100, 2))
    lam = rng.normal(scale=300, size=(100, 2))
    t = rng.uniform(0, 6, 100)
    ua = rng.uniform([-10, -5], [10, 5], size=(100, 2))
    ub = rng.uniform([-10, -5], [10, 5], size=(100, 2))
    mid = hamiltonian_value(x, 0.5 * (ua + ub), lam, t, lv_spec)
    ends = 0.5 * (hamiltonian_value(x, ua, lam, t, lv_spec) + hamiltonian_value(x, ub, lam, t, lv_spec))
    assert np.all(mid <= ends + 1e-9 * np.abs(ends))


def test_costate_rhs_zero_at_zero_error(eq_spec):
    np.testing.assert_array_equal(costate_rhs([1.0, 1.0], [0.0, 0.0], [0.0, 0.0], 0.0, eq_spec), [0.0, 0.0])


def test_costate_rhs_matches_numerical_hamiltonian_gradient(lv_spec, rng):
    result = check_costate_fd(lv_spec, np.array([40.0, 40.0]), rng, samples=100)
    assert result.passed, result


def test_control_law_examples(lv_spec):
    x = np.array([40.0, 40.0])
    np.testing.assert_array_equal(unconstrained_control(x, [0.0, 0.0], lv_spec), [0.0, 0.0])
    np.testing.assert_allclose(unconstrained_control(x, [1.0, 1.0], lv_spec), [-0.04, -0.04], rtol=1e-14)
    x = np.array([100.0, 50.0])
    np.testing.assert_allclose(unconstrained_control(x, [-500.0, 0.0], lv_spec), [50.0, 0.0])
    np.testing.assert_allclose(saturated_control(x, [-500.0, 0.0], lv_spec), [10.0, 0.0])


def test_saturation_is_identity_inside_the_box(lv_spec):
    x = np.array([100.0, 50.0])
    lam = np.array([-60.0, 80.0])
    np.testing.assert_array_equal(saturated_control(x, lam, lv_spec), unconstrained_control(x, lam, lv_spec))


def test_stationarity_of_unconstrained_law(lv_spec, rng):
    assert check_stationarity(lv_spec, np.array([40.0, 40.0]), rng, samples=200).passed


def test_saturated_law_minimizes_over_a_grid(lv_spec, rng):
    assert check_hamiltonian_argmin(lv_spec, np.array([40.0, 40.0]), rng, samples=10, points=101).passed


def test_terminal_costate_examples(lv_spec):
    t = 0.7
    ref = lv_spec.reference.state(t)
    np.testing.assert_array_equal(terminal_costate(ref, t, lv_spec), [0.0, 0.0])
    np.testing.assert_allclose(terminal_costate(ref + [1.0, -1.0], t, lv_spec), [20.0, -70.0])
    doubled = OcpSpec(lv_spec.model, CostWeights([10.0, 35.0], [500.0, 500.0], [20.0, 70.0]), lv_spec.box,
                      lv_spec.reference, lv_spec.horizon)
    np.testing.assert_allclose(terminal_costate(ref + [1.0, -1.0], t, doubled), [40.0, -140.0])


def test_terminal_costate_is_gradient_of_terminal_cost(lv_spec, rng):
    x = rng.uniform(20, 160, size=2)
    h = 1e-4
    fd = [(terminal_cost(x + h * e, 0.5, lv_spec) - terminal_cost(x - h * e, 0.5, lv_spec)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(terminal_costate(x, 0.5, lv_spec), fd, rtol=1e-8)


def test_total_cost_trapezoid_is_exact_on_constants():
    spec = predator_prey_spec(penalties=False)
    grid = TimeGrid(0.0, 1e-3, 20)
    states = spec.reference.state(grid.times)
    zero = Trajectory(grid, states, np.zeros((21, 2)))
    assert total_cost(zero, spec) == pytest.approx(0.0, abs=1e-9)
    u = np.tile([1.0, 2.0], (21, 1))
    # integrand u^T R u = 500 * 5 = 2500 everywhere
    assert total_cost(Trajectory(grid, states, u), spec) == pytest.approx(2500.0 * 1e-3, rel=1e-10)


def test_total_cost_matches_refined_quadrature(lv_spec):
    sol = solve([40.0, 40.0], 0.0, spec=lv_spec, steps=20)
    coarse = total_cost(sol, lv_spec)
    fine = integrate_coupled_forward([40.0, 40.0], sol.initial_costate, TimeGrid(0.0, 1e-3, 200), lv_spec)
    assert coarse == pytest.approx(total_cost(fine, lv_spec), rel=1e-4)


@pytest.mark.parametrize("kwargs, key", [
    (dict(q_diag=[1, 1], r_diag=[0, 1], p_diag=[1, 1]), "cost.r"),
    (dict(q_diag=[-1, 1], r_diag=[1, 1], p_diag=[1, 1]), "cost.q"),
    (dict(q_diag=[1, 1], r_diag=[1, 1], p_diag=[0, 1]), "cost.p"),
])
def test_invalid_weights_name_the_key(kwargs, key):
    with pytest.raises(ConfigurationError, match=key):
        CostWeights(**kwargs)


def test_box_requires_strict_ordering():
    with pytest.raises(ConfigurationError):
        InputBox(np.array([1.0]), np.array([1.0]))


def test_spec_rejects_mismatched_dimensions(lv_spec):
    with pytest.raises(ConfigurationError, match="cost.r"):
        OcpSpec(lv_spec.model, CostWeights([1, 1], [1], [1, 1]), lv_spec.box, lv_spec.reference, 1e-3)
    with pytest.raises(ConfigurationError):
        OcpSpec(lv_spec.model, lv_spec.weights, lv_spec.box, lv_spec.reference, 0.0)


def test_circle_reference_values():
    ref = circle_reference([100.0, 50.0], 10.0)
    np.testing.assert_allclose(ref.state(0.0), [110.0, 50.0])
    np.testing.assert_allclose(ref.state(np.pi / 2), [100.0, 60.0])
    assert ref.state(np.zeros(4)).shape == (4, 2)
