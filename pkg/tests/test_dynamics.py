import numpy as np
import pytest

from pmpnmpc.dynamics import (
    LotkaVolterraParams,
    SystemModel,
    eval_dynamics,
    fd_drift_jacobian,
    fd_input_map_jacobian,
    make_linear,
    make_lotka_volterra,
)
from pmpnmpc.exceptions import ConfigurationError, DimensionError

LV = make_lotka_volterra(LotkaVolterraParams())


def test_open_loop_equilibrium_is_stationary():
    np.testing.assert_array_equal(eval_dynamics(LV, [1.0, 1.0], [0.0, 0.0]), [0.0, 0.0])


def test_hand_evaluated_drift_at_initial_state():
    # 40 (0.25 - 0.25 * 40) and 40 (0.008 * 40 - 0.008)
    np.testing.assert_allclose(eval_dynamics(LV, [40.0, 40.0], [0.0, 0.0]), [-390.0, 12.48], rtol=1e-14)


def test_zero_input_returns_drift_exactly(rng):
    x = rng.uniform(1, 200, size=(10, 2))
    np.testing.assert_array_equal(eval_dynamics(LV, x, np.zeros((10, 2))), LV.drift(x))


def test_input_map_is_diagonal_in_the_state():
    np.testing.assert_array_equal(LV.input_map(np.array([40.0, 40.0])), np.diag([40.0, 40.0]))
    np.testing.assert_array_equal(LV.input_map(np.array([0.0, 5.0])), np.diag([0.0, 5.0]))


def test_drift_jacobian_by_hand():
    np.testing.assert_allclose(LV.drift_jacobian(np.array([1.0, 1.0])), [[0.0, -0.25], [0.008, 0.0]], atol=1e-15)


@pytest.mark.parametrize("name", ["alpha", "beta", "gamma", "delta"])
@pytest.mark.parametrize("value", [0.0, -1.0, np.nan])
def test_non_positive_parameter_is_rejected_by_name(name, value):
    with pytest.raises(ConfigurationError, match=f"model.{name}"):
        LotkaVolterraParams(**{name: value})


def test_dimension_mismatch_is_reported():
    with pytest.raises(DimensionError):
        eval_dynamics(LV, [1.0, 2.0, 3.0], [0.0, 0.0])
    with pytest.raises(DimensionError):
        eval_dynamics(LV, [1.0, 2.0], [0.0])


def test_analytic_jacobians_match_central_differences(rng):
    x = rng.uniform(1, 200, size=(500, 2))
    u = rng.uniform([-10, -5], [10, 5], size=(500, 2))
    jf = LV.drift_jacobian(x)
    jg = LV.input_map_jacobian(x, u)
    fd_f = fd_drift_jacobian(LV, x)
    fd_g = fd_input_map_jacobian(LV, x, u)
    rel = lambda a, b: np.linalg.norm(a - b, axis=(-2, -1)) / np.maximum(np.linalg.norm(b, axis=(-2, -1)), 1.0)
    assert np.max(rel(jf, fd_f)) <= 1e-5
    assert np.max(rel(jg, fd_g)) <= 1e-5


def test_matrix_free_hooks_agree_with_matrix_forms(rng):
    x = rng.uniform(1, 200, size=(50, 2))
    u = rng.uniform(-10, 10, size=(50, 2))
    lam = rng.normal(scale=100, size=(50, 2))
    g = LV.input_map(x)
    np.testing.assert_allclose(LV.input_times(x, u), np.einsum("kij,kj->ki", g, u), rtol=1e-14)
    np.testing.assert_allclose(LV.input_transpose_times(x, lam), np.einsum("kji,kj->ki", g, lam), rtol=1e-14)
    jac = LV.jacobian(x, u)
    np.testing.assert_allclose(LV.jacobian_transpose_times(x, u, lam), np.einsum("kji,kj->ki", jac, lam),
                               rtol=1e-12, atol=1e-9)


def test_model_without_jacobians_falls_back_to_finite_differences(rng):
    bare = SystemModel(2, 2, LV.drift, LV.input_map)
    x = rng.uniform(1, 100, size=(5, 2))
    u = rng.uniform(-5, 5, size=(5, 2))
    np.testing.assert_allclose(bare.jacobian(x, u), LV.jacobian(x, u), rtol=1e-8, atol=1e-9)


def test_linear_model_shapes_and_jacobian():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    B = np.array([[0.0], [1.0]])
    m = make_linear(A, B)
    assert (m.n_x, m.n_u) == (2, 1)
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(eval_dynamics(m, x, [0.5]), A @ x + B @ [0.5])
    np.testing.assert_array_equal(m.jacobian(x, np.array([0.5])), A)
    with pytest.raises(ConfigurationError):
        make_linear(np.eye(3), B)
