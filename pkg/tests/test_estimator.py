import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pmpnmpc.estimator import DirectNMPC, PontryaginNMPC
from pmpnmpc.exceptions import ConfigurationError, DimensionError
from pmpnmpc.hamiltonian import circle_reference, disk_exclusion


def _pmp(**kw):
    return PontryaginNMPC(reference=circle_reference([100, 50], 10),
                          penalties=(disk_exclusion([100, 51.5], 5),), **kw)


def test_get_params_round_trip_and_clone():
    est = _pmp(horizon_steps=10)
    params = est.get_params()
    assert params["horizon_steps"] == 10 and params["r"] == (500.0, 500.0)
    twin = clone(est)
    assert twin.get_params()["horizon_steps"] == 10
    est.set_params(residual_tolerance=1e-9)
    assert est.residual_tolerance == 1e-9


def test_predict_requires_fit():
    with pytest.raises(NotFittedError):
        _pmp().predict([[40.0, 40.0]])


def test_predict_returns_boxed_first_inputs():
    est = _pmp().fit()
    u = est.predict([[40.0, 40.0], [95.0, 47.0]])
    assert u.shape == (2, 2)
    assert np.all(u >= [-10, -5]) and np.all(u <= [10, 5])


def test_predict_validates_input():
    est = _pmp().fit()
    with pytest.raises(DimensionError):
        est.predict([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        est.predict([[np.nan, 1.0]])
    with pytest.raises(DimensionError):
        est.predict([[40.0, 40.0]], t=[0.0, 1.0])


def test_invalid_hyper_parameters_fail_at_fit():
    with pytest.raises(ConfigurationError, match="cost.r"):
        _pmp(r=(500.0, -1.0)).fit()
    with pytest.raises(ConfigurationError):
        DirectNMPC(nodes=3).fit()
    with pytest.raises(ConfigurationError):
        PontryaginNMPC(model="pendulum").fit()


def test_simulate_matches_function_api():
    est = _pmp(horizon_steps=10, sample_time=1e-3).fit()
    log = est.simulate([40.0, 40.0], 5e-3)
    assert len(log) == 5 and log.method == "pmp"
    direct = DirectNMPC(reference=circle_reference([100, 50], 10), nodes=10, horizon_steps=10, sample_time=1e-3).fit()
    dlog = direct.simulate([40.0, 40.0], 5e-3)
    assert dlog.method == "direct-10"


def test_from_config(ci_config):
    est = PontryaginNMPC.from_config(ci_config).fit()
    assert est.sample_time == 1e-3 and est.horizon_steps == 10
    d = DirectNMPC.from_config(ci_config, nodes=10).fit()
    assert d.direct_config_.nodes == 10 and d.fd_step == ci_config.direct.fd_step


def test_equilibrium_predicts_zero():
    est = PontryaginNMPC(q=(1.0, 1.0), r=(1.0, 1.0), penalties=(), reference=None,
                         u_min=(-1.0, -1.0), u_max=(1.0, 1.0))
    from pmpnmpc.hamiltonian import constant_reference
    est.set_params(reference=constant_reference([1.0, 1.0])).fit()
    np.testing.assert_allclose(est.predict([[1.0, 1.0]]), 0.0, atol=1e-12)
