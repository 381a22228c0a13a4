"""Controllers with a scikit-learn estimator interface.

``fit`` validates the hyper-parameters and builds the optimal control
problem, ``predict`` maps measured states to the first optimal input, and
``simulate`` runs the receding-horizon loop. ``get_params``/``set_params``
and ``clone`` work as for any estimator.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .config import ExperimentConfig
from .direct import DirectConfig, run_closed_loop_direct, solve_direct
from .dynamics import LotkaVolterraParams, SystemModel, make_lotka_volterra
from .exceptions import ConfigurationError, DimensionError
from .hamiltonian import CostWeights, InputBox, OcpSpec, PenaltySpec, ReferenceSignal, constant_reference
from .integrator import TimeGrid
from .loop import ClosedLoopLog, NmpcConfig, run_closed_loop
from .shooting import ShootingConfig, solve

__all__ = ["PontryaginNMPC", "DirectNMPC", "check_states", "check_times"]


def check_states(X, n_x: int) -> np.ndarray:
    """2-D finite float array with ``n_x`` columns."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != n_x:
        raise DimensionError(f"X has {X.shape[1]} columns, the model has {n_x} states")
    return X


def check_times(t, n: int) -> np.ndarray:
    if t is None:
        return np.zeros(n)
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return np.full(n, float(t))
    t = check_array(t.reshape(-1, 1), dtype=np.float64).ravel()
    if t.shape != (n,):
        raise DimensionError(f"t has {t.shape[0]} entries for {n} states")
    return t


class _RecedingHorizonController(BaseEstimator):
    def _model(self) -> SystemModel:
        if isinstance(self.model, SystemModel):
            return self.model
        if self.model == "lotka_volterra":
            return make_lotka_volterra(LotkaVolterraParams(**(self.model_params or {})))
        raise ConfigurationError(f"model must be a SystemModel or 'lotka_volterra', got {self.model!r}")

    def fit(self, X=None, y=None):
        """Validate parameters and build the control problem.

        ``X`` is optional; when given it must be states of the model and only
        its shape is checked. ``y`` is ignored.
        """
        model = self._model()
        if X is not None:
            check_states(X, model.n_x)
        p = self.q if self.p is None else self.p
        reference = self.reference if self.reference is not None else constant_reference(np.zeros(model.n_x))
        if not isinstance(reference, ReferenceSignal):
            raise ConfigurationError("reference must be a ReferenceSignal")
        if any(not isinstance(pen, PenaltySpec) for pen in self.penalties):
            raise ConfigurationError("penalties must be PenaltySpec instances")
        self.spec_ = OcpSpec(
            model=model,
            weights=CostWeights(self.q, self.r, p),
            box=InputBox(self.u_min, self.u_max),
            reference=reference,
            horizon=self.horizon,
            penalties=tuple(self.penalties),
        )
        self.n_features_in_ = model.n_x
        self.n_outputs_ = model.n_u
        self._build_solver_config()
        return self

    def nmpc_config(self, duration: float) -> NmpcConfig:
        return NmpcConfig(self.sample_time, self.horizon, self.horizon_steps, duration, self.warm_start,
                          self.plant_substeps)

    def predict(self, X, t=None) -> np.ndarray:
        """First optimal input for each row of ``X``, each solved from a cold start.

        Parameters
        ----------
        X : array-like (n_samples, n_x)
        t : float or array-like (n_samples,), optional
            Horizon start times; zero by default.

        Returns
        -------
        ndarray (n_samples, n_u)
        """
        check_is_fitted(self, "spec_")
        X = check_states(X, self.n_features_in_)
        t = check_times(t, len(X))
        out = np.empty((len(X), self.n_outputs_))
        for i, (x, ti) in enumerate(zip(X, t)):
            out[i] = self._first_input(x, ti)
        return out

    def simulate(self, x0, duration: float, plant: Optional[SystemModel] = None,
                 store_predictions: bool = True) -> ClosedLoopLog:
        check_is_fitted(self, "spec_")
        x0 = check_states(np.atleast_2d(x0), self.n_features_in_)[0]
        return self._run(x0, self.nmpc_config(duration), plant, store_predictions)


class PontryaginNMPC(_RecedingHorizonController):
    """NMPC that solves each horizon through the minimum-principle boundary value problem.

    Parameters
    ----------
    model : SystemModel or "lotka_volterra"
    model_params : dict, optional
        Keyword arguments of :class:`LotkaVolterraParams` for the named model.
    q, r, p : sequence of float
        Diagonal weights; ``p`` defaults to ``q``.
    u_min, u_max : sequence of float
    reference : ReferenceSignal, optional
        Zero state when omitted.
    penalties : sequence of PenaltySpec
    horizon, sample_time : float
    horizon_steps : int
    warm_start : bool
    plant_substeps : int
    residual_tolerance, fd_step : float
    max_newton_iters : int
    """

    def __init__(self, model="lotka_volterra", model_params=None, q=(10.0, 35.0), r=(500.0, 500.0), p=None,
                 u_min=(-10.0, -5.0), u_max=(10.0, 5.0), reference=None, penalties=(), horizon=1e-3,
                 horizon_steps=20, sample_time=1e-4, warm_start=True, plant_substeps=4,
                 residual_tolerance=1e-8, max_newton_iters=50, fd_step=1e-6):
        self.model = model
        self.model_params = model_params
        self.q = q
        self.r = r
        self.p = p
        self.u_min = u_min
        self.u_max = u_max
        self.reference = reference
        self.penalties = penalties
        self.horizon = horizon
        self.horizon_steps = horizon_steps
        self.sample_time = sample_time
        self.warm_start = warm_start
        self.plant_substeps = plant_substeps
        self.residual_tolerance = residual_tolerance
        self.max_newton_iters = max_newton_iters
        self.fd_step = fd_step

    def _build_solver_config(self):
        self.shooting_config_ = ShootingConfig(residual_tolerance=self.residual_tolerance,
                                               max_newton_iters=self.max_newton_iters, fd_step=self.fd_step)

    def _first_input(self, x, t):
        grid = TimeGrid.horizon(t, self.horizon, self.horizon_steps)
        return solve(x, t, grid=grid, spec=self.spec_, cfg=self.shooting_config_).first_input

    def _run(self, x0, cfg, plant, store):
        return run_closed_loop(x0, self.spec_, cfg, plant, self.shooting_config_, store)

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "PontryaginNMPC":
        """Unfitted controller carrying every setting of an experiment configuration."""
        spec = cfg.build_spec()
        s = cfg.solver
        return cls(model=spec.model, q=cfg.q, r=cfg.r, p=cfg.p, u_min=cfg.u_min, u_max=cfg.u_max,
                   reference=spec.reference, penalties=spec.penalties, horizon=cfg.nmpc.horizon,
                   horizon_steps=cfg.nmpc.horizon_steps, sample_time=cfg.nmpc.sample_time,
                   warm_start=cfg.nmpc.warm_start, plant_substeps=cfg.nmpc.plant_substeps,
                   residual_tolerance=s.residual_tolerance, max_newton_iters=s.max_newton_iters, fd_step=s.fd_step)


class DirectNMPC(_RecedingHorizonController):
    """NMPC that optimizes ``nodes`` piecewise-constant input values per horizon.

    Shares every parameter of :class:`PontryaginNMPC` except the solver
    settings, which are ``nodes``, ``max_iters``, ``gradient_tolerance`` and
    ``fd_step``.
    """

    def __init__(self, model="lotka_volterra", model_params=None, q=(10.0, 35.0), r=(500.0, 500.0), p=None,
                 u_min=(-10.0, -5.0), u_max=(10.0, 5.0), reference=None, penalties=(), horizon=1e-3,
                 horizon_steps=20, sample_time=1e-4, warm_start=True, plant_substeps=4,
                 nodes=1, max_iters=200, gradient_tolerance=1e-6, fd_step=1e-4):
        self.model = model
        self.model_params = model_params
        self.q = q
        self.r = r
        self.p = p
        self.u_min = u_min
        self.u_max = u_max
        self.reference = reference
        self.penalties = penalties
        self.horizon = horizon
        self.horizon_steps = horizon_steps
        self.sample_time = sample_time
        self.warm_start = warm_start
        self.plant_substeps = plant_substeps
        self.nodes = nodes
        self.max_iters = max_iters
        self.gradient_tolerance = gradient_tolerance
        self.fd_step = fd_step

    def _build_solver_config(self):
        self.direct_config_ = DirectConfig(nodes=self.nodes, max_iters=self.max_iters,
                                           gradient_tolerance=self.gradient_tolerance, fd_step=self.fd_step)
        if self.horizon_steps % self.nodes:
            raise ConfigurationError(f"nodes={self.nodes} must divide horizon_steps={self.horizon_steps}")

    def _first_input(self, x, t):
        grid = TimeGrid.horizon(t, self.horizon, self.horizon_steps)
        return solve_direct(x, t, self.spec_, self.direct_config_, grid=grid).node_inputs[0]

    def _run(self, x0, cfg, plant, store):
        return run_closed_loop_direct(x0, self.spec_, cfg, self.direct_config_, plant, store)

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, nodes: int = 1) -> "DirectNMPC":
        spec = cfg.build_spec()
        d = cfg.direct
        return cls(model=spec.model, q=cfg.q, r=cfg.r, p=cfg.p, u_min=cfg.u_min, u_max=cfg.u_max,
                   reference=spec.reference, penalties=spec.penalties, horizon=cfg.nmpc.horizon,
                   horizon_steps=cfg.nmpc.horizon_steps, sample_time=cfg.nmpc.sample_time,
                   warm_start=cfg.nmpc.warm_start, plant_substeps=cfg.nmpc.plant_substeps,
                   nodes=nodes, max_iters=d.max_iters, gradient_tolerance=d.gradient_tolerance, fd_step=d.fd_step)
