"""Receding-horizon closed loop: solve, apply the first input, hold, repeat."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .dynamics import SystemModel
from .exceptions import ConfigurationError, IntegrationBlowupError
from .hamiltonian import OcpSpec
from .integrator import TimeGrid, propagate_plant
from .shooting import ShootingConfig, TpbvpSolution, solve

__all__ = [
    "NmpcConfig",
    "ClosedLoopLog",
    "PlantBlowupError",
    "nmpc_step",
    "run_closed_loop",
    "run_receding_horizon",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NmpcConfig:
    sample_time: float = 1e-4
    horizon: float = 1e-3
    horizon_steps: int = 20
    duration: float = 12.0
    warm_start: bool = True
    plant_substeps: int = 4

    def __post_init__(self):
        if not self.sample_time > 0:
            raise ConfigurationError("nmpc.sample_time must be > 0")
        if not self.horizon >= self.sample_time:
            raise ConfigurationError("nmpc.horizon must be >= nmpc.sample_time")
        if not self.duration >= self.sample_time:
            raise ConfigurationError("nmpc.duration must be >= nmpc.sample_time")
        for name in ("horizon_steps", "plant_substeps"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"nmpc.{name} must be a positive integer")
        ratio = self.duration / self.sample_time
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigurationError("nmpc.duration must be an integer multiple of nmpc.sample_time")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.sample_time))

    def sample_times(self) -> np.ndarray:
        return self.sample_time * np.arange(self.n_samples)


@dataclass
class ClosedLoopLog:
    """Per-sample record of a closed-loop run.

    Row ``k`` holds the measured state at ``t_k``, the input held on
    ``[t_k, t_k + T_S)``, and the statistics of the solve that produced it.
    ``predicted_states[k]`` is the state prediction on the horizon grid
    starting at ``t_k``.
    """

    method: str
    sample_time: float
    horizon: float
    horizon_steps: int
    times: np.ndarray
    states: np.ndarray
    references: np.ndarray
    inputs: np.ndarray
    errors: np.ndarray
    constraints: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    solve_times: np.ndarray
    predicted_states: Optional[np.ndarray]
    final_state: np.ndarray
    aborted: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def predicted_times(self, k: int) -> np.ndarray:
        return TimeGrid.horizon(self.times[k], self.horizon, self.horizon_steps).times

    def tracking_rms(self, start_fraction: float = 0.0) -> float:
        """RMS of the Euclidean tracking-error norm over the tail of the run."""
        k0 = int(np.floor(start_fraction * len(self)))
        norms = np.linalg.norm(self.errors[k0:], axis=1)
        return float(np.sqrt(np.mean(norms**2)))

    def constraint_margin(self) -> float:
        """Smallest ``-C_i(x(t_k))`` over the run (``inf`` without constraints)."""
        if self.constraints.size == 0:
            return float("inf")
        return float(np.min(-self.constraints))


class PlantBlowupError(IntegrationBlowupError):
    """Plant integration failed; ``log`` holds every sample completed before it."""

    def __init__(self, sample, log):
        self.log = log
        super().__init__(sample, f"plant integration blew up at sample {sample}")


# A step function maps (x_k, t_k, warm) to
# (input, residual, iterations, converged, predicted states, next warm start).
StepFn = Callable[[np.ndarray, float, object], Tuple[np.ndarray, float, int, bool, np.ndarray, object]]


def nmpc_step(x_k, t_k: float, warm, spec: OcpSpec, cfg: NmpcConfig,
              shooting: ShootingConfig = ShootingConfig()) -> Tuple[np.ndarray, TpbvpSolution]:
    """Solve the boundary value problem on ``[t_k, t_k + T_p]`` and return its first input."""
    grid = TimeGrid.horizon(t_k, spec.horizon, cfg.horizon_steps)
    sol = solve(x_k, t_k, warm, grid=grid, spec=spec, cfg=shooting)
    if not sol.converged:
        logger.info("shooting did not converge at t=%.6g (residual %.3e)", t_k, sol.residual_norm)
    return sol.first_input.copy(), sol


def run_receding_horizon(x0, spec: OcpSpec, cfg: NmpcConfig, model: SystemModel, step: StepFn,
                         method: str, store_predictions: bool = True) -> ClosedLoopLog:
    """Generic zero-order-hold receding-horizon harness shared by all solvers."""
    if abs(cfg.horizon - spec.horizon) > 1e-12 * spec.horizon:
        raise ConfigurationError("NmpcConfig.horizon and OcpSpec.horizon differ")
    x = model.check_state(x0).copy()
    K = cfg.n_samples
    n_x, n_u = model.n_x, model.n_u
    n_c = len(spec.penalties)
    times = cfg.sample_times()
    states = np.empty((K, n_x))
    inputs = np.empty((K, n_u))
    constraints = np.empty((K, n_c))
    residuals = np.empty(K)
    iterations = np.empty(K, dtype=int)
    converged = np.empty(K, dtype=bool)
    solve_times = np.empty(K)
    predicted = np.empty((K, cfg.horizon_steps + 1, n_x)) if store_predictions else None

    def build(count, final, aborted):
        refs = spec.reference.state(times[:count])
        return ClosedLoopLog(
            method=method,
            sample_time=cfg.sample_time,
            horizon=spec.horizon,
            horizon_steps=cfg.horizon_steps,
            times=times[:count].copy(),
            states=states[:count].copy(),
            references=refs,
            inputs=inputs[:count].copy(),
            errors=states[:count] - refs,
            constraints=constraints[:count].copy(),
            residuals=residuals[:count].copy(),
            iterations=iterations[:count].copy(),
            converged=converged[:count].copy(),
            solve_times=solve_times[:count].copy(),
            predicted_states=None if predicted is None else predicted[:count].copy(),
            final_state=np.asarray(final, dtype=float).copy(),
            aborted=aborted,
        )

    warm = None
    for k in range(K):
        t_k = times[k]
        states[k] = x
        for i, pen in enumerate(spec.penalties):
            constraints[k, i] = pen.constraint(x)
        start = time.perf_counter()
        u, res, iters, ok, pred, next_warm = step(x, t_k, warm if cfg.warm_start else None)
        solve_times[k] = time.perf_counter() - start
        inputs[k] = u
        residuals[k] = res
        iterations[k] = iters
        converged[k] = ok
        if predicted is not None:
            predicted[k] = pred
        warm = next_warm
        try:
            x = propagate_plant(x, u, cfg.sample_time, model, cfg.plant_substeps, t0=t_k)
        except IntegrationBlowupError:
            raise PlantBlowupError(k, build(k + 1, x, True)) from None
    return build(K, x, False)


def run_closed_loop(x0, spec: OcpSpec, cfg: NmpcConfig, model: Optional[SystemModel] = None,
                    shooting: ShootingConfig = ShootingConfig(), store_predictions: bool = True) -> ClosedLoopLog:
    """Minimum-principle NMPC in closed loop with the plant ``model``.

    The plant defaults to the prediction model; it is integrated with a finer
    substep than the predictor. Each solve is warm-started from the previous
    initial co-state unless ``cfg.warm_start`` is off.
    """
    model = spec.model if model is None else model

    def step(x, t, warm):
        u, sol = nmpc_step(x, t, warm, spec, cfg, shooting)
        return u, sol.residual_norm, sol.newton_iterations, sol.converged, sol.trajectory.states, sol.initial_costate

    log = run_receding_horizon(x0, spec, cfg, model, step, "pmp", store_predictions)
    log.meta["residual_tolerance"] = shooting.residual_tolerance
    return log

