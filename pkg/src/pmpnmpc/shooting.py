"""Single-shooting Newton solver for the state/co-state boundary value problem.

Unknown: the initial co-state. Residual: the mismatch between the integrated
terminal co-state and the transversality condition ``2 P (x(t_f) - x_ref)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .exceptions import ConfigurationError, IntegrationBlowupError, SingularJacobianError
from .hamiltonian import OcpSpec, terminal_costate
from .integrator import TimeGrid, Trajectory, integrate_coupled_forward

__all__ = [
    "ShootingConfig",
    "TpbvpSolution",
    "shooting_residual",
    "newton_jacobian",
    "solve",
]

logger = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e12


@dataclass(frozen=True)
class ShootingConfig:
    residual_tolerance: float = 1e-8
    max_newton_iters: int = 50
    fd_step: float = 1e-6
    damping_shrink: float = 0.5
    max_damping_halvings: int = 20

    def __post_init__(self):
        for name in ("residual_tolerance", "fd_step", "damping_shrink"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"solver.{name} must be > 0")
        if not self.damping_shrink < 1:
            raise ConfigurationError("solver.damping_shrink must be < 1")
        for name in ("max_newton_iters", "max_damping_halvings"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"solver.{name} must be a positive integer")


@dataclass
class TpbvpSolution:
    """Result of one boundary value solve on a prediction horizon."""

    trajectory: Trajectory
    residual_norm: float
    newton_iterations: int
    converged: bool
    initial_costate: np.ndarray
    residual: Optional[np.ndarray] = None
    residual_history: Tuple[float, ...] = ()

    @property
    def first_input(self) -> np.ndarray:
        return self.trajectory.inputs[0]


def _residual_from(traj: Trajectory, grid: TimeGrid, spec: OcpSpec) -> np.ndarray:
    return traj.costates[-1] - terminal_costate(traj.states[-1], grid.t_end, spec)


def shooting_residual(lambda0, x0, grid: TimeGrid, spec: OcpSpec) -> np.ndarray:
    """``lambda(t_f) - 2 P (x(t_f) - x_ref(t_f))`` after a forward integration.

    ``lambda0`` may be batched over leading axes.
    """
    lambda0 = np.asarray(lambda0, dtype=float)
    try:
        traj = integrate_coupled_forward(x0, lambda0, grid, spec)
    except IntegrationBlowupError as exc:
        exc.context = lambda0
        raise
    return _residual_from(traj, grid, spec)


def _fd_steps(lambda0, cfg: ShootingConfig) -> np.ndarray:
    return cfg.fd_step * (1.0 + np.abs(lambda0))


def newton_jacobian(lambda0, x0, grid: TimeGrid, spec: OcpSpec, cfg: ShootingConfig = ShootingConfig(),
                    base_residual=None) -> np.ndarray:
    """Forward-difference Jacobian of the shooting residual w.r.t. ``lambda0``.

    Column ``j`` uses step ``fd_step * (1 + |lambda0_j|)``; all columns are
    integrated as one batch.
    """
    lambda0 = np.asarray(lambda0, dtype=float)
    steps = _fd_steps(lambda0, cfg)
    perturbed = lambda0 + np.diag(steps)
    if base_residual is None:
        batch = np.vstack([lambda0, perturbed])
        res = shooting_residual(batch, x0, grid, spec)
        base_residual, res = res[0], res[1:]
    else:
        res = shooting_residual(perturbed, x0, grid, spec)
    return ((res - base_residual) / steps[:, None]).T


def solve(x0, t0: float, warm_start=None, grid: Optional[TimeGrid] = None, spec: Optional[OcpSpec] = None,
          cfg: ShootingConfig = ShootingConfig(), steps: int = 20) -> TpbvpSolution:
    """Damped Newton iteration on the initial co-state.

    Parameters
    ----------
    x0 : array (n_x,)
        Measured state fixing the initial boundary condition.
    t0 : float
        Start of the prediction horizon.
    warm_start : array (n_x,), optional
        Initial co-state guess; zero when omitted (that is, zero input).
    grid : TimeGrid, optional
        Horizon grid; defaults to ``steps`` intervals over ``[t0, t0 + spec.horizon]``.
    spec : OcpSpec
    cfg : ShootingConfig

    Returns
    -------
    TpbvpSolution
        ``converged`` is False when the iteration budget or the line search
        is exhausted; the best iterate is returned in that case.

    Raises
    ------
    SingularJacobianError
        If the condition estimate of the Newton Jacobian exceeds 1e12.
    """
    if spec is None:
        raise ConfigurationError("solve() needs an OcpSpec")
    if grid is None:
        grid = TimeGrid.horizon(t0, spec.horizon, steps)
    x0 = spec.model.check_state(x0)
    lam = np.zeros(spec.model.n_x) if warm_start is None else np.array(warm_start, dtype=float)

    def evaluate(point):
        # the point and its n_x forward-difference perturbations in one batch,
        # so an accepted iterate already carries its Newton Jacobian
        fd = _fd_steps(point, cfg)
        batch = integrate_coupled_forward(x0, np.vstack([point, point + np.diag(fd)]), grid, spec)
        res_all = batch.costates[-1] - terminal_costate(batch.states[-1], grid.t_end, spec)
        jac = ((res_all[1:] - res_all[0]) / fd[:, None]).T
        return batch.select(0), res_all[0], jac

    traj, res, jac = evaluate(lam)
    norm = float(np.linalg.norm(res))
    iterations = 0
    converged = norm <= cfg.residual_tolerance
    history = [norm]

    while not converged and iterations < cfg.max_newton_iters:
        cond = np.linalg.cond(jac)
        if not np.isfinite(cond) or cond > SINGULAR_CONDITION:
            raise SingularJacobianError(cond)
        step = np.linalg.solve(jac, -res)

        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_damping_halvings + 1):
            trial = lam + alpha * step
            try:
                trial_traj, trial_res, trial_jac = evaluate(trial)
            except IntegrationBlowupError:
                alpha *= cfg.damping_shrink
                continue
            trial_norm = float(np.linalg.norm(trial_res))
            if trial_norm < norm:
                accepted = True
                break
            alpha *= cfg.damping_shrink
        if not accepted:
            logger.debug("line search stalled at residual %.3e after %d iterations", norm, iterations)
            break
        lam, traj, res, jac, norm = trial, trial_traj, trial_res, trial_jac, trial_norm
        iterations += 1
        history.append(norm)
        converged = norm <= cfg.residual_tolerance

    return TpbvpSolution(
        trajectory=traj,
        residual_norm=norm,
        newton_iterations=iterations,
        converged=converged,
        initial_costate=lam.copy(),
        residual=res,
        residual_history=tuple(history),
    )
