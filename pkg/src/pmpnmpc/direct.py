"""Direct NMPC baseline with a piecewise-constant input on N nodes.

The node values are optimized by a projected BFGS method with
central-difference gradients and an Armijo backtracking search along the
projected path. ``N = 1`` is a constant input over the horizon; ``N = M``
changes the input at every prediction step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .dynamics import SystemModel
from .exceptions import ConfigurationError, IntegrationBlowupError
from .hamiltonian import OcpSpec, running_cost, terminal_cost
from .integrator import TimeGrid
from .loop import ClosedLoopLog, NmpcConfig, run_receding_horizon

__all__ = [
    "DirectConfig",
    "DirectSolution",
    "simulate_piecewise",
    "direct_cost",
    "solve_direct",
    "run_closed_loop_direct",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DirectConfig:
    nodes: int = 1
    max_iters: int = 200
    gradient_tolerance: float = 1e-6
    fd_step: float = 1e-4
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40

    def __post_init__(self):
        for name in ("nodes", "max_iters", "max_backtracks"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"direct.{name} must be a positive integer")
        for name in ("gradient_tolerance", "fd_step", "armijo"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"direct.{name} must be > 0")
        if not 0 < self.backtrack < 1:
            raise ConfigurationError("direct.backtrack must lie in (0, 1)")


@dataclass
class DirectSolution:
    node_inputs: np.ndarray
    cost: float
    iterations: int
    converged: bool
    projected_gradient_norm: float = np.nan
    predicted_states: Optional[np.ndarray] = None
    cost_history: Tuple[float, ...] = ()


def _segment_index(grid: TimeGrid, nodes: int) -> np.ndarray:
    if grid.steps % nodes:
        raise ConfigurationError(f"{nodes} nodes do not divide {grid.steps} horizon steps")
    return np.arange(grid.steps) // (grid.steps // nodes)


def simulate_piecewise(node_inputs, x0, grid: TimeGrid, model: SystemModel):
    """RK4 plant prediction under a piecewise-constant input.

    ``node_inputs`` has shape ``(..., N, n_u)``. Returns the state samples
    ``(M + 1, ..., n_x)`` and the per-step input ``(M, ..., n_u)``.
    """
    node_inputs = np.asarray(node_inputs, dtype=float)
    seg = _segment_index(grid, node_inputs.shape[-2])
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), node_inputs.shape[:-2] + (model.n_x,)))
    h = grid.h
    xs = np.empty((grid.steps + 1,) + x.shape)
    us = np.empty((grid.steps,) + node_inputs.shape[:-2] + (model.n_u,))
    xs[0] = x
    for j in range(grid.steps):
        u = node_inputs[..., seg[j], :]
        k1 = model.rhs(x, u)
        k2 = model.rhs(x + 0.5 * h * k1, u)
        k3 = model.rhs(x + 0.5 * h * k2, u)
        k4 = model.rhs(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowupError(j + 1)
        xs[j + 1] = x
        us[j] = u
    return xs, us


def direct_cost(node_inputs, x0, t0: float, spec: OcpSpec, grid: Optional[TimeGrid] = None, steps: int = 20):
    """Penalty-augmented Bolza cost of a piecewise-constant input.

    Each step integrates the running cost by the trapezoid rule with the
    input held at that step's node value, so a constant input gives exactly
    the quadrature of :func:`~pmpnmpc.hamiltonian.total_cost`. Batched over
    leading axes of ``node_inputs``.
    """
    if grid is None:
        grid = TimeGrid.horizon(t0, spec.horizon, steps)
    xs, us = simulate_piecewise(node_inputs, x0, grid, spec.model)
    t = grid.times
    tt = t.reshape((-1,) + (1,) * (xs.ndim - 2))
    left = running_cost(xs[:-1], us, tt[:-1], spec)
    right = running_cost(xs[1:], us, tt[1:], spec)
    integral = 0.5 * grid.h * np.sum(left + right, axis=0)
    return integral + terminal_cost(xs[-1], t[-1], spec)


def _cost_and_gradient(z, shape, x0, grid, spec, cfg):
    """Cost and central-difference gradient, all perturbations in one batch."""
    n = z.size
    steps = cfg.fd_step * (1.0 + np.abs(z))
    batch = np.empty((2 * n + 1, n))
    batch[0] = z
    batch[1:n + 1] = z + np.diag(steps)
    batch[n + 1:] = z - np.diag(steps)
    values = direct_cost(batch.reshape((-1,) + shape), x0, grid.t_start, spec, grid)
    grad = (values[1:n + 1] - values[n + 1:]) / (2.0 * steps)
    return float(values[0]), grad


def _projected_gradient(z, g, lo, hi):
    return z - np.clip(z - g, lo, hi)


def solve_direct(x0, t0: float, spec: OcpSpec, cfg: DirectConfig = DirectConfig(), grid: Optional[TimeGrid] = None,
                 steps: int = 20, initial=None) -> DirectSolution:
    """Minimize :func:`direct_cost` over the box-constrained node inputs.

    Parameters
    ----------
    initial : array (N, n_u), optional
        Starting node values (clipped into the box); zero input otherwise.
    """
    if grid is None:
        grid = TimeGrid.horizon(t0, spec.horizon, steps)
    n_u = spec.model.n_u
    shape = (cfg.nodes, n_u)
    _segment_index(grid, cfg.nodes)
    lo = np.tile(spec.box.u_min, cfg.nodes)
    hi = np.tile(spec.box.u_max, cfg.nodes)
    z = np.zeros(cfg.nodes * n_u) if initial is None else np.asarray(initial, dtype=float).reshape(-1).copy()
    z = np.clip(z, lo, hi)
    n = z.size

    f, g = _cost_and_gradient(z, shape, x0, grid, spec, cfg)
    H = np.eye(n)
    scaled = False
    converged = False
    iterations = 0
    pg_norm = float(np.linalg.norm(_projected_gradient(z, g, lo, hi)))
    history = [f]

    while iterations < cfg.max_iters:
        if pg_norm <= cfg.gradient_tolerance:
            converged = True
            break
        # bound-active variables whose gradient pushes outward stay fixed
        active = ((z <= lo) & (g > 0)) | ((z >= hi) & (g < 0))
        free = ~active
        d = np.zeros(n)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        if g @ d >= 0:
            H = np.eye(n)
            scaled = False
            d = np.where(free, -g, 0.0)

        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = np.clip(z + alpha * d, lo, hi)
            s = trial - z
            if not np.any(s):
                break
            try:
                f_trial = float(direct_cost(trial.reshape(shape), x0, t0, spec, grid))
            except IntegrationBlowupError:
                alpha *= cfg.backtrack
                continue
            if f_trial <= f + cfg.armijo * (g @ s):
                accepted = True
                break
            alpha *= cfg.backtrack
        if not accepted:
            if not np.allclose(H, np.eye(n)):
                H = np.eye(n)
                scaled = False
                continue
            logger.debug("direct line search stalled at projected gradient %.3e", pg_norm)
            break

        f_new, g_new = _cost_and_gradient(trial, shape, x0, grid, spec, cfg)
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = np.eye(n) * (sy / (y @ y))
                scaled = True
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        z, f, g = trial, f_new, g_new
        history.append(f)
        iterations += 1
        pg_norm = float(np.linalg.norm(_projected_gradient(z, g, lo, hi)))

    xs, _ = simulate_piecewise(z.reshape(shape), x0, grid, spec.model)
    return DirectSolution(
        node_inputs=z.reshape(shape),
        cost=f,
        iterations=iterations,
        converged=converged or pg_norm <= cfg.gradient_tolerance,
        projected_gradient_norm=pg_norm,
        predicted_states=xs,
        cost_history=tuple(history),
    )


def _shift(nodes: np.ndarray) -> np.ndarray:
    return np.vstack([nodes[1:], nodes[-1:]])


def run_closed_loop_direct(x0, spec: OcpSpec, cfg_nmpc: NmpcConfig, cfg_direct: DirectConfig,
                           model: Optional[SystemModel] = None, store_predictions: bool = True) -> ClosedLoopLog:
    """Receding-horizon loop driven by :func:`solve_direct`.

    Warm start: the previous node values shifted by one node.
    """
    model = spec.model if model is None else model

    def step(x, t, warm):
        grid = TimeGrid.horizon(t, spec.horizon, cfg_nmpc.horizon_steps)
        sol = solve_direct(x, t, spec, cfg_direct, grid=grid, initial=warm)
        if not sol.converged:
            logger.info("direct solve did not converge at t=%.6g", t)
        return (sol.node_inputs[0].copy(), sol.projected_gradient_norm, sol.iterations, sol.converged,
                sol.predicted_states, _shift(sol.node_inputs))

    log = run_receding_horizon(x0, spec, cfg_nmpc, model, step, f"direct-{cfg_direct.nodes}", store_predictions)
    log.meta["gradient_tolerance"] = cfg_direct.gradient_tolerance
    return log
