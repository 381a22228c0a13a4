"""Fixed-step classic Runge-Kutta (order 4) integration on uniform grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError, IntegrationBlowupError
from .hamiltonian import OcpSpec, coupled_rhs, saturated_control

__all__ = [
    "TimeGrid",
    "Trajectory",
    "integrate",
    "integrate_coupled_forward",
    "propagate_plant",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``steps`` intervals on ``[t_start, t_end]``."""

    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t_start) and np.isfinite(self.t_end)) or not self.t_end > self.t_start:
            raise ConfigurationError("time grid needs t_end > t_start")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError("time grid needs an integer number of steps >= 1")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.h * np.arange(self.steps + 1)

    @classmethod
    def horizon(cls, t0: float, length: float, steps: int) -> "TimeGrid":
        return cls(t0, t0 + length, steps)


@dataclass
class Trajectory:
    """Samples of state, co-state and input at every grid node.

    Arrays have shape ``(M + 1, n)``, or ``(M + 1, B, n)`` for a batch of
    ``B`` simultaneous integrations.
    """

    grid: TimeGrid
    states: np.ndarray
    inputs: np.ndarray
    costates: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def select(self, index) -> "Trajectory":
        """Pick one member of a batched trajectory."""
        costates = None if self.costates is None else self.costates[:, index]
        return Trajectory(self.grid, self.states[:, index], self.inputs[:, index], costates)


def _check_finite(y, node):
    if not np.all(np.isfinite(y)):
        raise IntegrationBlowupError(node)


def integrate(rhs: Callable[[float, np.ndarray], np.ndarray], y0, grid: TimeGrid) -> np.ndarray:
    """Classic RK4 samples of ``y' = rhs(t, y)`` at every node of ``grid``.

    Returns an array of shape ``(M + 1,) + y0.shape`` whose first entry is
    ``y0`` exactly. Raises :class:`IntegrationBlowupError` carrying the index
    of the first non-finite node.
    """
    y = np.array(y0, dtype=float)
    _check_finite(y, 0)
    h = grid.h
    t = grid.times
    out = np.empty((grid.steps + 1,) + y.shape)
    out[0] = y
    for j in range(grid.steps):
        tj = t[j]
        k1 = rhs(tj, y)
        k2 = rhs(tj + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(tj + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(tj + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(y, j + 1)
        out[j + 1] = y
    return out


def integrate_coupled_forward(x0, lambda0, grid: TimeGrid, spec: OcpSpec) -> Trajectory:
    """Integrate state and co-state together under the saturated control law.

    The input is re-evaluated from ``(x, lambda)`` at every RK4 stage.
    ``lambda0`` may carry leading batch axes; ``x0`` broadcasts against it.
    """
    lam = np.array(lambda0, dtype=float)
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), lam.shape))
    model = spec.model
    h = grid.h
    n = grid.steps + 1
    xs = np.empty((n,) + x.shape)
    ls = np.empty((n,) + lam.shape)
    us = np.empty((n,) + x.shape[:-1] + (model.n_u,))
    # reference at every node and midpoint, evaluated once
    refs = spec.reference.state(grid.t_start + 0.5 * h * np.arange(2 * grid.steps + 1))

    _check_finite(lam, 0)
    for j in range(grid.steps):
        r0, rm, r1 = refs[2 * j], refs[2 * j + 1], refs[2 * j + 2]
        kx1, kl1, u = coupled_rhs(x, lam, r0, spec)
        xs[j], ls[j], us[j] = x, lam, u
        kx2, kl2, _ = coupled_rhs(x + 0.5 * h * kx1, lam + 0.5 * h * kl1, rm, spec)
        kx3, kl3, _ = coupled_rhs(x + 0.5 * h * kx2, lam + 0.5 * h * kl2, rm, spec)
        kx4, kl4, _ = coupled_rhs(x + h * kx3, lam + h * kl3, r1, spec)
        x = x + (h / 6.0) * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        lam = lam + (h / 6.0) * (kl1 + 2.0 * kl2 + 2.0 * kl3 + kl4)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))):
            raise IntegrationBlowupError(j + 1)
    xs[-1], ls[-1] = x, lam
    us[-1] = saturated_control(x, lam, spec)
    return Trajectory(grid, xs, us, ls)


def propagate_plant(x, u_held, dt: float, model, substeps: int = 4, t0: float = 0.0) -> np.ndarray:
    """Advance ``xdot = f(x) + g(x) u_held`` over ``dt`` with a zero-order-hold input."""
    if not dt > 0:
        raise ConfigurationError("dt must be > 0")
    x = model.check_state(x)
    u = model.check_input(u_held)
    samples = integrate(lambda _t, y: model.rhs(y, u), x, TimeGrid(t0, t0 + dt, substeps))
    return samples[-1]
