"""Cost, Hamiltonian and the explicit minimum-principle control law.

Sign convention: the tracking error is ``x - x_ref(t)``, so the terminal
co-state ``2 P (x - x_ref)`` is exactly the gradient of the terminal cost.

Every function accepts batched states ``(..., n_x)`` and co-states; ``t`` is a
scalar or an array broadcasting against the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .dynamics import SystemModel
from .exceptions import ConfigurationError

__all__ = [
    "CostWeights",
    "InputBox",
    "PenaltySpec",
    "ReferenceSignal",
    "OcpSpec",
    "disk_exclusion",
    "circle_reference",
    "constant_reference",
    "tracking_error",
    "penalty_value",
    "penalty_gradient",
    "running_cost",
    "hamiltonian_value",
    "costate_rhs",
    "unconstrained_control",
    "saturated_control",
    "terminal_costate",
    "terminal_cost",
    "total_cost",
    "box_grid",
]


def _vector(values, name) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be a vector")
    return arr


@dataclass(frozen=True)
class CostWeights:
    """Diagonals of the state (Q), input (R) and terminal (P) weights."""

    q_diag: np.ndarray
    r_diag: np.ndarray
    p_diag: np.ndarray

    def __post_init__(self):
        q = _vector(self.q_diag, "cost.q")
        r = _vector(self.r_diag, "cost.r")
        p = _vector(self.p_diag, "cost.p")
        if q.shape != p.shape:
            raise ConfigurationError("cost.q and cost.p must have the same length")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise ConfigurationError("cost.q entries must be finite and >= 0")
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise ConfigurationError("cost.r entries must be finite and > 0")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise ConfigurationError("cost.p entries must be finite and > 0")
        object.__setattr__(self, "q_diag", q)
        object.__setattr__(self, "r_diag", r)
        object.__setattr__(self, "p_diag", p)


@dataclass(frozen=True)
class InputBox:
    """Componentwise input bounds ``u_min <= u <= u_max`` (infinite bounds allowed)."""

    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        lo = _vector(self.u_min, "bounds.u_min")
        hi = _vector(self.u_max, "bounds.u_max")
        if lo.shape != hi.shape:
            raise ConfigurationError("bounds.u_min and bounds.u_max must have the same length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or not np.all(lo < hi):
            raise ConfigurationError("bounds.u_min must be strictly below bounds.u_max")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)

    @classmethod
    def symmetric(cls, u_abs_max) -> "InputBox":
        hi = _vector(u_abs_max, "bounds.u_max")
        return cls(-hi, hi)

    @classmethod
    def unbounded(cls, n_u: int) -> "InputBox":
        return cls(np.full(n_u, -np.inf), np.full(n_u, np.inf))

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(u, self.u_min), self.u_max)

    def contains(self, u) -> bool:
        u = np.asarray(u)
        return bool(np.all(u >= self.u_min) and np.all(u <= self.u_max))


@dataclass(frozen=True)
class PenaltySpec:
    """Gaussian-like penalty ``a * exp(-b * C(x)**2)`` for one constraint ``C(x) <= 0``.

    ``constraint`` maps ``(..., n_x) -> (...)`` and ``constraint_gradient``
    maps ``(..., n_x) -> (..., n_x)``. ``constraint_and_gradient`` may return
    both in one pass.
    """

    constraint: Callable[[np.ndarray], np.ndarray]
    constraint_gradient: Callable[[np.ndarray], np.ndarray]
    amplitude: float
    sharpness: float
    params: dict = field(default_factory=dict)
    constraint_and_gradient: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise ConfigurationError("penalty amplitude a must be > 0")
        if not (np.isfinite(self.sharpness) and self.sharpness > 0):
            raise ConfigurationError("penalty sharpness b must be > 0")


def disk_exclusion(center, radius, amplitude=1e6, sharpness=1.0) -> PenaltySpec:
    """Penalty keeping the state out of a disk: ``C(x) = radius - |x - center|``."""
    center = _vector(center, "penalty.center")
    if not radius > 0:
        raise ConfigurationError("penalty.radius must be > 0")

    def constraint(x):
        d = x - center
        return radius - np.sqrt((d * d).sum(axis=-1))

    def both(x):
        d = x - center
        n = np.sqrt((d * d).sum(axis=-1))
        # gradient undefined at the center; pick zero there
        inv = 1.0 / np.where(n > 0, n, np.inf)
        return radius - n, d * -inv[..., None]

    def gradient(x):
        return both(x)[1]

    return PenaltySpec(
        constraint,
        gradient,
        float(amplitude),
        float(sharpness),
        params={"kind": "disk", "center": center.tolist(), "radius": float(radius)},
        constraint_and_gradient=both,
    )


@dataclass(frozen=True)
class ReferenceSignal:
    """State (and nominal input) reference as functions of time.

    ``state_ref(t)`` returns shape ``np.shape(t) + (n_x,)``. The cost
    penalizes the absolute input ``u^T R u``; ``input_ref`` is the nominal
    input at which the reference is an equilibrium (zero by default) and is
    used only for reporting.
    """

    state_ref: Callable[[np.ndarray], np.ndarray]
    input_ref: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def state(self, t) -> np.ndarray:
        return self.state_ref(t)

    def input(self, t, n_u: int) -> np.ndarray:
        if self.input_ref is None:
            return np.zeros(np.shape(t) + (n_u,))
        return self.input_ref(t)


def circle_reference(center, radius, rate=1.0, phase=0.0) -> ReferenceSignal:
    """``x_ref(t) = center + radius * (cos(rate t + phase), sin(rate t + phase))``."""
    center = _vector(center, "reference.center")
    if center.shape != (2,):
        raise ConfigurationError("circle reference needs a 2-vector center")

    def state_ref(t):
        arg = rate * np.asarray(t, dtype=float) + phase
        out = np.empty(arg.shape + (2,))
        out[..., 0] = center[0] + radius * np.cos(arg)
        out[..., 1] = center[1] + radius * np.sin(arg)
        return out

    return ReferenceSignal(
        state_ref,
        params={"form": "circle", "center": center.tolist(), "radius": float(radius),
                "rate": float(rate), "phase": float(phase)},
    )


def constant_reference(value) -> ReferenceSignal:
    value = _vector(value, "reference.value")

    def state_ref(t):
        return np.broadcast_to(value, np.shape(t) + value.shape).copy()

    return ReferenceSignal(state_ref, params={"form": "constant", "value": value.tolist()})


@dataclass(frozen=True)
class OcpSpec:
    """Finite-horizon tracking problem solved at every controller sample."""

    model: SystemModel
    weights: CostWeights
    box: InputBox
    reference: ReferenceSignal
    horizon: float
    penalties: Tuple[PenaltySpec, ...] = ()

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigurationError("nmpc.horizon must be > 0")
        n_x, n_u = self.model.n_x, self.model.n_u
        if self.weights.q_diag.shape != (n_x,):
            raise ConfigurationError(f"cost.q must have {n_x} entries")
        if self.weights.r_diag.shape != (n_u,):
            raise ConfigurationError(f"cost.r must have {n_u} entries")
        if self.box.u_min.shape != (n_u,):
            raise ConfigurationError(f"bounds must have {n_u} entries")
        object.__setattr__(self, "penalties", tuple(self.penalties))


def tracking_error(x, t, ref: ReferenceSignal) -> np.ndarray:
    """Predicted-minus-reference error ``x - x_ref(t)``."""
    return np.asarray(x, dtype=float) - ref.state(t)


def penalty_value(x, penalty: PenaltySpec) -> np.ndarray:
    c = penalty.constraint(x)
    return penalty.amplitude * np.exp(-penalty.sharpness * c * c)


def penalty_gradient(x, penalty: PenaltySpec) -> np.ndarray:
    """Chain rule on ``a exp(-b C^2)``: ``-2 a b C exp(-b C^2) grad C``."""
    if penalty.constraint_and_gradient is not None:
        c, grad_c = penalty.constraint_and_gradient(x)
    else:
        c, grad_c = penalty.constraint(x), penalty.constraint_gradient(x)
    scale = -2.0 * penalty.amplitude * penalty.sharpness * c * np.exp(-penalty.sharpness * c * c)
    return scale[..., None] * grad_c


def _penalty_sum(x, spec: OcpSpec):
    total = 0.0
    for pen in spec.penalties:
        total = total + penalty_value(x, pen)
    return total


def running_cost(x, u, t, spec: OcpSpec) -> np.ndarray:
    """``e^T Q e + u^T R u + sum_i k_i(x)`` with ``e = x - x_ref(t)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    e = tracking_error(x, t, spec.reference)
    w = spec.weights
    return (e * e) @ w.q_diag + (u * u) @ w.r_diag + _penalty_sum(x, spec)


def hamiltonian_value(x, u, lam, t, spec: OcpSpec) -> np.ndarray:
    """Penalty-augmented Hamiltonian ``L(x, u, t) + lam^T (f(x) + g(x) u)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    dyn = spec.model.rhs(x, u)
    return running_cost(x, u, t, spec) + np.sum(lam * dyn, axis=-1)


def _costate_rhs_ref(x, u, lam, x_ref, spec: OcpSpec) -> np.ndarray:
    grad = spec.model.jacobian_transpose_times(x, u, lam) + 2.0 * spec.weights.q_diag * (x - x_ref)
    for pen in spec.penalties:
        grad = grad + penalty_gradient(x, pen)
    return -grad


def costate_rhs(x, u, lam, t, spec: OcpSpec) -> np.ndarray:
    """``-grad_x H``: ``-(J^T lam + 2 Q e + sum_i grad k_i)``."""
    x = np.asarray(x, dtype=float)
    return _costate_rhs_ref(x, np.asarray(u, dtype=float), np.asarray(lam, dtype=float),
                            spec.reference.state(t), spec)


def unconstrained_control(x, lam, spec: OcpSpec) -> np.ndarray:
    """Stationary point of the Hamiltonian in ``u``: ``-R^{-1} g(x)^T lam / 2``."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return spec.model.input_transpose_times(x, lam) / (-2.0 * spec.weights.r_diag)


def saturated_control(x, lam, spec: OcpSpec) -> np.ndarray:
    """Unconstrained law clamped componentwise into the input box.

    Exact minimizer of the Hamiltonian over the box, because with diagonal R
    the Hamiltonian separates into independent convex parabolas in each
    input component.
    """
    return spec.box.clip(unconstrained_control(x, lam, spec))


def coupled_rhs(x, lam, x_ref, spec: OcpSpec):
    """State and co-state derivatives under the saturated law, plus that input.

    ``x_ref`` is the reference already evaluated at the stage time.
    """
    u = spec.box.clip(spec.model.input_transpose_times(x, lam) / (-2.0 * spec.weights.r_diag))
    return spec.model.rhs(x, u), _costate_rhs_ref(x, u, lam, x_ref, spec), u


def terminal_costate(x_T, t_T, spec: OcpSpec) -> np.ndarray:
    """Transversality condition ``2 P (x_T - x_ref(t_T))``."""
    return 2.0 * spec.weights.p_diag * tracking_error(x_T, t_T, spec.reference)


def terminal_cost(x_T, t_T, spec: OcpSpec) -> np.ndarray:
    e = tracking_error(x_T, t_T, spec.reference)
    return (e * e) @ spec.weights.p_diag


def total_cost(trajectory, spec: OcpSpec) -> float:
    """Trapezoidal running cost over the trajectory grid plus the terminal term.

    ``trajectory`` is anything with ``times``, ``states`` and ``inputs``
    attributes sampled on the same nodes (a :class:`~pmpnmpc.integrator.Trajectory`
    or a :class:`~pmpnmpc.shooting.TpbvpSolution`).
    """
    traj = getattr(trajectory, "trajectory", trajectory)
    t = traj.times
    integrand = running_cost(traj.states, traj.inputs, t, spec)
    return float(np.trapezoid(integrand, t) + terminal_cost(traj.states[-1], t[-1], spec))


def box_grid(box: InputBox, points: Sequence[int]) -> Tuple[np.ndarray, ...]:
    """Tensor grid over a finite input box (helper for brute-force checks)."""
    if not (np.all(np.isfinite(box.u_min)) and np.all(np.isfinite(box.u_max))):
        raise ConfigurationError("grid search needs a finite input box")
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(box.u_min, box.u_max, points)]
    return tuple(axes)
