"""Input-affine nonlinear system models ``xdot = f(x) + g(x) u``.

All model callables are batch-aware: states carry the dimension on the last
axis and any number of leading axes broadcast, so a stack of states of shape
``(..., n_x)`` evaluates in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError, DimensionError

__all__ = [
    "SystemModel",
    "LotkaVolterraParams",
    "make_lotka_volterra",
    "make_linear",
    "eval_dynamics",
    "fd_drift_jacobian",
    "fd_input_map_jacobian",
]


@dataclass(frozen=True)
class SystemModel:
    """Time-invariant input-affine dynamics.

    Parameters
    ----------
    n_x, n_u : int
        State and input dimensions.
    drift : callable
        ``f(x) -> (..., n_x)``.
    input_map : callable
        ``g(x) -> (..., n_x, n_u)``.
    drift_jacobian : callable, optional
        ``df/dx(x) -> (..., n_x, n_x)``. Central differences are used when
        omitted.
    input_map_jacobian : callable, optional
        ``d(g(x) u)/dx (x, u) -> (..., n_x, n_x)``. Central differences are
        used when omitted.
    apply_input, adjoint_input, adjoint_jacobian : callable, optional
        Matrix-free shortcuts for ``g(x) u``, ``g(x)^T lam`` and
        ``(d(f + g u)/dx)^T lam``. They default to the matrix forms and only
        exist to speed up the co-state integration.
    name : str
    """

    n_x: int
    n_u: int
    drift: Callable[[np.ndarray], np.ndarray]
    input_map: Callable[[np.ndarray], np.ndarray]
    drift_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    input_map_jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "model"
    apply_input: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    adjoint_input: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    adjoint_jacobian: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if int(self.n_x) < 1 or int(self.n_u) < 1:
            raise ConfigurationError("n_x and n_u must be >= 1")

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.n_x,):
            raise DimensionError(f"state has shape {x.shape}, expected (..., {self.n_x})")
        return x

    def check_input(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1:] != (self.n_u,):
            raise DimensionError(f"input has shape {u.shape}, expected (..., {self.n_u})")
        return u

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """``f(x) + g(x) u`` without dimension checks (hot path)."""
        return self.drift(x) + self.input_times(x, u)

    def input_times(self, x, u) -> np.ndarray:
        if self.apply_input is not None:
            return self.apply_input(x, u)
        return np.einsum("...ij,...j->...i", self.input_map(x), u)

    def input_transpose_times(self, x, lam) -> np.ndarray:
        """``g(x)^T lam``."""
        if self.adjoint_input is not None:
            return self.adjoint_input(x, lam)
        return np.einsum("...ji,...j->...i", self.input_map(x), lam)

    def jacobian_transpose_times(self, x, u, lam) -> np.ndarray:
        """``(d(f + g u)/dx)^T lam``."""
        if self.adjoint_jacobian is not None:
            return self.adjoint_jacobian(x, u, lam)
        return np.einsum("...ji,...j->...i", self.jacobian(x, u), lam)

    def jacobian(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """``d(f + g u)/dx`` with shape ``(..., n_x, n_x)``."""
        jf = self.drift_jacobian(x) if self.drift_jacobian is not None else fd_drift_jacobian(self, x)
        if self.input_map_jacobian is not None:
            jg = self.input_map_jacobian(x, u)
        else:
            jg = fd_input_map_jacobian(self, x, u)
        return jf + jg


def eval_dynamics(model: SystemModel, x, u) -> np.ndarray:
    """Evaluate ``f(x) + g(x) u`` after checking dimensions."""
    x = model.check_state(x)
    u = model.check_input(u)
    return model.rhs(x, u)


def _fd_step(x: np.ndarray) -> np.ndarray:
    return 1e-5 * (1.0 + np.abs(x))


def fd_drift_jacobian(model: SystemModel, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of the drift, columns stacked last."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(model.n_x):
        h = _fd_step(x[..., j])
        e = np.zeros(model.n_x)
        e[j] = 1.0
        xp = x + h[..., None] * e
        xm = x - h[..., None] * e
        cols.append((model.drift(xp) - model.drift(xm)) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-1)


def fd_input_map_jacobian(model: SystemModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)

    def gu(z):
        return np.einsum("...ij,...j->...i", model.input_map(z), u)

    cols = []
    for j in range(model.n_x):
        h = _fd_step(x[..., j])
        e = np.zeros(model.n_x)
        e[j] = 1.0
        cols.append((gu(x + h[..., None] * e) - gu(x - h[..., None] * e)) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class LotkaVolterraParams:
    """Interaction rates of the controlled predator-prey model."""

    alpha: float = 0.25
    beta: float = 0.25
    gamma: float = 0.008
    delta: float = 0.008

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigurationError(f"model.{name} must be strictly positive, got {value!r}")


def make_lotka_volterra(params: LotkaVolterraParams = LotkaVolterraParams()) -> SystemModel:
    """Predator-prey model with the input acting multiplicatively on each species.

    ``x1' = x1 (alpha - beta x2) + x1 u1`` and
    ``x2' = x2 (gamma x1 - delta) + x2 u2``. Its open-loop equilibrium is
    ``(delta / gamma, alpha / beta)``.
    """
    if not isinstance(params, LotkaVolterraParams):
        raise ConfigurationError("params must be a LotkaVolterraParams instance")
    a, b, c, d = params.alpha, params.beta, params.gamma, params.delta

    def drift(x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        out = np.empty(x.shape)
        out[..., 0] = x1 * (a - b * x2)
        out[..., 1] = x2 * (c * x1 - d)
        return out

    def input_map(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = x[..., 0]
        out[..., 1, 1] = x[..., 1]
        return out

    def drift_jacobian(x):
        x1 = x[..., 0]
        x2 = x[..., 1]
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = a - b * x2
        out[..., 0, 1] = -b * x1
        out[..., 1, 0] = c * x2
        out[..., 1, 1] = c * x1 - d
        return out

    def input_map_jacobian(x, u):
        u = np.broadcast_to(u, x.shape)
        out = np.zeros(np.broadcast_shapes(x.shape, u.shape)[:-1] + (2, 2))
        out[..., 0, 0] = u[..., 0]
        out[..., 1, 1] = u[..., 1]
        return out

    def diagonal_product(x, v):
        # g(x) = diag(x), so g u and g^T lam are both elementwise products
        return x * v

    def adjoint_jacobian(x, u, lam):
        x1 = x[..., 0]
        x2 = x[..., 1]
        l1 = lam[..., 0]
        l2 = lam[..., 1]
        out = u * lam
        out[..., 0] += (a - b * x2) * l1 + c * x2 * l2
        out[..., 1] += (c * x1 - d) * l2 - b * x1 * l1
        return out

    return SystemModel(
        n_x=2,
        n_u=2,
        drift=drift,
        input_map=input_map,
        drift_jacobian=drift_jacobian,
        input_map_jacobian=input_map_jacobian,
        name="lotka_volterra",
        apply_input=diagonal_product,
        adjoint_input=diagonal_product,
        adjoint_jacobian=adjoint_jacobian,
    )


def make_linear(A, B) -> SystemModel:
    """Linear model ``xdot = A x + B u`` (used by the LQ oracle checks)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n_x, n_u = B.shape
    if A.shape != (n_x, n_x):
        raise ConfigurationError(f"A has shape {A.shape}, expected {(n_x, n_x)}")

    def drift(x):
        return x @ A.T

    def input_map(x):
        return np.broadcast_to(B, x.shape[:-1] + B.shape)

    def drift_jacobian(x):
        return np.broadcast_to(A, x.shape[:-1] + A.shape)

    def input_map_jacobian(x, u):
        return np.zeros(x.shape[:-1] + (n_x, n_x))

    return SystemModel(n_x, n_u, drift, input_map, drift_jacobian, input_map_jacobian, name="linear")
