"""Post-hoc stability diagnostics over a closed-loop log.

For sample ``k`` let ``xi_k(tau) = |x_pred_k(tau) - x_ref(tau)|^2`` on the
stored prediction grid. The quantities computed here are

* ``V_k``: integral of ``xi_k`` over the horizon,
* ``zeta_k``: integral of ``xi_{k+1}`` over ``[t_k + T_S, t_k + T_S + T_p]``
  minus the integral of ``xi_k`` over ``[t_k + T_S, t_k + T_p]``,

so that ``V_{k+1} - V_k = -int_{t_k}^{t_k + T_S} xi_k + zeta_k``, plus the
bound ``|zeta_k| <= eps_c * T_p / p_min * exp(2 Gamma T_p)`` and the plateau
``V_k <= eps_c * nu / (1 - a)``. Bound violations are reported as flags,
never raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .dynamics import SystemModel
from .exceptions import ConfigurationError, DiagnosticsUnavailableError
from .hamiltonian import InputBox, OcpSpec, ReferenceSignal
from .integrator import Trajectory
from .loop import ClosedLoopLog

__all__ = [
    "DiagnosticsConfig",
    "DiagnosticsReport",
    "lyapunov_v",
    "xi_integral",
    "zeta",
    "estimate_lipschitz",
    "spectral_norm",
    "diagnostics_config",
    "report",
]

IDENTITY_RTOL = 1e-9


@dataclass(frozen=True)
class DiagnosticsConfig:
    lipschitz_estimate: float
    terminal_bound: float
    p_min: float

    def __post_init__(self):
        if not (self.lipschitz_estimate >= 0 and self.terminal_bound >= 0 and self.p_min > 0):
            raise ConfigurationError("diagnostics needs Gamma >= 0, eps_c >= 0 and p_min > 0")


@dataclass
class DiagnosticsReport:
    v_sequence: np.ndarray
    zeta_sequence: np.ndarray
    head_integrals: np.ndarray
    identity_errors: np.ndarray
    terminal_norms: np.ndarray
    zeta_bound: float
    nu_bar: float
    a_bar: float
    plateau_bound: float
    min_constraint_margin: float
    flags: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


def _xi(times, states, ref: ReferenceSignal) -> np.ndarray:
    e = states - ref.state(times)
    return np.sum(e * e, axis=-1)


def lyapunov_v(predicted, ref: ReferenceSignal) -> float:
    """Trapezoidal integral of the squared predicted tracking error over the horizon.

    ``predicted`` is a :class:`Trajectory` or a ``(times, states)`` pair.
    """
    if isinstance(predicted, Trajectory):
        times, states = predicted.times, predicted.states
    else:
        times, states = predicted
    return float(np.trapezoid(_xi(times, states, ref), times))


def _prediction(log: ClosedLoopLog, k: int):
    if log.predicted_states is None or not 0 <= k < len(log):
        raise DiagnosticsUnavailableError(f"no stored prediction for sample {k}")
    return log.predicted_times(k), log.predicted_states[k]


def _split_index(log: ClosedLoopLog) -> int:
    h = log.horizon / log.horizon_steps
    ratio = log.sample_time / h
    s = int(round(ratio))
    if abs(ratio - s) > 1e-9 * max(1.0, ratio):
        raise ConfigurationError("sample time must be a whole number of prediction steps for the diagnostics")
    return s


def xi_integral(log: ClosedLoopLog, k: int, ref: ReferenceSignal, start: int = 0, stop: Optional[int] = None) -> float:
    """Trapezoid integral of ``xi_k`` between grid nodes ``start`` and ``stop``."""
    times, states = _prediction(log, k)
    stop = len(times) - 1 if stop is None else stop
    if stop <= start:
        return 0.0
    sl = slice(start, stop + 1)
    return float(np.trapezoid(_xi(times[sl], states[sl], ref), times[sl]))


def zeta(log: ClosedLoopLog, k: int, ref: ReferenceSignal) -> float:
    """Change of the error integral on the window shared by predictions ``k`` and ``k + 1``."""
    s = _split_index(log)
    _prediction(log, k + 1)
    return xi_integral(log, k + 1, ref) - xi_integral(log, k, ref, start=s)


def spectral_norm(matrices: np.ndarray, iterations: int = 200, rtol: float = 1e-10) -> np.ndarray:
    """Largest singular value by power iteration on ``J^T J`` (batched over leading axes)."""
    J = np.asarray(matrices, dtype=float)
    n = J.shape[-1]
    v = np.ones(J.shape[:-2] + (n,)) + 1e-3 * np.arange(n)
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    sigma = np.zeros(J.shape[:-2])
    for _ in range(iterations):
        w = np.einsum("...ji,...j->...i", J, np.einsum("...ij,...j->...i", J, v))
        norm = np.linalg.norm(w, axis=-1)
        new_sigma = np.sqrt(norm)
        safe = np.where(norm > 0, norm, 1.0)
        v = np.where(norm[..., None] > 0, w / safe[..., None], v)
        done = np.all(np.abs(new_sigma - sigma) <= rtol * np.maximum(new_sigma, 1e-300))
        sigma = new_sigma
        if done:
            break
    return sigma


def estimate_lipschitz(model: SystemModel, box: InputBox, region, grid_points: int = 50,
                       input_points: int = 3) -> float:
    """Max spectral norm of ``d(f + g u)/dx`` over a state grid times input samples.

    ``region`` is ``(lower, upper)`` state corners. Inputs take
    ``input_points`` values per component across the box (zero for an
    unbounded component).
    """
    lower, upper = (np.asarray(r, dtype=float) for r in region)
    if lower.shape != (model.n_x,) or upper.shape != (model.n_x,) or np.any(upper < lower):
        raise ConfigurationError("region must be (lower, upper) with lower <= upper")
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in zip(lower, upper)]
    states = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.n_x)
    u_axes = []
    for lo, hi in zip(box.u_min, box.u_max):
        u_axes.append(np.linspace(lo, hi, input_points) if np.isfinite(lo) and np.isfinite(hi) else np.zeros(1))
    inputs = np.stack(np.meshgrid(*u_axes, indexing="ij"), axis=-1).reshape(-1, model.n_u)
    gamma = 0.0
    for u in inputs:
        jac = model.jacobian(states, np.broadcast_to(u, states.shape[:-1] + (model.n_u,)))
        gamma = max(gamma, float(np.max(spectral_norm(jac))))
    return gamma


def diagnostics_config(log: ClosedLoopLog, spec: OcpSpec, lipschitz: Optional[float] = None) -> DiagnosticsConfig:
    """Run-derived settings: eps_c is the largest observed terminal ``|e|_P^2``.

    Gamma is estimated over the bounding box of every stored state when not
    supplied.
    """
    terminal = _terminal_norms(log, spec)
    if lipschitz is None:
        pts = log.states if log.predicted_states is None else log.predicted_states.reshape(-1, log.states.shape[1])
        pts = np.vstack([pts, log.states])
        lipschitz = estimate_lipschitz(spec.model, spec.box, (pts.min(axis=0), pts.max(axis=0)))
    return DiagnosticsConfig(
        lipschitz_estimate=float(lipschitz),
        terminal_bound=float(np.max(terminal)) if terminal.size else 0.0,
        p_min=float(np.min(spec.weights.p_diag)),
    )


def _terminal_norms(log: ClosedLoopLog, spec: OcpSpec) -> np.ndarray:
    if log.predicted_states is None:
        raise DiagnosticsUnavailableError("log has no stored predictions")
    t_end = log.times + log.horizon
    e = log.predicted_states[:, -1, :] - spec.reference.state(t_end)
    return (e * e) @ spec.weights.p_diag


def report(log: ClosedLoopLog, cfg: DiagnosticsConfig, spec: OcpSpec, tail_fraction: float = 0.25) -> DiagnosticsReport:
    """Assemble every sequence and check every bound, flagging failures by sample index."""
    ref = spec.reference
    K = len(log)
    s = _split_index(log)
    v = np.array([xi_integral(log, k, ref) for k in range(K)])
    head = np.array([xi_integral(log, k, ref, stop=s) for k in range(K)])
    zetas = np.array([zeta(log, k, ref) for k in range(K - 1)])
    lhs = v[1:] - v[:-1]
    rhs = -head[:-1] + zetas
    scale = np.maximum(np.maximum(np.abs(v[1:]), np.abs(v[:-1])), np.finfo(float).tiny)
    identity_errors = np.abs(lhs - rhs) / scale
    terminal = _terminal_norms(log, spec)

    T_p = log.horizon
    nu_bar = T_p / cfg.p_min * np.exp(2.0 * cfg.lipschitz_estimate * T_p)
    zeta_bound = cfg.terminal_bound * nu_bar
    positive = v > 0
    a_bar = float(np.max(1.0 - head[positive] / v[positive])) if np.any(positive) else 0.0
    plateau = zeta_bound / (1.0 - a_bar) if a_bar < 1.0 else np.inf

    flags: List[Tuple[int, str]] = []
    for k in np.flatnonzero(identity_errors > IDENTITY_RTOL):
        flags.append((int(k), "identity"))
    for k in range(K - 1):
        held = terminal[k] <= cfg.terminal_bound and terminal[k + 1] <= cfg.terminal_bound
        if held and abs(zetas[k]) > zeta_bound:
            flags.append((k, "zeta_bound"))
    k_tail = int(np.floor((1.0 - tail_fraction) * K))
    for k in range(k_tail, K):
        if v[k] > plateau:
            flags.append((k, "plateau"))
    margin = log.constraint_margin()
    if margin < 0:
        flags.append((int(np.argmin(np.min(-log.constraints, axis=1))), "constraint"))

    return DiagnosticsReport(
        v_sequence=v,
        zeta_sequence=zetas,
        head_integrals=head,
        identity_errors=identity_errors,
        terminal_norms=terminal,
        zeta_bound=float(zeta_bound),
        nu_bar=float(nu_bar),
        a_bar=a_bar,
        plateau_bound=float(plateau),
        min_constraint_margin=margin,
        flags=flags,
    )
