"""Cross-module verification battery run by ``pmpnmpc verify``.

Each check returns a :class:`CheckResult`; randomness comes from a generator
seeded by the configuration, so the battery is reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np

from .config import ExperimentConfig
from .diagnostics import diagnostics_config, report
from .direct import DirectConfig, direct_cost, solve_direct
from .dynamics import SystemModel, make_linear
from .hamiltonian import (
    CostWeights,
    InputBox,
    OcpSpec,
    box_grid,
    constant_reference,
    costate_rhs,
    hamiltonian_value,
    saturated_control,
    unconstrained_control,
)
from .integrator import TimeGrid, integrate
from .loop import run_closed_loop
from .shooting import solve

__all__ = [
    "CheckResult",
    "corrupt_jacobian",
    "sample_states",
    "sample_costates",
    "check_jacobian_fd",
    "check_costate_fd",
    "check_stationarity",
    "check_rk4_order",
    "check_lq_riccati",
    "check_hamiltonian_argmin",
    "check_direct_grid",
    "check_decomposition_identity",
    "run_battery",
    "format_table",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""


def corrupt_jacobian(model: SystemModel, factor: float = 1.01) -> SystemModel:
    """Copy of ``model`` whose analytic drift Jacobian is scaled by ``factor`` (test hook)."""
    original = model.drift_jacobian or (lambda x: model.jacobian(x, np.zeros(x.shape[:-1] + (model.n_u,))))
    return replace(model, drift_jacobian=lambda x: factor * original(x), adjoint_jacobian=None)


def _rel(a, b, axes) -> np.ndarray:
    return np.linalg.norm(a - b, axis=axes) / np.maximum(np.linalg.norm(b, axis=axes), 1.0)


def sample_states(spec: OcpSpec, x0, rng: np.random.Generator, count: int, penalty_share: float = 0.3) -> np.ndarray:
    """States spread over the box spanned by ``x0`` and the reference, part of them near each penalty."""
    ref = spec.reference.state(np.linspace(0.0, 2 * np.pi, 64))
    pts = np.vstack([ref, np.asarray(x0, dtype=float)[None]])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.5 * np.maximum(hi - lo, 1.0)
    lo, hi = lo - pad, hi + pad
    if np.all(np.asarray(x0) > 0) and np.all(ref > 0):
        lo = np.maximum(lo, 1e-3)
    xs = rng.uniform(lo, hi, size=(count, spec.model.n_x))
    near = int(round(penalty_share * count)) if spec.penalties else 0
    for i in range(near):
        pen = spec.penalties[i % len(spec.penalties)]
        center = np.asarray(pen.params.get("center", xs[i]))
        radius = float(pen.params.get("radius", 1.0))
        direction = rng.normal(size=spec.model.n_x)
        direction /= np.linalg.norm(direction)
        xs[i] = center + direction * (radius + rng.uniform(-2.9, 2.9) / np.sqrt(pen.sharpness))
    return xs


def sample_costates(spec: OcpSpec, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Co-states whose unconstrained input lands within twice the box (or O(1) if unbounded)."""
    box = spec.box
    span = np.where(np.isfinite(box.u_max - box.u_min), np.abs(box.u_max) + np.abs(box.u_min), 2.0)
    g_scale = np.array([np.max(np.abs(spec.model.input_map(x))) for x in xs])
    lam_scale = 2.0 * np.max(spec.weights.r_diag * span) / np.maximum(g_scale, 1e-9)
    return rng.uniform(-1.0, 1.0, size=xs.shape) * lam_scale[:, None]


def _inputs(spec: OcpSpec, rng, count):
    lo = np.where(np.isfinite(spec.box.u_min), spec.box.u_min, -1.0)
    hi = np.where(np.isfinite(spec.box.u_max), spec.box.u_max, 1.0)
    return rng.uniform(lo, hi, size=(count, spec.model.n_u))


def check_jacobian_fd(spec: OcpSpec, x0, rng, samples: int = 200, rtol: float = 1e-5) -> CheckResult:
    """Analytic ``d(f + g u)/dx`` against central differences of the dynamics."""
    model = spec.model
    xs = sample_states(spec, x0, rng, samples)
    us = _inputs(spec, rng, samples)
    jac = model.jacobian(xs, us)
    fd = np.empty_like(jac)
    for j in range(model.n_x):
        h = 1e-5 * (1.0 + np.abs(xs[:, j]))
        e = np.zeros(model.n_x)
        e[j] = 1.0
        fd[..., j] = (model.rhs(xs + h[:, None] * e, us) - model.rhs(xs - h[:, None] * e, us)) / (2.0 * h[:, None])
    worst = float(np.max(_rel(jac, fd, (-2, -1))))
    return CheckResult("jacobian_fd", worst <= rtol, worst, rtol)


def _fd_gradient_x(fun: Callable[[np.ndarray], np.ndarray], xs: np.ndarray) -> np.ndarray:
    # fourth-order central stencil; the penalty makes third derivatives large
    grad = np.empty_like(xs)
    for j in range(xs.shape[-1]):
        h = 1e-4 * (1.0 + np.abs(xs[:, j]))
        e = np.zeros(xs.shape[-1])
        e[j] = 1.0
        step = h[:, None] * e
        grad[:, j] = (-fun(xs + 2 * step) + 8 * fun(xs + step) - 8 * fun(xs - step) + fun(xs - 2 * step)) / (12.0 * h)
    return grad


def check_costate_fd(spec: OcpSpec, x0, rng, samples: int = 1000, rtol: float = 1e-5) -> CheckResult:
    """Co-state right-hand side against minus the numerical state gradient of the Hamiltonian."""
    xs = sample_states(spec, x0, rng, samples)
    lams = sample_costates(spec, xs, rng)
    us = _inputs(spec, rng, samples)
    ts = rng.uniform(0.0, 2 * np.pi, size=samples)
    analytic = costate_rhs(xs, us, lams, ts, spec)
    numeric = -_fd_gradient_x(lambda z: hamiltonian_value(z, us, lams, ts, spec), xs)
    worst = float(np.max(_rel(analytic, numeric, -1)))
    return CheckResult("costate_fd", worst <= rtol, worst, rtol)


def check_stationarity(spec: OcpSpec, x0, rng, samples: int = 1000, tol: float = 1e-8) -> CheckResult:
    """``|2 R u + g^T lam|`` at the unconstrained law, scaled by ``1 + |lam||x|``."""
    xs = sample_states(spec, x0, rng, samples)
    lams = sample_costates(spec, xs, rng)
    u = unconstrained_control(xs, lams, spec)
    grad_u = 2.0 * spec.weights.r_diag * u + np.einsum("kji,kj->ki", spec.model.input_map(xs), lams)
    scaled = np.linalg.norm(grad_u, axis=-1) / (1.0 + np.linalg.norm(lams, axis=-1) * np.linalg.norm(xs, axis=-1))
    worst = float(np.max(scaled))
    return CheckResult("stationarity", worst <= tol, worst, tol)


def rk4_order(steps=(10, 20, 40, 80)) -> float:
    """Least-squares convergence order of RK4 on ``y' = -y`` over ``[0, 1]``."""
    errors = []
    for m in steps:
        y = integrate(lambda _t, v: -v, np.array([1.0]), TimeGrid(0.0, 1.0, m))
        errors.append(abs(y[-1, 0] - np.exp(-1.0)))
    slope = np.polyfit(np.log(1.0 / np.asarray(steps, dtype=float)), np.log(errors), 1)[0]
    return float(slope)


def check_rk4_order(low: float = 3.8, high: float = 4.2) -> CheckResult:
    order = rk4_order()
    return CheckResult("rk4_order", low <= order <= high, order, high, detail=f"range [{low}, {high}]")


def lq_problem(steps: int = 100) -> OcpSpec:
    """Scalar ``x' = u`` with unit weights; the Riccati solution is identically 1."""
    return OcpSpec(
        model=make_linear([[0.0]], [[1.0]]),
        weights=CostWeights([1.0], [1.0], [1.0]),
        box=InputBox.unbounded(1),
        reference=constant_reference([0.0]),
        horizon=1.0,
    )


def riccati_trajectory(times: np.ndarray) -> np.ndarray:
    """Closed-loop state of the scalar LQ problem from ``x0 = 1`` by integrating its Riccati equation.

    ``p' = p^2 - 1`` backward from ``p(1) = 1``; feedback ``u = -p x``.
    """
    grid = TimeGrid(times[0], times[-1], len(times) - 1)
    p_rev = integrate(lambda _t, p: 1.0 - p * p, np.array([1.0]), grid)[::-1, 0]
    x = np.empty(len(times))
    x[0] = 1.0
    h = grid.h
    p_mid = np.interp(times[:-1] + 0.5 * h, times, p_rev)
    for j in range(len(times) - 1):
        p0, pm, p1 = p_rev[j], p_mid[j], p_rev[j + 1]
        k1 = -p0 * x[j]
        k2 = -pm * (x[j] + 0.5 * h * k1)
        k3 = -pm * (x[j] + 0.5 * h * k2)
        k4 = -p1 * (x[j] + h * k3)
        x[j + 1] = x[j] + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def check_lq_riccati(steps: int = 100, tol: float = 1e-4) -> CheckResult:
    spec = lq_problem()
    sol = solve(np.array([1.0]), 0.0, spec=spec, steps=steps)
    ref = riccati_trajectory(sol.trajectory.times)
    err = float(np.max(np.abs(sol.trajectory.states[:, 0] - ref)))
    return CheckResult("lq_riccati", sol.converged and err <= tol, err, tol)


def check_hamiltonian_argmin(spec: OcpSpec, x0, rng, samples: int = 50, points: int = 201) -> CheckResult:
    """Saturated law against a brute-force grid minimum of the Hamiltonian over the box."""
    if spec.model.n_u > 2:
        return CheckResult("hamiltonian_argmin", True, 0.0, 0.0, detail="skipped: more than two inputs")
    axes = box_grid(spec.box, [points] * spec.model.n_u)
    grid_u = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.model.n_u)
    xs = sample_states(spec, x0, rng, samples)
    lams = sample_costates(spec, xs, rng)
    ts = rng.uniform(0.0, 2 * np.pi, size=samples)
    worst = -np.inf
    for x, lam, t in zip(xs, lams, ts):
        h_star = float(hamiltonian_value(x, saturated_control(x, lam, spec), lam, t, spec))
        h_grid = hamiltonian_value(np.broadcast_to(x, (len(grid_u), x.size)), grid_u,
                                   np.broadcast_to(lam, (len(grid_u), lam.size)), t, spec)
        slack = 1e-9 * (1.0 + abs(h_star))
        worst = max(worst, (h_star - float(np.min(h_grid))) / slack)
    return CheckResult("hamiltonian_argmin", worst <= 1.0, worst, 1.0, detail="excess over grid min / slack")


def direct_grid_search(x0, t0: float, spec: OcpSpec, grid: TimeGrid, points: int = 41):
    axes = box_grid(spec.box, [points] * spec.model.n_u)
    cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 1, spec.model.n_u)
    costs = direct_cost(cand, x0, t0, spec, grid)
    best = int(np.argmin(costs))
    cell = np.array([(a[-1] - a[0]) / (points - 1) for a in axes])
    return cand[best, 0], float(costs[best]), cell


def check_direct_grid(spec: OcpSpec, rng, samples: int = 20, points: int = 41, steps: int = 20,
                      region=(20.0, 160.0), cost_rtol: float = 1e-6) -> CheckResult:
    """Single-node direct solve against an exhaustive grid over the input box."""
    if spec.model.n_u > 2:
        return CheckResult("direct_grid", True, 0.0, 0.0, detail="skipped: more than two inputs")
    grid = TimeGrid.horizon(0.0, spec.horizon, steps)
    worst_cells = 0.0
    worst_cost = 0.0
    for x0 in rng.uniform(region[0], region[1], size=(samples, spec.model.n_x)):
        sol = solve_direct(x0, 0.0, spec, DirectConfig(nodes=1), grid=grid)
        u_grid, j_grid, cell = direct_grid_search(x0, 0.0, spec, grid, points)
        worst_cells = max(worst_cells, float(np.max(np.abs(sol.node_inputs[0] - u_grid) / cell)))
        # the grid optimum is feasible, so the solver may only beat it
        worst_cost = max(worst_cost, (sol.cost - j_grid) / abs(j_grid))
    passed = worst_cells <= 1.0 and worst_cost <= cost_rtol
    return CheckResult("direct_grid", passed, worst_cost, cost_rtol, detail=f"max offset {worst_cells:.3f} cells")


def check_decomposition_identity(cfg: ExperimentConfig, spec: OcpSpec, samples: int = 20,
                                 rtol: float = 1e-9) -> CheckResult:
    """Stepwise decomposition of ``V_{k+1} - V_k`` on a short closed-loop run."""
    nmpc = replace(cfg.nmpc, duration=samples * cfg.nmpc.sample_time)
    log = run_closed_loop(np.array(cfg.x0), spec, nmpc, shooting=cfg.solver)
    rep = report(log, diagnostics_config(log, spec), spec)
    worst = float(np.max(rep.identity_errors)) if rep.identity_errors.size else 0.0
    return CheckResult("decomposition_identity", worst <= rtol, worst, rtol)


def run_battery(cfg: ExperimentConfig, corrupted_jacobian: bool = False, direct_samples: int = 5) -> List[CheckResult]:
    rng = np.random.default_rng(cfg.seed)
    model = cfg.build_model()
    if corrupted_jacobian:
        model = corrupt_jacobian(model)
    spec = cfg.build_spec(model)
    x0 = np.array(cfg.x0)
    checks = [
        lambda: check_jacobian_fd(spec, x0, rng),
        lambda: check_costate_fd(spec, x0, rng),
        lambda: check_stationarity(spec, x0, rng),
        check_rk4_order,
        check_lq_riccati,
        lambda: check_hamiltonian_argmin(spec, x0, rng),
        lambda: check_direct_grid(cfg.build_spec(), rng, samples=direct_samples, steps=cfg.nmpc.horizon_steps),
        lambda: check_decomposition_identity(cfg, spec),
    ]
    results = []
    for check in checks:
        start = time.perf_counter()
        result = check()
        result.seconds = time.perf_counter() - start
        results.append(result)
    return results


def format_table(results: List[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  {'value':>12}  {'tolerance':>10}  detail"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status:<6}  {r.value:>12.4e}  {r.tolerance:>10.3e}  {r.detail}")
    return "\n".join(lines)
