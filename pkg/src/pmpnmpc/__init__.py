"""Nonlinear model predictive control through the Pontryagin minimum principle.

Each prediction horizon is solved as a state/co-state boundary value problem
by single shooting. A direct piecewise-constant baseline, post-hoc stability
diagnostics and a CSV-emitting command line complete the package.
"""

from .config import ExperimentConfig, default_config_path, load_config, loads_config, serialize
from .diagnostics import DiagnosticsConfig, DiagnosticsReport, diagnostics_config, report
from .direct import DirectConfig, DirectSolution, run_closed_loop_direct, solve_direct
from .dynamics import LotkaVolterraParams, SystemModel, eval_dynamics, make_linear, make_lotka_volterra
from .estimator import DirectNMPC, PontryaginNMPC
from .exceptions import (
    ConfigurationError,
    DiagnosticsUnavailableError,
    DimensionError,
    IntegrationBlowupError,
    NMPCError,
    SingularJacobianError,
)
from .hamiltonian import (
    CostWeights,
    InputBox,
    OcpSpec,
    PenaltySpec,
    ReferenceSignal,
    circle_reference,
    constant_reference,
    disk_exclusion,
)
from .integrator import TimeGrid, Trajectory, integrate, integrate_coupled_forward
from .loop import ClosedLoopLog, NmpcConfig, run_closed_loop
from .shooting import ShootingConfig, TpbvpSolution, solve

__version__ = "0.1.0"

__all__ = [
    "ClosedLoopLog", "ConfigurationError", "CostWeights", "DiagnosticsConfig", "DiagnosticsReport",
    "DiagnosticsUnavailableError", "DimensionError", "DirectConfig", "DirectNMPC", "DirectSolution",
    "ExperimentConfig", "InputBox", "IntegrationBlowupError", "LotkaVolterraParams", "NMPCError",
    "NmpcConfig", "OcpSpec", "PenaltySpec", "PontryaginNMPC", "ReferenceSignal", "ShootingConfig",
    "SingularJacobianError", "SystemModel", "TimeGrid", "TpbvpSolution", "Trajectory",
    "circle_reference", "constant_reference", "diagnostics_config", "disk_exclusion", "eval_dynamics",
    "default_config_path", "integrate", "integrate_coupled_forward", "load_config", "loads_config", "make_linear",
    "make_lotka_volterra", "report", "run_closed_loop", "run_closed_loop_direct", "serialize", "solve",
    "solve_direct",
]
