"""Lyapunov feedback control of quantum systems with power- and strength-constrained designs."""
__version__ = "0.1.0"

from .designs import (
    ControlDesign,
    ControlProblem,
    Conventional,
    PowerConstrained,
    StrengthConstrained,
    compute_T,
)
from .dynamics import IntegratorConfig, LindbladChannel, Trajectory, run_trajectory
from .errors import OptLyapError

__all__ = [
    "ControlDesign",
    "ControlProblem",
    "Conventional",
    "PowerConstrained",
    "StrengthConstrained",
    "compute_T",
    "IntegratorConfig",
    "LindbladChannel",
    "Trajectory",
    "run_trajectory",
    "OptLyapError",
]
