"""Gradient descent on the residual optimum for online weighted flow-time scheduling."""
from .core import Instance, Job, ScheduleTrace, metrics, validate_instance
from .residual import RemainingState, ResidualConfig, solve_residual
from .sim import SimConfig, offline_opt_fractional, offline_opt_integral_dp, simulate

__version__ = "0.1.0"

__all__ = [
    "Instance", "Job", "ScheduleTrace", "metrics", "validate_instance",
    "RemainingState", "ResidualConfig", "solve_residual",
    "SimConfig", "offline_opt_fractional", "offline_opt_integral_dp", "simulate",
]
