"""Capacity planning for multiserver loss systems with a single retrial-orbit slot."""

from .bounds import InterarrivalLST, erlang_b, gi_loss
from .engine import SystemConfig, SystemState, Simulation, TrajectoryStats, replicate, run
from .estimators import LossEstimate, Method, aggregate, loss_sdn8, loss_sdn9, loss_sdn10, theorem1_residuals
from .markov import build_balance_system, loss_markov, solve_stationary, stationary
from .optimizer import MarkovEvaluator, SimulationEvaluator, minimal_servers, upper_bound_servers
from .processes import PointProcessSpec, RngStream, log_likelihood_ratio, next_increment

__version__ = "0.1.0"

__all__ = [
    "InterarrivalLST", "erlang_b", "gi_loss",
    "SystemConfig", "SystemState", "Simulation", "TrajectoryStats", "replicate", "run",
    "LossEstimate", "Method", "aggregate", "loss_sdn8", "loss_sdn9", "loss_sdn10", "theorem1_residuals",
    "build_balance_system", "loss_markov", "solve_stationary", "stationary",
    "MarkovEvaluator", "SimulationEvaluator", "minimal_servers", "upper_bound_servers",
    "PointProcessSpec", "RngStream", "log_likelihood_ratio", "next_increment",
]
