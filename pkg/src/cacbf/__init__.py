"""Composite adaptive control barrier functions with a robust-margin baseline."""

from .adaptation import AdaptConfig, AdaptState, adaptation_rate, project
from .controller import ControllerConfig, RobustConfig, compute_control
from .metrics import MetricsReport, compute_metrics, containment_check
from .model import AffineSystem, BarrierSpec, LyapunovSpec
from .qp import QpProblem, QpSolution, certify, solve_qp
from .scenarios import Scenario, ScenarioError, build
from .simulator import SafetyViolation, Trajectory, run

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "AdaptState", "AffineSystem", "BarrierSpec", "ControllerConfig",
    "LyapunovSpec", "MetricsReport", "QpProblem", "QpSolution", "RobustConfig",
    "SafetyViolation", "Scenario", "ScenarioError", "Trajectory", "adaptation_rate", "build",
    "certify", "compute_control", "compute_metrics", "containment_check", "project", "run",
    "solve_qp",
]
