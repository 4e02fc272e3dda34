"""Gradient projection methods for bound-constrained quantum optimal control."""

from .base import ControlProblem, Evaluation
from .closed import ClosedObjective, ClosedProblem, ClosedSystem, Coupling
from .controls import BoxConstraint, ControlGrid, PiecewiseWeight, bv_metric, jitter_ratio
from .estimator import GradientProjection
from .gpm import GPMConfig, GPMError, IterationTrace, gpm_run, gpm_step, pmp_residual
from .gradcheck import gradcheck
from .integrate import CauchyCounter, IntegrationError, IntegratorConfig
from .lindblad import LindbladChannel, OpenObjective, OpenProblem, OpenSystem
from .problems import ProblemSpec, all_problems, get_problem

__version__ = "0.1.0"

__all__ = [
    "BoxConstraint", "CauchyCounter", "ClosedObjective", "ClosedProblem", "ClosedSystem",
    "ControlGrid", "ControlProblem", "Coupling", "Evaluation", "GPMConfig", "GPMError",
    "GradientProjection", "IntegrationError", "IntegratorConfig", "IterationTrace",
    "LindbladChannel", "OpenObjective", "OpenProblem", "OpenSystem", "PiecewiseWeight",
    "ProblemSpec", "all_problems", "bv_metric", "get_problem", "gpm_run", "gpm_step",
    "gradcheck", "jitter_ratio", "pmp_residual",
]
