"""Shared problem interface consumed by the gradient projection engine."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .controls import ControlGrid, DEFAULT_GRID, bv_metric, gauss_points, l2_inner, project
from .integrate import IntegratorConfig

logger = logging.getLogger(__name__)


@dataclass
class Evaluation:
    """Objective value of one control plus whatever the gradient needs later.

    ``integrals`` maps a part name (``"control"``, ``"state"``) to its value;
    ``cache`` holds forward trajectories so the gradient costs one extra
    (backward) solve per propagated state.
    """

    control: ControlGrid
    objective: float
    terminal: float
    integrals: dict = field(default_factory=dict)
    cache: object = None

    @property
    def bv(self):
        return bv_metric(self.control)


class ControlProblem:
    """Bound-constrained optimal control problem on a uniform control grid.

    Subclasses implement :meth:`evaluate` and :meth:`gradient`.
    """

    n_components = 0

    def __init__(self, horizon, box, initial_guess=None, n_intervals=DEFAULT_GRID,
                 integrator=None, name=""):
        self.horizon = float(horizon)
        self.box = box
        self.n_intervals = int(n_intervals)
        self.integrator = integrator or IntegratorConfig()
        self.initial_guess = initial_guess
        self.name = name

    @property
    def times(self):
        return np.linspace(0.0, self.horizon, self.n_intervals + 1)

    def bounds(self):
        if self.box is None:
            shape = (self.n_intervals + 1, self.n_components)
            return np.full(shape, -np.inf), np.full(shape, np.inf)
        return self.box.bounds(self.times)

    def zero_control(self):
        return ControlGrid.zeros(self.horizon, self.n_components, self.n_intervals)

    def initial_control(self):
        """Feasible starting control (the problem's guess, projected)."""
        if self.initial_guess is None:
            return self.zero_control()
        u0 = ControlGrid.from_function(self.horizon, self.initial_guess,
                                       self.n_components, self.n_intervals)
        return self.project(u0)

    def project(self, control):
        return control if self.box is None else project(control, self.box)

    def check_control(self, control):
        if not isinstance(control, ControlGrid):
            control = ControlGrid(self.horizon, control)
        if control.values.shape != (self.n_intervals + 1, self.n_components):
            raise ValueError(
                f"control has shape {control.values.shape}, expected "
                f"{(self.n_intervals + 1, self.n_components)}")
        if abs(control.horizon - self.horizon) > 1e-12 * self.horizon:
            raise ValueError("control horizon does not match the problem")
        viol = 0.0 if self.box is None else self.box.violation(control)
        if viol > 0:
            logger.warning("control violates its box by %.3g", viol)
        return control

    def with_grid(self, n_intervals):
        """Shallow copy of the problem on a different control grid."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.n_intervals = int(n_intervals)
        return clone

    def evaluate(self, control, counter=None):
        raise NotImplementedError

    def adjoint(self, evaluation, counter=None):
        raise NotImplementedError

    def dynamic_density(self, evaluation, adjoint, times):
        """State-dependent part of the gradient at arbitrary ``times``."""
        raise NotImplementedError

    def control_gradient(self, control):
        """Gradient of the discretised control penalty (node values)."""
        return np.zeros(control.values.shape)

    def gradient(self, evaluation, counter=None):
        """Node-sampled gradient; costs the backward solve(s)."""
        control = evaluation.control
        adj = self.adjoint(evaluation, counter)
        dyn = self.dynamic_density(evaluation, adj, control.times)
        return control.with_values(dyn + self.control_gradient(control))

    def exact_directional_derivative(self, evaluation, direction, counter=None):
        """Derivative along ``direction`` without grid quadrature error.

        The state-dependent density is integrated against the piecewise-linear
        direction by Gauss quadrature from the dense trajectories; the penalty
        part uses the trapezoid rule the objective itself is built with.
        """
        control = evaluation.control
        adj = self.adjoint(evaluation, counter)
        gt, gw = gauss_points(control.times)
        dens = self.dynamic_density(evaluation, adj, gt)
        dyn = float(np.sum(gw * np.sum(dens * direction.interpolate(gt), axis=1)))
        pen = control.with_values(self.control_gradient(control))
        return dyn + l2_inner(pen, direction)

    def objective(self, control, counter=None):
        return self.evaluate(control, counter).objective

    def gradient_at(self, control, counter=None):
        """Gradient at ``control``; costs the forward and the backward solves."""
        return self.gradient(self.evaluate(control, counter), counter)

    def directional_derivative(self, gradient, direction):
        return l2_inner(gradient, direction)
