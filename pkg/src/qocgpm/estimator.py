"""scikit-learn style front end to :func:`qocgpm.gpm.gpm_run`."""

from dataclasses import fields

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .base import ControlProblem
from .gpm import GPMConfig, gpm_run, pmp_residual
from .integrate import CauchyCounter


class GradientProjection(BaseEstimator):
    """Gradient projection optimiser for bound-constrained control problems.

    Hyperparameters mirror :class:`~qocgpm.gpm.GPMConfig`, so the estimator
    works with ``get_params``/``set_params``/``clone``. ``fit`` takes a
    control problem (or a problem-library spec) instead of a data matrix.

    Attributes
    ----------
    control_ : ControlGrid
        Best control found (the last iterate for fixed-step variants).
    trace_ : IterationTrace
        Per-iteration history with Cauchy counts.
    objective_, terminal_ : float
        Objective and terminal part at ``control_``.
    n_iter_, n_cauchy_ : int
    stop_reason_ : str
    """

    def __init__(self, variant="gpm2_fixed", alpha=0.1, beta=0.5, xi=0.0,
                 alpha_box=(0.0, 10.0), beta_box=(0.0, 0.8), beta_bar0=None, beta_shrink=0.99,
                 search="nelder_mead", search_budget=None, search_restarts=2, seed=0,
                 k_hat=5, y_percent=5.0, theta=0.4, reset_to_best=True,
                 max_iterations=2000, eps_terminal=1e-5, eps_objective=1e-3, eps_delta=1e-8):
        self.variant = variant
        self.alpha = alpha
        self.beta = beta
        self.xi = xi
        self.alpha_box = alpha_box
        self.beta_box = beta_box
        self.beta_bar0 = beta_bar0
        self.beta_shrink = beta_shrink
        self.search = search
        self.search_budget = search_budget
        self.search_restarts = search_restarts
        self.seed = seed
        self.k_hat = k_hat
        self.y_percent = y_percent
        self.theta = theta
        self.reset_to_best = reset_to_best
        self.max_iterations = max_iterations
        self.eps_terminal = eps_terminal
        self.eps_objective = eps_objective
        self.eps_delta = eps_delta

    @classmethod
    def from_config(cls, cfg):
        return cls(**{f.name: getattr(cfg, f.name) for f in fields(GPMConfig)})

    def get_config(self):
        """Validated :class:`GPMConfig` built from the current parameters."""
        return GPMConfig(**{f.name: getattr(self, f.name) for f in fields(GPMConfig)})

    @staticmethod
    def _problem(problem):
        prob = getattr(problem, "problem", problem)
        if not isinstance(prob, ControlProblem):
            raise TypeError("fit expects a ControlProblem or a ProblemSpec")
        return prob

    def fit(self, problem, u0=None, callback=None):
        """Run the configured GPM variant from ``u0`` (default: the problem's guess)."""
        cfg = self.get_config()
        prob = self._problem(problem)
        counter = CauchyCounter()
        control, trace = gpm_run(prob, u0, cfg, counter=counter, callback=callback)
        self.problem_ = prob
        self.control_ = control
        self.trace_ = trace
        self.objective_ = trace.final.objective
        self.terminal_ = trace.final.terminal
        self.n_iter_ = trace.iterations
        self.n_cauchy_ = trace.cauchy_count
        self.stop_reason_ = trace.stop_reason
        return self

    def _check_fitted(self):
        if not hasattr(self, "control_"):
            raise NotFittedError("GradientProjection is not fitted yet; call fit first")

    def score(self, problem=None):
        """Negative objective at the fitted control (larger is better)."""
        self._check_fitted()
        if problem is None:
            return -self.objective_
        return -self._problem(problem).objective(self.control_)

    def pmp_residual(self, alpha=None):
        """Projected-gradient fixed-point residual at ``control_`` (two Cauchy solves)."""
        self._check_fitted()
        return pmp_residual(self.problem_, self.control_, self.alpha if alpha is None else alpha)
