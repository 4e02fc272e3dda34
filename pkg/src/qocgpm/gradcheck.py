"""Finite-difference audit of the adjoint gradients."""

from dataclasses import dataclass, field

import numpy as np

from .controls import ControlGrid
from .integrate import IntegratorConfig


@dataclass
class GradcheckReport:
    h: float
    rel_errors: dict = field(default_factory=dict)   # block -> list of relative errors

    @property
    def max_rel_error(self):
        vals = [e for errs in self.rel_errors.values() for e in errs]
        return max(vals) if vals else 0.0

    def block_max(self, block):
        return max(self.rel_errors[block])

    def lines(self):
        out = [f"h={self.h:g} max_rel_error={self.max_rel_error:.3e}"]
        for block, errs in self.rel_errors.items():
            out.append(f"  {block}: trials={len(errs)} max={max(errs):.3e}")
        return out


def _blocks(problem):
    """Component index sets that are checked separately."""
    n_u = getattr(problem.system, "n_coherent", problem.n_components)
    blocks = {"coherent": list(range(n_u))}
    if problem.n_components > n_u:
        blocks["incoherent"] = list(range(n_u, problem.n_components))
    return blocks


def _smooth(rng, times, horizon, k):
    """Random smooth profiles, shape ``(times.size, k)``, sup-norm at most one."""
    s = times / horizon
    out = np.zeros((times.size, k))
    for j in range(k):
        for m in range(1, 5):
            out[:, j] += rng.normal() / m * np.cos(m * np.pi * s + rng.uniform(0, 2 * np.pi))
        out[:, j] /= max(1e-12, np.max(np.abs(out[:, j])))
    return out


def random_feasible_control(problem, rng, scale=1.0):
    """Smooth control strictly inside the box (clipped to ``[-scale, scale]`` magnitude)."""
    lo, hi = problem.bounds()
    lo_e, hi_e = np.maximum(lo, -scale), np.minimum(hi, scale)
    mid, half = 0.5 * (lo_e + hi_e), 0.5 * (hi_e - lo_e)
    prof = _smooth(rng, problem.times, problem.horizon, problem.n_components)
    return ControlGrid(problem.horizon, mid + 0.8 * half * prof)


def random_feasible_direction(problem, rng, components, scale=1.0):
    """Smooth direction supported on ``components`` and vanishing where the box pinches."""
    lo, hi = problem.bounds()
    width = np.minimum(np.minimum(hi, scale) - np.maximum(lo, -scale), 2 * scale)
    d = _smooth(rng, problem.times, problem.horizon, problem.n_components) * 0.5 * width
    mask = np.zeros(problem.n_components, dtype=bool)
    mask[components] = True
    d[:, ~mask] = 0.0
    return ControlGrid(problem.horizon, d)


def fixed_step_problem(problem, substeps=4):
    """Copy of ``problem`` integrated with ``substeps`` fixed steps per control interval."""
    clone = problem.with_grid(problem.n_intervals)
    clone.integrator = IntegratorConfig.fixed(problem.horizon / (substeps * problem.n_intervals))
    return clone


def gradcheck(problem, trials=10, h=1e-5, seed=0, scale=1.0, substeps=4):
    """Analytic vs central-difference directional derivatives.

    Each trial draws a fresh feasible control and one direction per block.
    The relative error is ``|a - fd| / max(|fd|, 1e-8)``. With ``substeps``
    set, both sides use a fixed-step integrator so that the difference
    quotient is not polluted by step-size switching; ``None`` keeps the
    problem's own adaptive integrator.
    """
    if substeps:
        problem = fixed_step_problem(problem, substeps)
    rng = np.random.default_rng(seed)
    report = GradcheckReport(h)
    blocks = _blocks(problem)
    for _ in range(trials):
        u = random_feasible_control(problem, rng, scale)
        ev = problem.evaluate(u)
        for name, comps in blocks.items():
            d = random_feasible_direction(problem, rng, comps, scale)
            analytic = problem.exact_directional_derivative(ev, d)
            fp = problem.objective(u.with_values(u.values + h * d.values))
            fm = problem.objective(u.with_values(u.values - h * d.values))
            fd = (fp - fm) / (2 * h)
            report.rel_errors.setdefault(name, []).append(abs(analytic - fd) / max(abs(fd), 1e-8))
    return report
