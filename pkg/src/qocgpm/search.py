"""Bounded derivative-free minimisers for step-size searches.

Both wrap SciPy: Nelder-Mead with bound clipping and dual annealing with
the local search switched off. The wrappers add a hard evaluation budget,
exact clamping of the returned point and a guarantee that the box centre is
always among the evaluated candidates.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import dual_annealing, minimize


@dataclass(frozen=True)
class SearchBox:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not 1 <= len(lo) <= 2:
            raise ValueError("search box must have 1 or 2 dimensions")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError("search box needs lo < hi in every dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def ndim(self):
        return len(self.lo)

    @property
    def center(self):
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    def clamp(self, x):
        return np.minimum(np.maximum(np.asarray(x, dtype=float), self.lo), self.hi)


@dataclass(frozen=True)
class SearchBudget:
    max_evals: int = 30
    xatol: float = 1e-6
    fatol: float = 1e-12

    def __post_init__(self):
        if self.max_evals < 3:
            raise ValueError("search budget must allow at least 3 evaluations")


@dataclass
class SearchResult:
    x: np.ndarray
    fun: float
    n_evals: int
    exhausted: bool


class _BudgetExhausted(Exception):
    pass


class _Tracked:
    """Objective wrapper: clamps, counts, enforces the budget, keeps the best."""

    def __init__(self, f, box, budget):
        self.f, self.box, self.budget = f, box, budget
        self.n = 0
        self.best_x, self.best_f = None, np.inf

    def __call__(self, x):
        if self.n >= self.budget.max_evals:
            raise _BudgetExhausted
        x = self.box.clamp(np.atleast_1d(x))
        self.n += 1
        val = float(self.f(x if x.size > 1 else float(x[0])))
        if not np.isfinite(val):
            val = np.inf
        if val < self.best_f:
            self.best_x, self.best_f = x.copy(), val
        return val

    def result(self, exhausted):
        if self.best_x is None:
            raise RuntimeError("search produced no finite objective value")
        return SearchResult(self.best_x, self.best_f, self.n, exhausted)


def nelder_mead_box(f, box, budget=SearchBudget(), x0=None):
    """Nelder-Mead with 5%-of-range initial offsets around ``x0`` (default: centre).

    Offsets point inwards when ``x0`` sits near an upper bound. A start away
    from the centre costs one extra evaluation at the centre.
    """
    tr = _Tracked(f, box, budget)
    span = np.array(box.hi) - np.array(box.lo)
    if x0 is None:
        c = box.center
    else:
        c = box.clamp(np.atleast_1d(x0))
        tr(box.center)
    simplex = [c]
    for i in range(box.ndim):
        step = 0.05 * span[i] * np.eye(box.ndim)[i]
        simplex.append(c + step if c[i] + step[i] <= box.hi[i] else c - step)
    exhausted = False
    try:
        minimize(tr, c, method="Nelder-Mead", bounds=list(zip(box.lo, box.hi)),
                 options={"initial_simplex": np.array(simplex), "maxfev": budget.max_evals,
                          "xatol": budget.xatol, "fatol": budget.fatol})
    except _BudgetExhausted:
        exhausted = True
    return tr.result(exhausted or tr.n >= budget.max_evals)


def anneal_box(f, box, budget=SearchBudget(), seed=None, visit=2.62,
               initial_temp=5230.0, restart_temp_ratio=2e-5):
    """Generalised simulated annealing without local search, started at the centre."""
    tr = _Tracked(f, box, budget)
    exhausted = False
    try:
        dual_annealing(tr, list(zip(box.lo, box.hi)), maxfun=budget.max_evals,
                       maxiter=10 * budget.max_evals, seed=seed, no_local_search=True,
                       visit=visit, initial_temp=initial_temp,
                       restart_temp_ratio=restart_temp_ratio, x0=box.center)
    except _BudgetExhausted:
        exhausted = True
    return tr.result(exhausted or tr.n >= budget.max_evals)
