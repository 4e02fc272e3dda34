"""Gradient projection iterations, stopping rules and iteration accounting.

All variants take descent steps ``c - alpha * grad`` followed by a nodewise
clamp into the box, so every iterate satisfies the bounds exactly.
"""

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .controls import ControlGrid, bv_metric, jitter_ratio, l2_inner
from .integrate import CauchyCounter, IntegrationError
from .search import SearchBox, SearchBudget, anneal_box, nelder_mead_box

logger = logging.getLogger(__name__)

VARIANTS = ("gpm1_fixed", "gpm1_search", "gpm1_adaptive", "gpm2_fixed", "gpm2_search",
            "gpm3_fixed")
SEARCHES = ("nelder_mead", "anneal")


@dataclass(frozen=True)
class GPMConfig:
    """Variant, step parameters and stopping thresholds of one GPM run.

    Parameters
    ----------
    variant : str
        One of ``VARIANTS``.
    alpha, beta, xi : float
        Fixed step, inertial and second inertial weights.
    alpha_box, beta_box : (float, float)
        Search intervals for the line-search variants.
    beta_bar0 : float or None
        If set, the 2d search caps ``beta`` at ``0.99 * beta_bar_k`` with
        ``beta_bar_{k+1} = beta_shrink * beta_bar_k`` (replaces ``beta_box[1]``).
    search : str
        ``"nelder_mead"`` or ``"anneal"``.
    search_budget : int or None
        Trial evaluations per search; defaults to 30 (1d) and 60 (2d).
    search_restarts : int
        Restarts in a tenfold smaller alpha box after a search without decrease.
    k_hat, y_percent, theta, reset_to_best :
        Adaptive-step parameters.
    max_iterations, eps_terminal, eps_objective, eps_delta :
        Stopping rules; ``eps_delta = 0`` disables the stagnation test.
    """

    variant: str = "gpm2_fixed"
    alpha: float = 0.1
    beta: float = 0.5
    xi: float = 0.0
    alpha_box: tuple = (0.0, 10.0)
    beta_box: tuple = (0.0, 0.8)
    beta_bar0: float | None = None
    beta_shrink: float = 0.99
    search: str = "nelder_mead"
    search_budget: int | None = None
    search_restarts: int = 2
    seed: int = 0
    k_hat: int = 5
    y_percent: float = 5.0
    theta: float = 0.4
    reset_to_best: bool = True
    max_iterations: int = 2000
    eps_terminal: float = 1e-5
    eps_objective: float = 1e-3
    eps_delta: float = 1e-8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown GPM variant {self.variant!r}")
        if self.search not in SEARCHES:
            raise ValueError(f"unknown search method {self.search!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.variant.startswith("gpm2") or self.variant.startswith("gpm3"):
            if not 0.0 <= self.beta < 1.0:
                raise ValueError("beta must lie in [0, 1)")
        if self.variant == "gpm3_fixed" and not 0.0 < self.xi < self.beta < 1.0:
            raise ValueError("GPM-3 needs 0 < xi < beta < 1")
        lo, hi = self.alpha_box
        if not 0.0 <= lo < hi:
            raise ValueError("alpha search box needs 0 <= lo < hi")
        blo, bhi = self.beta_box
        if not 0.0 <= blo < bhi < 1.0:
            raise ValueError("beta search box needs 0 <= lo < hi < 1")
        if self.beta_bar0 is not None and not 0.0 < self.beta_bar0 < 1.0:
            raise ValueError("beta_bar0 must lie in (0, 1)")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.k_hat < 1 or self.y_percent <= 0:
            raise ValueError("k_hat must be >= 1 and y_percent > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return GPMConfig(**d)


@dataclass
class IterationRecord:
    k: int
    objective: float
    terminal: float
    integral_state: float
    integral_control: float
    cauchy_count: int
    bv: float
    alpha: float
    beta: float
    best_objective: float
    best_k: int


TRACE_COLUMNS = [f for f in IterationRecord.__dataclass_fields__]


@dataclass
class IterationTrace:
    """Per-iteration history of a run plus its outcome."""

    records: list = field(default_factory=list)
    stop_reason: str = ""
    wall_time: float = 0.0
    final: object = None
    problem: str = ""
    variant: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self):
        return self.records[-1].k if self.records else 0

    @property
    def cauchy_count(self):
        return self.records[-1].cauchy_count if self.records else 0

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                vals = {}
                for c in TRACE_COLUMNS:
                    kind = IterationRecord.__dataclass_fields__[c].type
                    vals[c] = int(row[c]) if kind in (int, "int") else float(row[c])
                out.records.append(IterationRecord(**vals))
        return out

    def summary(self, include_time=True):
        """JSON-ready outcome; keys are written in sorted order."""
        last = self.records[-1]
        d = {
            "problem": self.problem,
            "variant": self.variant,
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "cauchy_count": self.cauchy_count,
            "objective": last.objective,
            "terminal": last.terminal,
            "integral_state": last.integral_state,
            "integral_control": last.integral_control,
            "bv": last.bv,
            "best_objective": last.best_objective,
            "best_k": last.best_k,
        }
        if self.final is not None:
            d["jitter_ratio"] = jitter_ratio(self.final.control)
        if include_time:
            d["wall_time"] = self.wall_time
        return d

    def write_summary(self, path, include_time=True, extra=None):
        d = self.summary(include_time)
        d.update(extra or {})
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(d, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class GPMError(RuntimeError):
    """Numerical failure inside a GPM run (non-finite objective, failed solve)."""


# -- building blocks ---------------------------------------------------------

def projected_step(u_k, grad, lo, hi, alpha, beta=0.0, xi=0.0, u_prev=None, u_prev2=None):
    """``Pr(u_k - alpha grad + beta (u_k - u_prev) + xi (u_prev - u_prev2))``."""
    x = u_k.values - alpha * grad.values
    if beta and u_prev is not None:
        x = x + beta * (u_k.values - u_prev.values)
    if xi and u_prev is not None and u_prev2 is not None:
        x = x + xi * (u_prev.values - u_prev2.values)
    return u_k.with_values(np.minimum(np.maximum(x, lo), hi))


def gpm_step(problem, u_k, alpha, beta=0.0, xi=0.0, u_prev=None, u_prev2=None,
             gradient=None, counter=None):
    """One projected step; computes the gradient (2 solves) unless given."""
    _check_layout(u_k, u_prev, u_prev2)
    if gradient is None:
        gradient = problem.gradient_at(u_k, counter)
    lo, hi = problem.bounds()
    return projected_step(u_k, gradient, lo, hi, alpha, beta, xi, u_prev, u_prev2)


def _check_layout(*grids):
    ref = grids[0]
    for g in grids[1:]:
        if g is not None and not ref.same_layout(g):
            raise ValueError("controls do not share grid nodes and components")


def pmp_residual(problem, control, alpha, gradient=None, counter=None):
    """``max |c - Pr(c - alpha grad)|`` over nodes and components."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if gradient is None:
        gradient = problem.gradient_at(control, counter)
    lo, hi = problem.bounds()
    moved = np.minimum(np.maximum(control.values - alpha * gradient.values, lo), hi)
    return float(np.max(np.abs(control.values - moved)))


def first_variation(problem, control, direction, gradient=None, counter=None):
    """Trapezoid ``integral <grad(t), delta(t)> dt``."""
    _check_layout(control, direction)
    if gradient is None:
        gradient = problem.gradient_at(control, counter)
    return l2_inner(gradient, direction)


# -- the run loop -------------------------------------------------------------

class _Run:
    def __init__(self, problem, cfg, counter):
        self.problem = problem
        self.cfg = cfg
        self.counter = counter
        self.lo, self.hi = problem.bounds()
        self.records = []
        self.best = None          # (evaluation, k)
        self.best_grad = None
        self.alphas = []
        self.alpha_k = cfg.alpha
        self.beta_bar = cfg.beta_bar0
        # warm start of the Nelder-Mead searches
        self.last_alpha = cfg.alpha
        self.last_beta = cfg.beta

    def evaluate(self, control):
        try:
            ev = self.problem.evaluate(control, self.counter)
        except IntegrationError as exc:
            raise GPMError(str(exc)) from exc
        if not math.isfinite(ev.objective):
            raise GPMError("non-finite objective value")
        return ev

    def gradient(self, ev):
        try:
            g = self.problem.gradient(ev, self.counter)
        except IntegrationError as exc:
            raise GPMError(str(exc)) from exc
        if not np.all(np.isfinite(g.values)):
            raise GPMError("non-finite gradient")
        if self.best is not None and ev is self.best[0]:
            self.best_grad = g
        return g

    def record(self, k, ev, alpha, beta):
        if self.best is None or ev.objective < self.best[0].objective:
            self.best = (ev, k)
            self.best_grad = None
        self.records.append(IterationRecord(
            k, ev.objective, ev.terminal, ev.integrals.get("state", 0.0),
            ev.integrals.get("control", 0.0), self.counter.count, bv_metric(ev.control),
            alpha, beta, self.best[0].objective, self.best[1]))

    def stop_terminal(self, ev):
        c = self.cfg
        return ev.terminal < c.eps_terminal and ev.objective < c.eps_objective

    def search(self, ev, grad, u_prev, two_d):
        """Minimise the objective over the step parameters; reuses the winning evaluation.

        If a search finds no decrease, it is restarted in an alpha box shrunk
        tenfold (``search_restarts`` times at most).
        """
        c = self.cfg
        a_lo, a_hi = c.alpha_box
        b_lo = c.beta_box[0]
        b_hi = c.beta_box[1] if self.beta_bar is None else 0.99 * self.beta_bar
        b_hi = max(b_hi, b_lo + 1e-12)
        budget = SearchBudget(c.search_budget or (60 if two_d else 30))
        # the current point is a free candidate: alpha = beta = 0 reproduces it
        seen = {(0.0, 0.0): ev.objective}
        cand = [(ev.objective, 0.0, 0.0, ev)]

        def f(x):
            a, b = (x[0], x[1]) if two_d else (x, 0.0)
            key = (float(a), float(b))
            if key in seen:
                return seen[key]
            u = projected_step(ev.control, grad, self.lo, self.hi, a, b, 0.0, u_prev)
            try:
                trial = self.evaluate(u)
            except GPMError as exc:
                logger.info("trial step failed: %s", exc)
                seen[key] = math.inf
                return math.inf
            seen[key] = trial.objective
            cand.append((trial.objective, key[0], key[1], trial))
            return trial.objective

        for attempt in range(c.search_restarts + 1):
            if two_d:
                box = SearchBox((a_lo, b_lo), (a_hi, b_hi))
                start = (min(self.last_alpha, a_hi), min(self.last_beta, b_hi))
            else:
                box = SearchBox(a_lo, a_hi)
                start = min(self.last_alpha, a_hi)
            if c.search == "anneal":
                anneal_box(f, box, budget, seed=c.seed + 1000 * attempt + len(self.records))
            else:
                nelder_mead_box(f, box, budget, x0=start)
            if any(v[0] < ev.objective for v in cand[1:]):
                break
            a_hi = a_lo + 0.1 * (a_hi - a_lo)
        if self.beta_bar is not None and two_d:
            self.beta_bar *= c.beta_shrink
        # first encountered minimum wins
        best = min(range(len(cand)), key=lambda i: (cand[i][0], i))
        _, a, b, trial = cand[best]
        if a > 0:
            self.last_alpha = a
            if two_d:
                self.last_beta = b
        return trial, a, b


def gpm_run(problem, u0=None, cfg=GPMConfig(), counter=None, callback=None):
    """Iterate from ``u0`` until a stopping rule fires.

    Returns ``(u_final, trace)``. Fixed-step variants cost one evaluation for
    ``u0`` plus two solves per iteration; search variants add one solve per
    trial step.
    """
    t_start = time.perf_counter()
    counter = counter or CauchyCounter()
    if u0 is None:
        u0 = problem.initial_control()
    elif not isinstance(u0, ControlGrid):
        u0 = ControlGrid(problem.horizon, u0)
    viol = 0.0 if problem.box is None else problem.box.violation(u0)
    if viol > 0:
        logger.warning("initial control violates the box by %.3g; projecting", viol)
    run = _Run(problem, cfg, counter)
    u = u0.with_values(np.minimum(np.maximum(u0.values, run.lo), run.hi))
    ev = run.evaluate(u)
    run.record(0, ev, 0.0, 0.0)
    u_prev = u_prev2 = None
    k = 0
    reason = "terminal" if run.stop_terminal(ev) else None
    v = cfg.variant
    while reason is None:
        if k >= cfg.max_iterations:
            reason = "max_iterations"
            break
        grad = run.gradient(ev)
        beta = xi = 0.0
        if v == "gpm1_fixed":
            alpha = cfg.alpha
            new = None
        elif v == "gpm2_fixed":
            alpha, beta = cfg.alpha, (cfg.beta if k >= 1 else 0.0)
            new = None
        elif v == "gpm3_fixed":
            alpha = cfg.alpha
            beta = cfg.beta if k >= 1 else 0.0
            xi = cfg.xi if k >= 2 else 0.0
            new = None
        elif v == "gpm1_search":
            new, alpha, _ = run.search(ev, grad, None, two_d=False)
        elif v == "gpm2_search":
            new, alpha, beta = run.search(ev, grad, u_prev, two_d=k >= 1)
        else:
            new, alpha, ev, grad = _adaptive(run, k, ev, grad)
        if new is None:
            u_new = projected_step(ev.control, grad, run.lo, run.hi, alpha, beta, xi,
                                   u_prev, u_prev2)
            new = run.evaluate(u_new)
        k += 1
        delta = abs(new.objective - ev.objective)
        u_prev2, u_prev = u_prev, ev.control
        ev = new
        run.record(k, ev, alpha, beta)
        if callback is not None:
            callback(k, ev)
        if run.stop_terminal(ev):
            reason = "terminal"
        elif cfg.eps_delta > 0 and delta < cfg.eps_delta:
            reason = "stagnation"
    trace = IterationTrace(run.records, reason, time.perf_counter() - t_start, ev,
                           getattr(problem, "name", ""), v)
    return ev.control, trace


def _adaptive(run, k, ev, grad):
    """Step-size rule of the adaptive one-step variant.

    Returns ``(new_evaluation_or_None, alpha, current_evaluation, gradient)``;
    the current point may be replaced by the best one so far.
    """
    c = run.cfg
    if k < c.k_hat:
        new, alpha, _ = run.search(ev, grad, None, two_d=False)
        run.alphas.append(alpha)
        return new, alpha, ev, grad
    if k == c.k_hat:
        pos = [a for a in run.alphas if a > 0]
        run.alpha_k = float(np.exp(np.mean(np.log(pos)))) if pos else c.alpha
        return None, run.alpha_k, ev, grad
    best_ev = run.best[0]
    if ev.objective <= 0:
        logger.info("non-positive objective; adaptation skipped")
    elif 100.0 * (ev.objective - best_ev.objective) / ev.objective > c.y_percent:
        tau = best_ev.objective / ev.objective
        run.alpha_k = c.theta * run.alpha_k + (1.0 - c.theta) * tau * run.alpha_k
        if c.reset_to_best:
            g = run.best_grad
            if g is None:
                g = run.gradient(best_ev)
            return None, run.alpha_k, best_ev, g
    return None, run.alpha_k, ev, grad
