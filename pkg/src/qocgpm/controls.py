"""Grid-represented controls, box constraints and envelope functions."""

import csv
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_GRID = 1000
_TIME_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Vector-valued control sampled on ``M + 1`` uniform nodes of ``[0, T]``.

    Between nodes the control is linear. ``values`` has shape ``(M + 1, K)``
    and is stored read-only, so instances can be shared freely.
    """

    horizon: float
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("control values must be a (M + 1, K) array")
        if values.shape[0] < 3:
            raise ValueError("a control grid needs at least M = 2 intervals")
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, horizon, n_components, n_intervals=DEFAULT_GRID):
        return cls(horizon, np.zeros((n_intervals + 1, n_components)))

    @classmethod
    def from_function(cls, horizon, fn, n_components, n_intervals=DEFAULT_GRID):
        """Sample ``fn(t) -> (K,)`` (vectorised over ``t``) at the nodes."""
        t = np.linspace(0.0, horizon, n_intervals + 1)
        vals = np.asarray(fn(t), dtype=float)
        if vals.ndim == 1:
            vals = np.broadcast_to(vals[:, None], (t.size, n_components))
        elif vals.shape == (n_components, t.size):
            vals = vals.T
        return cls(horizon, vals)

    @property
    def n_intervals(self):
        return self.values.shape[0] - 1

    @property
    def n_components(self):
        return self.values.shape[1]

    @property
    def step(self):
        return self.horizon / self.n_intervals

    @property
    def times(self):
        return np.linspace(0.0, self.horizon, self.n_intervals + 1)

    def with_values(self, values):
        return ControlGrid(self.horizon, values)

    def same_layout(self, other):
        return (self.values.shape == other.values.shape
                and self.horizon == other.horizon)

    def at(self, t):
        """Fast scalar interpolation used inside integrator right-hand sides."""
        x = t / self.horizon * self.n_intervals
        m = int(x)
        if m >= self.n_intervals:
            m = self.n_intervals - 1
        elif m < 0:
            m = 0
        w = x - m
        v = self.values
        return v[m] + w * (v[m + 1] - v[m])

    def interpolate(self, t):
        """Piecewise-linear value(s) at time(s) ``t`` inside ``[0, T]``."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < -_TIME_SLACK) or np.any(t_arr > self.horizon * (1 + _TIME_SLACK)):
            raise ValueError(f"time outside [0, {self.horizon}]")
        x = np.clip(t_arr, 0.0, self.horizon) / self.horizon * self.n_intervals
        m = np.minimum(np.floor(x).astype(int), self.n_intervals - 1)
        w = (x - m)[..., None]
        return self.values[m] * (1.0 - w) + self.values[m + 1] * w

    def to_csv(self, path, names=None):
        names = names or [f"u_{k + 1}" for k in range(self.n_components)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", *names])
            for t, row in zip(self.times, self.values):
                writer.writerow([_fmt(t), *(_fmt(v) for v in row)])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(float(data[-1, 0]), data[:, 1:])


def _fmt(x):
    return format(float(x), ".17g")


def sinpi(x):
    """``sin(pi x)`` with exact zeros at integer ``x``."""
    x = np.asarray(x, dtype=float)
    n = np.round(x)
    r = x - n
    sign = np.where(np.mod(n, 2) == 0, 1.0, -1.0)
    return sign * np.sin(np.pi * r)


def sinc_envelope(t, horizon, c_max, q=3):
    """Bound ``c_max * sinc(2^q pi (t/T - 1/2)^q)`` vanishing at both ends.

    The argument is handled as ``pi * x`` with ``x = 2^q (t/T - 1/2)^q`` so
    that ``t = 0`` and ``t = T`` (``x = -1, 1``) give exact zeros.
    """
    if q % 2 != 1:
        raise ValueError("envelope exponent q must be odd")
    x = (2.0 ** q) * (np.asarray(t, dtype=float) / horizon - 0.5) ** q
    small = np.abs(x) < 1e-8 / np.pi
    safe = np.where(small, 1.0, x)
    val = np.where(small, 1.0, sinpi(safe) / (np.pi * safe))
    out = c_max * val
    return float(out) if np.ndim(out) == 0 else out


def shape_function(t, horizon, c_s):
    """Penalty shape ``exp(c_s (t/T - 1/2)^2)``; equals 1 at ``T/2``."""
    out = np.exp(c_s * (np.asarray(t, dtype=float) / horizon - 0.5) ** 2)
    return float(out) if np.ndim(out) == 0 else out


class BoxConstraint:
    """Per-component time-dependent bounds ``lo_k(t) <= c_k(t) <= hi_k(t)``.

    Parameters
    ----------
    lower, upper : sequence of callables
        Vectorised functions of time, one per control component.
    """

    def __init__(self, lower, upper):
        if len(lower) != len(upper):
            raise ValueError("lower and upper bound lists differ in length")
        self.lower = list(lower)
        self.upper = list(upper)
        self._cache = {}

    @property
    def n_components(self):
        return len(self.lower)

    @classmethod
    def constant(cls, lo, hi):
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        return cls([_const(v) for v in lo], [_const(v) for v in hi])

    @classmethod
    def envelope(cls, fn, n_components):
        """Symmetric box ``[-fn(t), fn(t)]`` for every component."""
        return cls([lambda t, f=fn: -f(t)] * n_components, [fn] * n_components)

    def __add__(self, other):
        return BoxConstraint(self.lower + other.lower, self.upper + other.upper)

    def bounds(self, times):
        """Arrays ``(lo, hi)`` of shape ``(len(times), K)``, cached per grid."""
        times = np.asarray(times, dtype=float)
        key = (times.size, float(times[0]), float(times[-1]))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        lo = np.column_stack([np.broadcast_to(f(times), times.shape) for f in self.lower])
        hi = np.column_stack([np.broadcast_to(f(times), times.shape) for f in self.upper])
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound on the grid")
        lo.setflags(write=False)
        hi.setflags(write=False)
        self._cache[key] = (lo, hi)
        return lo, hi

    def violation(self, grid):
        """Largest amount by which ``grid`` leaves the box (0 if feasible)."""
        lo, hi = self.bounds(grid.times)
        v = grid.values
        return float(max(np.max(lo - v), np.max(v - hi), 0.0))


def _const(value):
    return lambda t: np.full(np.shape(t), value, dtype=float)


def project(grid, box):
    """Clamp every node value into its box; idempotent."""
    if box.n_components != grid.n_components:
        raise ValueError("box and control have different component counts")
    lo, hi = box.bounds(grid.times)
    return grid.with_values(np.minimum(np.maximum(grid.values, lo), hi))


def bv_metric(grid):
    """Sum of absolute control values at ``t = 0`` and ``t = T``."""
    return float(np.sum(np.abs(grid.values[0])) + np.sum(np.abs(grid.values[-1])))


def jitter_ratio(grid, edge_fraction=0.05):
    """Largest node-to-node jump near the ends relative to the control range.

    Computed per component; the maximum over components is returned.
    """
    m = max(1, int(round(edge_fraction * grid.n_intervals)))
    v = grid.values
    worst = 0.0
    for k in range(grid.n_components):
        col = v[:, k]
        span = float(col.max() - col.min())
        if span == 0.0:
            continue
        edges = np.concatenate([np.diff(col[: m + 1]), np.diff(col[-m - 1:])])
        worst = max(worst, float(np.max(np.abs(edges))) / span)
    return worst


def is_jittery(grid, threshold=0.25, edge_fraction=0.05):
    return jitter_ratio(grid, edge_fraction) > threshold


def trapezoid_weights(n_intervals, horizon):
    w = np.full(n_intervals + 1, horizon / n_intervals)
    w[0] = w[-1] = 0.5 * horizon / n_intervals
    return w


def l2_inner(grid_a, grid_b):
    """Trapezoid-rule ``integral of <a(t), b(t)> dt`` over the shared grid."""
    a = grid_a.values if isinstance(grid_a, ControlGrid) else np.asarray(grid_a)
    b = grid_b.values if isinstance(grid_b, ControlGrid) else np.asarray(grid_b)
    horizon = grid_a.horizon if isinstance(grid_a, ControlGrid) else grid_b.horizon
    w = trapezoid_weights(a.shape[0] - 1, horizon)
    return float(np.sum(w[:, None] * a * b))


class PiecewiseWeight:
    """Piecewise-affine weight ``sigma(t)`` given by knots ``(t_i, v_i)``.

    Repeating a knot time encodes a jump. Point evaluation is
    right-continuous; ``side="left"`` gives left limits.
    """

    def __init__(self, knots):
        knots = sorted(((float(t), float(v)) for t, v in knots), key=lambda kv: kv[0])
        if len(knots) < 1:
            raise ValueError("need at least one knot")
        self.t = np.array([k[0] for k in knots])
        self.v = np.array([k[1] for k in knots])
        if np.any(np.diff(self.t) < 0):
            raise ValueError("knot times must be non-decreasing")

    @classmethod
    def constant(cls, value=1.0):
        return cls([(0.0, value)])

    @classmethod
    def step(cls, t_switch, horizon, low=0.0, high=1.0):
        return cls([(0.0, low), (t_switch, low), (t_switch, high), (horizon, high)])

    def is_non_decreasing(self):
        return bool(np.all(np.diff(self.v) >= 0.0))

    def __call__(self, t, side="right"):
        t_arr = np.asarray(t, dtype=float)
        n = self.t.size
        if n == 1:
            out = np.full(t_arr.shape, self.v[0])
        elif side == "right":
            i = np.clip(np.searchsorted(self.t, t_arr, side="right") - 1, 0, n - 1)
            out = self._between(i, i + 1, t_arr)
        elif side == "left":
            j = np.clip(np.searchsorted(self.t, t_arr, side="left"), 0, n - 1)
            out = self._between(j - 1, j, t_arr)
        else:
            raise ValueError("side must be 'left' or 'right'")
        return float(out) if np.ndim(out) == 0 else out

    def _between(self, i, j, t):
        n = self.t.size
        i = np.clip(i, 0, n - 1)
        j = np.clip(j, 0, n - 1)
        t0, t1 = self.t[i], self.t[j]
        v0, v1 = self.v[i], self.v[j]
        span = t1 - t0
        frac = np.where(span > 0, (t - t0) / np.where(span > 0, span, 1.0), 0.0)
        frac = np.clip(frac, 0.0, 1.0)
        out = v0 + frac * (v1 - v0)
        # outside the knot range the weight is held constant
        out = np.where(t < self.t[0], self.v[0], out)
        return np.where(t > self.t[-1], self.v[-1], out)

    def on_piece(self, t, ref):
        """Value at ``t`` of the affine piece that contains ``ref`` (extended linearly).

        Lets an integrator step that ends on a knot see the piece it lies in.
        """
        n = self.t.size
        i = int(np.searchsorted(self.t, ref, side="right")) - 1
        if n == 1 or i >= n - 1:
            return float(self.v[-1])
        if i < 0:
            return float(self.v[0])
        span = self.t[i + 1] - self.t[i]
        return float(self.v[i] + (t - self.t[i]) / span * (self.v[i + 1] - self.v[i]))

    def breakpoints(self):
        """Knot times at which the weight has a jump or a kink."""
        return np.unique(self.t)


_GL_X = 0.5 + 0.5 * np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)])
_GL_W = np.array([5 / 18, 8 / 18, 5 / 18])


def gauss_points(times):
    """Three-point Gauss-Legendre nodes and weights on every interval of ``times``."""
    times = np.asarray(times, dtype=float)
    t0, h = times[:-1], np.diff(times)
    return (t0[:, None] + h[:, None] * _GL_X).reshape(-1), (h[:, None] * _GL_W).reshape(-1)


def trapezoid_integral(values, times):
    """Trapezoid ``integral of values(t) dt`` over the nodes ``times``."""
    values = np.asarray(values, dtype=float)
    h = np.diff(np.asarray(times, dtype=float))
    return float(np.sum(0.5 * h * (values[:-1] + values[1:])))
