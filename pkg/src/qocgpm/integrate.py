"""Adaptive Dormand-Prince 5(4) integration of matrix-valued linear ODEs.

One call of :func:`solve_forward` or :func:`solve_backward` is one "Cauchy
problem", the unit in which optimisation cost is reported. Every call bumps
a :class:`CauchyCounter` by exactly one.
"""

import csv
import math
import threading
from dataclasses import dataclass

import numpy as np

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# Hairer's continuous extension (4th order)
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
])
_A_ROWS = [np.array(row) for row in _A]


class IntegrationError(RuntimeError):
    """Raised when a solve cannot be completed (step underflow, NaN/inf)."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    first_step: float | None = None
    max_step: float = math.inf
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be positive")

    @classmethod
    def fixed(cls, step):
        """Constant step ``step``: loose tolerances accept every trial step.

        The step sequence then no longer depends on the control, which makes
        the discrete objective smooth in it (used by finite-difference audits).
        """
        return cls(rtol=1e3, atol=1e3, first_step=step, max_step=step)


class CauchyCounter:
    """Thread-safe tally of solved Cauchy problems."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self, n=1):
        with self._lock:
            self._count += n

    @property
    def count(self):
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0


GLOBAL_COUNTER = CauchyCounter()

# Route eligible linear solves through the numba kernel; tests flip this
# to compare against the reference implementation.
USE_COMPILED = True


class DenseSolution:
    """Continuous 4th-order interpolant produced by one DOPRI5 solve."""

    def __init__(self, t_start, h, coeffs, shape, t0, t1):
        self.t_start = t_start
        self.h = h
        self.coeffs = coeffs          # (n_steps, 5, n)
        self.shape = shape
        self.t0, self.t1 = t0, t1
        self.n_steps = len(h)

    def __call__(self, t):
        i = int(np.searchsorted(self.t_start, t, side="right")) - 1
        if i < 0:
            i = 0
        elif i >= self.n_steps:
            i = self.n_steps - 1
        th = (t - self.t_start[i]) / self.h[i]
        th1 = 1.0 - th
        r = self.coeffs[i]
        y = r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))
        return y.reshape(self.shape)

    def sample(self, times):
        times = np.asarray(times, dtype=float)
        idx = np.clip(np.searchsorted(self.t_start, times, side="right") - 1, 0, self.n_steps - 1)
        th = ((times - self.t_start[idx]) / self.h[idx])[:, None]
        th1 = 1.0 - th
        r = self.coeffs[idx]
        y = r[:, 0] + th * (r[:, 1] + th1 * (r[:, 2] + th * (r[:, 3] + th1 * r[:, 4])))
        return y.reshape((times.size,) + self.shape)


class _Reversed:
    """Dense solution in the original time variable for a reversed-time solve."""

    def __init__(self, sol, horizon):
        self.sol = sol
        self.horizon = horizon
        self.n_steps = sol.n_steps

    def __call__(self, t):
        return self.sol(self.horizon - t)

    def sample(self, times):
        return self.sol.sample(self.horizon - np.asarray(times, dtype=float))


def _rms(x):
    return math.sqrt(float(np.real(np.vdot(x, x))) / x.size)


def dopri5(fun, t0, y0, t1, config=IntegratorConfig(), stops=None):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1 > t0``.

    ``y0`` may be any complex array; ``fun`` receives and returns arrays of
    the same shape. With ``stops`` (sorted times where the right-hand side
    jumps or kinks) steps land exactly on each stop and ``fun`` is called
    as ``fun(t, y, ref)`` with ``ref`` the midpoint of the current step, so
    that it can select the smooth piece. Returns a :class:`DenseSolution`.
    """
    shape = np.shape(y0)
    y = np.array(y0, dtype=complex).reshape(-1)
    n = y.size
    rtol, atol = config.rtol, config.atol
    hmax = min(config.max_step, t1 - t0)
    stops = np.asarray([] if stops is None else stops, dtype=float)
    piecewise = stops.size > 0

    def f(t, v, ref):
        out = fun(t, v.reshape(shape), ref) if piecewise else fun(t, v.reshape(shape))
        return np.asarray(out, dtype=complex).reshape(-1)

    t = t0
    k = np.empty((7, n), dtype=complex)
    k[0] = f(t, y, t)
    if config.first_step is not None:
        h = min(config.first_step, hmax)
    else:
        h = _initial_step(lambda tt, v: f(tt, v, t), t, y, k[0], rtol, atol, hmax)

    starts, steps, coeffs = [], [], []
    h_min = 16 * np.finfo(float).eps * max(abs(t0), abs(t1), 1.0)
    rejected = False
    n_steps = 0
    si, refresh = 0, piecewise
    while t < t1:
        if n_steps >= config.max_steps:
            raise IntegrationError("maximum number of integrator steps exceeded")
        if h < h_min:
            raise IntegrationError(f"step size underflow at t={t:.6g} (problem may be stiff)")
        while si < stops.size and stops[si] <= t + h_min:
            si += 1
        hit = si < stops.size and t + h >= stops[si] - h_min
        if hit:
            h = stops[si] - t
        if t + h > t1 or t1 - (t + h) < h_min:
            h, hit = t1 - t, False
        ref = t + 0.5 * h
        if refresh:
            k[0] = f(t, y, ref)
            refresh = False
        for s in range(1, 7):
            ys = y + h * (_A_ROWS[s] @ k[:s])
            k[s] = f(t + _C[s] * h, ys, ref)
        y_new = ys  # stage 7 point is the 5th-order solution (FSAL)
        err_vec = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / scale)
        if not math.isfinite(err):
            raise IntegrationError(f"non-finite state at t={t:.6g}")
        if err <= 1.0:
            ydiff = y_new - y
            bspl = h * k[0] - ydiff
            r = np.empty((5, n), dtype=complex)
            r[0] = y
            r[1] = ydiff
            r[2] = bspl
            r[3] = ydiff - h * k[6] - bspl
            r[4] = h * (_D @ k)
            starts.append(t)
            steps.append(h)
            coeffs.append(r)
            t = stops[si] if hit else t + h
            y = y_new
            k[0] = k[6]
            refresh = hit
            n_steps += 1
            fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
            if rejected:
                fac = min(fac, 1.0)
            h = min(h * fac, hmax)
            rejected = False
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)
            rejected = True
    return DenseSolution(np.array(starts), np.array(steps), np.array(coeffs), shape, t0, t1)


def _initial_step(f, t, y, f0, rtol, atol, hmax):
    scale = atol + rtol * np.abs(y)
    d0 = _rms(y / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, hmax)
    f1 = f(t + h0, y + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, hmax)


@dataclass
class MatrixODE:
    """Matrix ODE ``X' = rhs(t, X, c(t))`` driven by a grid control.

    ``rhs`` receives the interpolated control vector; ``control`` may be
    ``None`` for control-free dynamics.
    """

    rhs: object
    control: object = None

    def __call__(self, t, x, ref=None):
        c = None if self.control is None else self.control.at(t)
        return self.rhs(t, x, c)

    def breakpoints(self):
        return np.zeros(0)


@dataclass
class Trajectory:
    """States at ``times`` plus the dense interpolant they were taken from."""

    times: np.ndarray
    states: np.ndarray
    dense: object

    @property
    def final(self):
        return self.states[-1]

    def to_csv(self, path):
        flat = self.states.reshape(len(self.times), -1)
        names = ["t"]
        for j in range(flat.shape[1]):
            names += [f"re_{j}", f"im_{j}"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for t, row in zip(self.times, flat):
                vals = [format(float(t), ".17g")]
                for z in row:
                    vals += [format(z.real, ".17g"), format(z.imag, ".17g")]
                w.writerow(vals)

    @staticmethod
    def read_csv(path, shape):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        states = (data[:, 1::2] + 1j * data[:, 2::2]).reshape((-1,) + tuple(shape))
        return data[:, 0], states


def _check_samples(sample_times, horizon):
    s = np.asarray(sample_times, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("sample_times must be a non-empty 1-d sequence")
    if np.any(np.diff(s) < 0):
        raise ValueError("sample_times must be sorted")
    if s[0] < -1e-12 or s[-1] > horizon * (1 + 1e-12):
        raise ValueError("sample_times must lie in [0, T]")
    return s


def _stops(ode, horizon, reverse):
    """Interior breakpoints of ``ode`` in the integration variable, sorted."""
    bp = getattr(ode, "breakpoints", None)
    b = np.asarray(bp() if bp is not None else [], dtype=float)
    b = b[(b > 0.0) & (b < horizon)]
    return np.sort(horizon - b) if reverse else np.sort(b)


def _compiled_solve(gen, x0, horizon, config, reverse, stops):
    from ._kernels import dopri5_linear

    coef = gen.coefficients
    if abs(coef.control.horizon - horizon) > 1e-12 * horizon:
        raise ValueError("control horizon does not match the solve horizon")
    shape = x0.shape
    y0 = np.ascontiguousarray(x0.reshape(gen.n, -1))
    kind, amp, omega, phase = coef.params
    if gen.source is None:
        src = _no_source(gen.n, y0.shape[1])
    else:
        if abs(gen.source.horizon - horizon) > 1e-12 * horizon:
            raise ValueError("source horizon does not match the solve horizon")
        src = gen.source.packed(gen.n)
    starts, steps, coeffs, status = dopri5_linear(
        gen.g0, gen.gk, np.ascontiguousarray(coef.control.values), float(horizon),
        kind, amp, omega, phase, src, y0, reverse, config.rtol, config.atol,
        config.first_step or 0.0, config.max_step, config.max_steps,
        np.ascontiguousarray(stops, dtype=float))
    if status == 1:
        raise IntegrationError("step size underflow (problem may be stiff)")
    if status == 2:
        raise IntegrationError("maximum number of integrator steps exceeded")
    if status == 3:
        raise IntegrationError("non-finite state")
    return DenseSolution(starts, steps, coeffs.reshape(len(steps), 5, -1), shape, 0.0, horizon)


def solve_forward(ode, x0, horizon, config=IntegratorConfig(), sample_times=None,
                  counter=None):
    """Solve the initial-value problem ``X(0) = x0`` on ``[0, T]``."""
    sample = _check_samples([0.0, horizon] if sample_times is None else sample_times, horizon)
    x0 = np.asarray(x0, dtype=complex)
    stops = _stops(ode, horizon, False)
    if isinstance(ode, LinearGenerator) and ode.compiled:
        dense = _compiled_solve(ode, x0, horizon, config, False, stops)
    else:
        dense = dopri5(ode, 0.0, x0, horizon, config, stops)
    (counter or GLOBAL_COUNTER).increment()
    states = dense.sample(sample)
    if not np.all(np.isfinite(states)):
        raise IntegrationError("non-finite state in forward solve")
    return Trajectory(sample, states, dense)


def solve_backward(ode, x_final, horizon, config=IntegratorConfig(), sample_times=None,
                   counter=None):
    """Solve the terminal-value problem ``X(T) = x_final`` on ``[0, T]``.

    Integrates in ``s = T - t`` so the forward code path is reused.
    """
    sample = _check_samples([0.0, horizon] if sample_times is None else sample_times, horizon)

    def reversed_rhs(s, x, ref=None):
        return -ode(horizon - s, x, None if ref is None else horizon - ref)

    x_final = np.asarray(x_final, dtype=complex)
    stops = _stops(ode, horizon, True)
    if isinstance(ode, LinearGenerator) and ode.compiled:
        sol = _compiled_solve(ode, x_final, horizon, config, True, stops)
    else:
        sol = dopri5(reversed_rhs, 0.0, x_final, horizon, config, stops)
    dense = _Reversed(sol, horizon)
    (counter or GLOBAL_COUNTER).increment()
    states = dense.sample(sample)
    if not np.all(np.isfinite(states)):
        raise IntegrationError("non-finite state in backward solve")
    return Trajectory(sample, states, dense)


@dataclass(frozen=True)
class Harmonic:
    """Modulation ``amp * cos(omega t + phase)``."""

    amp: float = 1.0
    omega: float = 0.0
    phase: float = 0.0

    def __call__(self, t):
        return self.amp * np.cos(self.omega * np.asarray(t, dtype=float) + self.phase)


class GridCoefficients:
    """``a_k(t) = c_k(t) m_k(t)`` for a grid control ``c`` and modulations ``m``.

    A modulation is ``None`` (one), a number, a :class:`Harmonic` or any
    vectorised callable. Without arbitrary callables the compiled
    integrator can be used.
    """

    def __init__(self, control, modulations=None):
        self.control = control
        k = control.n_components
        mods = list(modulations) if modulations is not None else [None] * k
        if len(mods) != k:
            raise ValueError("one modulation per control component is required")
        self.modulations = mods
        kind, amp, omega, phase = np.zeros(k, dtype=np.int64), np.ones(k), np.zeros(k), np.zeros(k)
        self.compiled = True
        for i, m in enumerate(mods):
            if m is None:
                continue
            if isinstance(m, Harmonic):
                kind[i], amp[i], omega[i], phase[i] = 1, m.amp, m.omega, m.phase
            elif np.isscalar(m):
                amp[i] = float(m)
            else:
                self.compiled = False
        self.params = (kind, amp, omega, phase)
        self._plain = all(m is None for m in mods)

    def modulation_values(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.full(t.shape, 1.0) if m is None else
                         np.broadcast_to(m if np.isscalar(m) else m(t), t.shape).astype(float)
                         for m in self.modulations], axis=-1)

    def __call__(self, t):
        v = self.control.at(t)
        if self._plain:
            return v
        return v * np.array([1.0 if m is None else (m if np.isscalar(m) else m(t))
                             for m in self.modulations])


class TrajectorySource:
    """Source ``w(t) (c_rho Y(t) + v0 + (t / T) v1)`` driven by a dense solution.

    ``weight`` is a :class:`~qocgpm.controls.PiecewiseWeight` (or ``None``
    for one); ``dense`` the forward :class:`DenseSolution` of ``Y``.
    """

    def __init__(self, dense, horizon, c_rho=0.0, v0=None, v1=None, weight=None):
        self.dense = dense
        self.horizon = float(horizon)
        self.c_rho = float(c_rho)
        zero = np.zeros(dense.shape, dtype=complex)
        self.v0 = zero if v0 is None else np.asarray(v0, dtype=complex).reshape(dense.shape)
        self.v1 = zero if v1 is None else np.asarray(v1, dtype=complex).reshape(dense.shape)
        self.weight = weight

    def __call__(self, t, ref=None):
        if self.weight is None:
            w = 1.0
        else:
            w = self.weight(t) if ref is None else self.weight.on_piece(t, ref)
        if w == 0.0:
            return np.zeros(self.dense.shape, dtype=complex)
        y = self.dense(t) if self.c_rho else 0.0
        return w * (self.c_rho * y + self.v0 + (t / self.horizon) * self.v1)

    def breakpoints(self):
        return np.zeros(0) if self.weight is None else self.weight.breakpoints()

    def packed(self, n):
        """Argument tuple for the compiled kernel (state viewed as ``(n, -1)``)."""
        d = self.dense
        if self.weight is None:
            wt, wv = np.zeros(1), np.ones(1)
        else:
            wt, wv = self.weight.t.astype(float), self.weight.v.astype(float)
        return (True, np.ascontiguousarray(d.t_start, dtype=float),
                np.ascontiguousarray(d.h, dtype=float),
                np.ascontiguousarray(d.coeffs.reshape(d.n_steps, 5, n, -1)),
                wt, wv, self.c_rho, self.v0.reshape(n, -1).copy(), self.v1.reshape(n, -1).copy())


def _no_source(n, ncol):
    z = np.zeros((n, ncol), dtype=complex)
    return (False, np.zeros(1), np.ones(1), np.zeros((1, 5, n, ncol), dtype=complex),
            np.zeros(1), np.ones(1), 0.0, z, z)


class LinearGenerator:
    """Right-hand side ``X' = (G_0 + sum_k a_k(t) G_k) X + s(t)``.

    ``coefficients(t)`` returns the vector ``a(t)``; ``source`` is an optional
    callable returning an array shaped like ``X``. Source-free generators
    with :class:`GridCoefficients` run through the compiled integrator.
    """

    def __init__(self, g0, gk, coefficients, source=None):
        self.g0 = np.asarray(g0, dtype=complex)
        gk = np.asarray(gk, dtype=complex)
        self.n = self.g0.shape[0]
        self.gk_flat = gk.reshape(gk.shape[0], -1) if gk.size else np.zeros((0, self.n * self.n))
        self.g0_flat = self.g0.reshape(-1)
        self.gk = gk.reshape(-1, self.n, self.n)
        self.coefficients = coefficients
        self.source = source

    @property
    def compiled(self):
        return (USE_COMPILED
                and (self.source is None or isinstance(self.source, TrajectorySource))
                and isinstance(self.coefficients, GridCoefficients)
                and self.coefficients.compiled)

    def matrix(self, t):
        a = self.coefficients(t)
        return (self.g0_flat + a @ self.gk_flat).reshape(self.n, self.n)

    def __call__(self, t, x, ref=None):
        out = self.matrix(t) @ x
        if self.source is not None:
            out = out + (self.source(t) if ref is None else self.source(t, ref))
        return out

    def breakpoints(self):
        if self.source is None or not hasattr(self.source, "breakpoints"):
            return np.zeros(0)
        return self.source.breakpoints()
