"""Open-system (GKSL) dynamics with coherent and incoherent controls.

Density matrices are propagated as row-major vectors, so every generator is
an ``N^2 x N^2`` superoperator. The generator is affine in the control vector
``c = (u_1, ..., u_{N_u}, n_1, ..., n_{N_n})``::

    L(c) = L_0 + sum_l u_l L^u_l + sum_j n_j L^n_j

which makes the gradient a pairing of the adjoint state with ``L_k rho``.
"""

from dataclasses import dataclass

import numpy as np

from .base import ControlProblem, Evaluation
from .controls import PiecewiseWeight, gauss_points, shape_function, trapezoid_integral
from .integrate import (GridCoefficients, IntegratorConfig, LinearGenerator, TrajectorySource,
                        solve_backward, solve_forward)
from .linalg import (anticommutator, as_matrix, check_density_matrix, check_hermitian,
                     check_unitary, commutator_superop, dagger, hs_dist2, lindblad_superop)


@dataclass(frozen=True)
class LindbladChannel:
    """Jump operator ``A`` with rate ``Omega``; paired with one incoherent control."""

    operator: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "operator", as_matrix(self.operator))
        if not self.rate >= 0:
            raise ValueError("channel rate must be non-negative")


def _lindblad_term(a, rho):
    return 2.0 * a @ rho @ dagger(a) - anticommutator(dagger(a) @ a, rho)


def _lindblad_adjoint_term(a, chi):
    return 2.0 * dagger(a) @ chi @ a - anticommutator(dagger(a) @ a, chi)


def _check_n(channels, n):
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if n.shape != (len(channels),):
        raise ValueError("need one incoherent control per channel")
    if np.any(n < 0):
        raise ValueError("incoherent controls must be non-negative")
    return n


def dissipator(channels, n, rho):
    """``D_n(rho)``: thermal-type dissipator with control-dependent rates."""
    n = _check_n(channels, n)
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for ch, nj in zip(channels, n):
        if ch.operator.shape != rho.shape:
            raise ValueError("jump operator and state differ in dimension")
        a = ch.operator
        out += ch.rate * ((nj + 1.0) * _lindblad_term(a, rho) + nj * _lindblad_term(dagger(a), rho))
    return out


def adjoint_dissipator(channels, n, chi):
    """Hilbert-Schmidt adjoint ``D_n^dagger(chi)``."""
    n = _check_n(channels, n)
    chi = np.asarray(chi, dtype=complex)
    out = np.zeros_like(chi)
    for ch, nj in zip(channels, n):
        if ch.operator.shape != chi.shape:
            raise ValueError("jump operator and state differ in dimension")
        a = ch.operator
        out += ch.rate * ((nj + 1.0) * _lindblad_adjoint_term(a, chi)
                          + nj * _lindblad_adjoint_term(dagger(a), chi))
    return out


def dissipator_derivative(channels, index, rho):
    """``dD_n(rho)/dn_index``; independent of ``n`` because the rates are affine."""
    ch = channels[index]
    rho = np.asarray(rho, dtype=complex)
    return ch.rate * (_lindblad_term(ch.operator, rho) + _lindblad_term(dagger(ch.operator), rho))


class OpenSystem:
    """``rho' = -i[H_c, rho] + eps D_n(rho)``, ``H_c = H0 + eps H_n + sum_l u_l H_l``.

    Parameters
    ----------
    h0 : (N, N) Hermitian array
    controls : list of (N, N) Hermitian arrays
        Coherent coupling operators ``H_l``.
    channels : list of LindbladChannel
        One incoherent control ``n_j`` per channel.
    epsilon : float
        Coupling strength to the environment.
    hn_terms : list of (N, N) Hermitian arrays, optional
        Affine effective Hamiltonian ``H_n = sum_j n_j K_j``; zero if omitted.
    """

    def __init__(self, h0, controls, channels, epsilon=1.0, hn_terms=None):
        self.h0 = check_hermitian(h0, name="H0")
        n = self.h0.shape[0]
        self.controls = [check_hermitian(h, name="control Hamiltonian") for h in controls]
        self.channels = list(channels)
        if not self.controls and not self.channels:
            raise ValueError("system has no controls")
        if hn_terms is None:
            hn_terms = [np.zeros((n, n), dtype=complex)] * len(self.channels)
        self.hn_terms = [check_hermitian(k, name="H_n term") for k in hn_terms]
        if len(self.hn_terms) != len(self.channels):
            raise ValueError("need one H_n term per channel")
        for m in self.controls + self.hn_terms + [c.operator for c in self.channels]:
            if m.shape != (n, n):
                raise ValueError("operator has wrong dimension")
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.epsilon = float(epsilon)
        self._build()

    def _build(self):
        eps = self.epsilon
        l0 = -1j * commutator_superop(self.h0)
        for ch in self.channels:
            l0 = l0 + eps * ch.rate * lindblad_superop(ch.operator)
        lk = [-1j * commutator_superop(h) for h in self.controls]
        for ch, k in zip(self.channels, self.hn_terms):
            a = ch.operator
            lk.append(-1j * eps * commutator_superop(k)
                      + eps * ch.rate * (lindblad_superop(a) + lindblad_superop(dagger(a))))
        self.l0 = l0
        self.lk = np.array(lk)

    @property
    def dim(self):
        return self.h0.shape[0]

    @property
    def n_coherent(self):
        return len(self.controls)

    @property
    def n_incoherent(self):
        return len(self.channels)

    @property
    def n_controls(self):
        return self.n_coherent + self.n_incoherent

    def hamiltonian(self, u, n):
        h = self.h0 + self.epsilon * sum(nj * k for nj, k in zip(n, self.hn_terms))
        return h + sum(ul * hl for ul, hl in zip(u, self.controls))

    def rhs(self, rho, c):
        """Right-hand side at one instant for the control vector ``c``."""
        c = np.asarray(c, dtype=float)
        u, n = c[: self.n_coherent], c[self.n_coherent:]
        h = self.hamiltonian(u, n)
        return -1j * (h @ rho - rho @ h) + self.epsilon * dissipator(self.channels, n, rho)

    def superoperator(self, c):
        return self.l0 + np.tensordot(np.asarray(c, dtype=float), self.lk, 1)

    def generator(self, control):
        return LinearGenerator(self.l0, self.lk, GridCoefficients(control))

    def adjoint_generator(self, control, source=None):
        """Generator of ``chi' = -L(c)^dagger chi + source``."""
        return LinearGenerator(-self.l0.conj().T, -np.conj(np.transpose(self.lk, (0, 2, 1))),
                               GridCoefficients(control), source)

    def propagate(self, rho0, control, config=IntegratorConfig(), sample_times=None,
                  counter=None):
        """Forward solve; states come back as ``(len(times), N, N)`` matrices."""
        n = self.dim
        traj = solve_forward(self.generator(control), np.asarray(rho0, dtype=complex).reshape(-1, 1),
                             control.horizon, config, sample_times, counter)
        traj.states = traj.states.reshape(-1, n, n)
        return traj


KINDS = ("steer_keep", "keep", "overlap", "grk")


@dataclass
class OpenObjective:
    """Terminal functional plus state and control running costs.

    ``kind`` selects ``steer_keep`` (steer to ``rho_target``, optionally
    along a path target), ``keep`` (stay at ``rho0``), ``overlap``
    (maximise ``<rho_T, rho_target>`` up to the bound ``b``) or ``grk``
    (three-state gate functional for ``gate``).
    """

    kind: str
    rho0: np.ndarray = None
    rho_target: np.ndarray = None
    gate: np.ndarray = None
    p_rho: float = 0.0
    sigma: PiecewiseWeight = None
    path_target: bool = False
    b: float = 1.0
    p_u: float = 0.0
    p_n: float = 0.0
    shape_c: float = 25.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown open objective kind {self.kind!r}")
        if min(self.p_rho, self.p_u, self.p_n) < 0:
            raise ValueError("penalty weights must be non-negative")
        if self.sigma is None:
            self.sigma = PiecewiseWeight.constant(1.0)
        if not self.sigma.is_non_decreasing():
            raise ValueError("sigma must be non-decreasing")
        if self.kind == "grk":
            self.gate = check_unitary(self.gate, 1e-10, "target gate")
            self.initial_states = grk_states(self.gate.shape[0])
            self.final_targets = [self.gate @ r @ dagger(self.gate) for r in self.initial_states]
            return
        self.rho0 = check_density_matrix(self.rho0, name="rho0")
        if self.kind == "keep":
            self.rho_target = self.rho0
        else:
            self.rho_target = check_density_matrix(self.rho_target, name="rho_target")
        self.initial_states = [self.rho0]

    @property
    def n_states(self):
        return len(self.initial_states)

    def terminal(self, finals):
        """Terminal part ``I`` from the list of final density matrices."""
        if self.kind == "grk":
            return sum(hs_dist2(r, w) for r, w in zip(finals, self.final_targets)) / 6.0
        rho = finals[0]
        if self.kind == "overlap":
            return float(self.b - np.real(np.trace(rho @ self.rho_target)))
        return hs_dist2(rho, self.rho_target)

    def terminal_adjoint(self, finals):
        """``chi_T = -dF/drho`` for every propagated state."""
        if self.kind == "grk":
            return [-(r - w) / 3.0 for r, w in zip(finals, self.final_targets)]
        if self.kind == "overlap":
            return [self.rho_target.astype(complex)]
        return [-2.0 * (finals[0] - self.rho_target)]

    def path(self, t, horizon):
        s = np.asarray(t, dtype=float)[..., None, None] / horizon
        return (1.0 - s) * self.rho0 + s * self.rho_target

    def running_state(self, t, rho, horizon):
        """State cost density ``g(t, rho)`` evaluated along sampled states."""
        if self.kind == "grk" or self.p_rho == 0.0:
            return np.zeros(len(t))
        p = self.p_rho
        if self.kind == "overlap":
            ov = np.real(np.einsum("mij,ji->m", rho, self.rho_target))
            return p * self.sigma(t) * (self.b - ov)
        if self.kind == "steer_keep" and self.path_target:
            d = rho - self.path(t, horizon)
            return p * np.real(np.einsum("mij,mij->m", d.conj(), d))
        d = rho - self.rho_target
        dist = np.real(np.einsum("mij,mij->m", d.conj(), d))
        w = 1.0 if self.kind == "keep" else self.sigma(t)
        return p * w * dist

    def adjoint_source(self, dense, horizon):
        """``dg/drho`` as a :class:`TrajectorySource` (``None`` without state cost)."""
        if self.kind == "grk" or self.p_rho == 0.0:
            return None
        p = self.p_rho
        if self.kind == "overlap":
            return TrajectorySource(dense, horizon, 0.0, -p * self.rho_target, None, self.sigma)
        if self.kind == "keep":
            return TrajectorySource(dense, horizon, 2 * p, -2 * p * self.rho0)
        if self.path_target:
            return TrajectorySource(dense, horizon, 2 * p, -2 * p * self.rho0,
                                    -2 * p * (self.rho_target - self.rho0))
        return TrajectorySource(dense, horizon, 2 * p, -2 * p * self.rho_target, None, self.sigma)


def grk_states(n):
    """The three reduced initial density matrices of the three-state gate functional."""
    i = np.arange(1, n + 1)
    rho1 = np.diag(2.0 * (n - i + 1) / (n * (n + 1))).astype(complex)
    rho2 = np.full((n, n), 1.0 / n, dtype=complex)
    rho3 = np.eye(n, dtype=complex) / n
    return [rho1, rho2, rho3]


class OpenProblem(ControlProblem):
    """Minimise ``Theta(c) = F(rho_T) + int g(t, rho) + f(t, c) dt`` on a box.

    Control components are ordered coherent first, then incoherent.
    """

    def __init__(self, system, objective, box, horizon, **kwargs):
        super().__init__(horizon, box, **kwargs)
        self.system = system
        self.cost = objective
        self.n_components = system.n_controls
        if box is not None and box.n_components != self.n_components:
            raise ValueError("box does not match the number of controls")

    def control_cost(self, control):
        t, v = control.times, control.values
        nu = self.system.n_coherent
        total = 0.0
        if self.cost.p_u and nu:
            s = shape_function(t, self.horizon, self.cost.shape_c)
            total += self.cost.p_u * trapezoid_integral(s * np.sum(v[:, :nu] ** 2, axis=1), t)
        if self.cost.p_n and self.system.n_incoherent:
            total += self.cost.p_n * trapezoid_integral(np.sum(v[:, nu:], axis=1), t)
        return total

    def evaluate(self, control, counter=None):
        control = self.check_control(control)
        t = control.times
        knots = self.cost.sigma.breakpoints()
        gt, gw = gauss_points(np.union1d(t, knots[(knots > 0) & (knots < self.horizon)]))
        trajs = [self.system.propagate(r, control, self.integrator, t, counter)
                 for r in self.cost.initial_states]
        finals = [tr.final for tr in trajs]
        term = self.cost.terminal(finals)
        state = 0.0
        if self.cost.kind != "grk" and self.cost.p_rho:
            n = self.system.dim
            rho_g = trajs[0].dense.sample(gt).reshape(-1, n, n)
            state = float(np.sum(gw * self.cost.running_state(gt, rho_g, self.horizon)))
        ctrl = self.control_cost(control)
        return Evaluation(control, term + state + ctrl, term,
                          {"state": state, "control": ctrl}, cache=trajs)

    def adjoint(self, evaluation, counter=None):
        """Backward adjoint trajectories, one per propagated initial state."""
        control = evaluation.control
        trajs = evaluation.cache
        chi_t = self.cost.terminal_adjoint([tr.final for tr in trajs])
        out = []
        for tr, chi in zip(trajs, chi_t):
            src = self.cost.adjoint_source(tr.dense, self.horizon)
            gen = self.system.adjoint_generator(control, src)
            back = solve_backward(gen, chi.reshape(-1, 1), self.horizon, self.integrator,
                                  control.times, counter)
            back.states = back.states.reshape(-1, self.system.dim, self.system.dim)
            out.append(back)
        return out

    def dynamic_density(self, evaluation, adjoint, times):
        """``-Re <chi_t, L_k rho_t>`` summed over propagated states."""
        n2 = self.system.dim ** 2
        out = np.zeros((len(times), self.n_components))
        for tr, back in zip(evaluation.cache, adjoint):
            rho = tr.dense.sample(times).reshape(-1, n2)
            chi = back.dense.sample(times).reshape(-1, n2)
            lrho = np.einsum("kab,mb->mka", self.system.lk, rho)
            out -= np.real(np.einsum("ma,mka->mk", chi.conj(), lrho))
        return out

    def control_gradient(self, control):
        grad = np.zeros(control.values.shape)
        nu = self.system.n_coherent
        if self.cost.p_u and nu:
            s = shape_function(control.times, self.horizon, self.cost.shape_c)
            grad[:, :nu] = 2.0 * self.cost.p_u * s[:, None] * control.values[:, :nu]
        if self.cost.p_n:
            grad[:, nu:] = self.cost.p_n
        return grad


def evaluate_theta(system, objective, control, config=IntegratorConfig(), counter=None):
    """Return ``(Theta, I, state_integral, control_integral)``."""
    prob = OpenProblem(system, objective, None, control.horizon,
                       n_intervals=control.n_intervals, integrator=config)
    ev = prob.evaluate(control, counter)
    return ev.objective, ev.terminal, ev.integrals["state"], ev.integrals["control"]


def adjoint_solve_open(system, objective, control, config=IntegratorConfig(), counter=None):
    """Forward then backward solves; returns ``(rho_trajectories, chi_trajectories)``."""
    prob = OpenProblem(system, objective, None, control.horizon,
                       n_intervals=control.n_intervals, integrator=config)
    ev = prob.evaluate(control, counter)
    return ev.cache, prob.adjoint(ev, counter)


def gradient_theta(system, objective, control, config=IntegratorConfig(), counter=None):
    """Grid gradient over coherent then incoherent components."""
    prob = OpenProblem(system, objective, None, control.horizon,
                       n_intervals=control.n_intervals, integrator=config)
    return prob.gradient_at(control, counter)
