"""Closed-system (Schroedinger) dynamics, objectives and adjoint gradient."""

from dataclasses import dataclass

import numpy as np

from .base import ControlProblem, Evaluation
from .controls import shape_function, trapezoid_integral
from .integrate import GridCoefficients, IntegratorConfig, LinearGenerator, solve_backward, solve_forward
from .linalg import as_matrix, check_hermitian, check_unitary


@dataclass(frozen=True)
class Coupling:
    """Control Hamiltonian ``V_l(t) = modulation(t) * matrix``."""

    matrix: np.ndarray
    modulation: object = None

    def __call__(self, t):
        if self.modulation is None:
            return self.matrix
        return self.modulation(t) * self.matrix


class ClosedSystem:
    """``dU/dt = -i (H0 + sum_l u_l(t) V_l(t)) U`` with ``U(0) = I``."""

    def __init__(self, h0, couplings):
        self.h0 = check_hermitian(h0, name="H0")
        self.couplings = [c if isinstance(c, Coupling) else Coupling(*c) for c in couplings]
        if not self.couplings:
            raise ValueError("need at least one control coupling")
        for c in self.couplings:
            check_hermitian(c.matrix, name="control Hamiltonian")
            if c.matrix.shape != self.h0.shape:
                raise ValueError("control Hamiltonian has wrong dimension")
        self._mats = np.array([c.matrix for c in self.couplings])
        self._mods = [c.modulation for c in self.couplings]

    @property
    def dim(self):
        return self.h0.shape[0]

    @property
    def n_controls(self):
        return len(self.couplings)

    def modulations(self, t):
        """Modulation values, shape ``t.shape + (L,)``."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.full(t.shape, 1.0) if m is None else
                         np.broadcast_to(m(t), t.shape).astype(float)
                         for m in self._mods], axis=-1)

    def hamiltonian(self, t, u):
        return self.h0 + np.tensordot(np.asarray(u) * self.modulations(t), self._mats, 1)

    def generator(self, control):
        """Linear right-hand side for ``U`` (and the adjoint ``B``) under ``control``."""
        return LinearGenerator(-1j * self.h0, -1j * self._mats,
                               GridCoefficients(control, self._mods))

    def propagate(self, control, config=IntegratorConfig(), sample_times=None, counter=None):
        return solve_forward(self.generator(control), np.eye(self.dim, dtype=complex),
                             control.horizon, config, sample_times, counter)


@dataclass
class ClosedObjective:
    """Terminal infidelity plus the shaped control penalty.

    ``kind`` is ``"state"`` (transfer ``psi0 -> psi_target``) or ``"gate"``
    (generate unitary ``gate``).
    """

    kind: str
    gate: np.ndarray = None
    psi0: np.ndarray = None
    psi_target: np.ndarray = None
    penalty: float = 0.0
    shape_c: float = 25.0

    def __post_init__(self):
        if self.kind == "gate":
            self.gate = check_unitary(self.gate, 1e-10, "target gate")
        elif self.kind == "state":
            self.psi0 = np.asarray(self.psi0, dtype=complex).reshape(-1)
            self.psi_target = np.asarray(self.psi_target, dtype=complex).reshape(-1)
            for v in (self.psi0, self.psi_target):
                if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                    raise ValueError("state vectors must be normalised")
        else:
            raise ValueError(f"unknown closed objective kind {self.kind!r}")
        if self.penalty < 0:
            raise ValueError("penalty must be non-negative")

    def terminal(self, u_final):
        """Infidelity ``J`` of the final evolution operator."""
        u_final = np.asarray(u_final)
        if self.kind == "gate":
            n = u_final.shape[0]
            tau = np.trace(u_final @ self.gate.conj().T)
            return float(1.0 - abs(tau) ** 2 / n ** 2)
        z = np.vdot(self.psi_target, u_final @ self.psi0)
        return float(1.0 - abs(z) ** 2)

    def running_cost(self, times, values, horizon):
        if self.penalty == 0.0:
            return 0.0
        s = shape_function(times, horizon, self.shape_c)
        return self.penalty * trapezoid_integral(s * np.sum(values ** 2, axis=1), times)


def adjoint_terminal(objective, u_final):
    """Terminal adjoint ``B_T = -grad F(U_T)`` under the pairing ``Re Tr(A^dagger B)``."""
    u_final = as_matrix(u_final)
    if objective.kind == "gate":
        n = u_final.shape[0]
        tau = np.trace(u_final @ objective.gate.conj().T)
        return (2.0 / n ** 2) * tau * objective.gate
    z = np.vdot(objective.psi_target, u_final @ objective.psi0)
    return 2.0 * z * np.outer(objective.psi_target, objective.psi0.conj())


class ClosedProblem(ControlProblem):
    """Minimise ``J(u) + P int S(t) |u(t)|^2 dt`` for a closed system."""

    def __init__(self, system, objective, box, horizon, **kwargs):
        super().__init__(horizon, box, **kwargs)
        self.system = system
        self.cost = objective
        self.n_components = system.n_controls
        if box is not None and box.n_components != self.n_components:
            raise ValueError("box does not match the number of controls")

    def evaluate(self, control, counter=None):
        control = self.check_control(control)
        traj = self.system.propagate(control, self.integrator, control.times, counter)
        j = self.cost.terminal(traj.final)
        integral = self.cost.running_cost(control.times, control.values, self.horizon)
        return Evaluation(control, j + integral, j, {"control": integral}, cache=traj)

    def adjoint(self, evaluation, counter=None):
        control = evaluation.control
        b_final = adjoint_terminal(self.cost, evaluation.cache.final)
        return solve_backward(self.system.generator(control), b_final, self.horizon,
                              self.integrator, control.times, counter)

    def dynamic_density(self, evaluation, adjoint, times):
        """``-Im <B_t, V_l(t) U_t>`` at ``times``, shape ``(len(times), L)``."""
        u_traj = evaluation.cache.dense.sample(times)
        b_traj = adjoint.dense.sample(times)
        vu = np.einsum("lij,mjk->mlik", self.system._mats, u_traj)
        pair = np.einsum("mij,mlij->ml", b_traj.conj(), vu)
        return -np.imag(pair) * self.system.modulations(times)

    def control_gradient(self, control):
        if not self.cost.penalty:
            return np.zeros(control.values.shape)
        s = shape_function(control.times, self.horizon, self.cost.shape_c)
        return 2.0 * self.cost.penalty * s[:, None] * control.values


def evaluate_upsilon(system, objective, control, config=IntegratorConfig(), counter=None):
    """Return ``(objective, terminal, integral)`` for a closed-system control."""
    prob = ClosedProblem(system, objective, None, control.horizon,
                         n_intervals=control.n_intervals, integrator=config)
    ev = prob.evaluate(control, counter)
    return ev.objective, ev.terminal, ev.integrals["control"]


def gradient_upsilon(system, objective, control, config=IntegratorConfig(), counter=None):
    """Grid gradient of the closed-system objective (two Cauchy solves)."""
    prob = ClosedProblem(system, objective, None, control.horizon,
                         n_intervals=control.n_intervals, integrator=config)
    return prob.gradient_at(control, counter)
