import numpy as np
import pytest
from scipy.linalg import expm

from qocgpm import integrate
from qocgpm.closed import ClosedSystem
from qocgpm.controls import ControlGrid
from qocgpm.integrate import (CauchyCounter, IntegrationError, IntegratorConfig, MatrixODE,
                              dopri5, solve_backward, solve_forward)
from qocgpm.lindblad import LindbladChannel, OpenSystem
from qocgpm.linalg import PAULI_X, PAULI_Z
from qocgpm.problems import SIGMA_MINUS, hadamard_system


def smooth_control(horizon=1.5, m=1000):
    t = np.linspace(0, horizon, m + 1)
    return ControlGrid(horizon, np.column_stack([np.sin(2 * t), 0.7 * np.cos(3 * t)]))


@pytest.fixture(params=[True, False], ids=["compiled", "python"])
def backend(request, monkeypatch):
    monkeypatch.setattr(integrate, "USE_COMPILED", request.param)
    return request.param


def test_free_qubit_analytic(backend):
    sys = hadamard_system()
    ctl = ControlGrid.zeros(1.5, 2, 50)
    traj = sys.propagate(ctl, sample_times=ctl.times)
    expect = np.diag([np.exp(-1.5j), np.exp(1.5j)])
    assert np.max(np.abs(traj.final - expect)) <= 1e-8


def test_constant_pauli_drive(backend):
    c = 0.8
    sys = ClosedSystem(np.zeros((2, 2)), [(PAULI_X, None)])
    ctl = ControlGrid(2.0, np.full(21, c))
    traj = sys.propagate(ctl, sample_times=ctl.times)
    for t, u in zip(traj.times, traj.states):
        expect = np.cos(c * t) * np.eye(2) - 1j * np.sin(c * t) * PAULI_X
        assert np.max(np.abs(u - expect)) <= 1e-8


def test_two_level_decay(backend):
    eps, rate = 0.5, 0.7
    sys = OpenSystem(np.zeros((2, 2)), [], [LindbladChannel(SIGMA_MINUS, rate)], eps)
    ctl = ControlGrid.zeros(3.0, 1, 30)
    traj = sys.propagate(np.diag([0.0, 1.0]), ctl, sample_times=ctl.times)
    excited = traj.states[:, 1, 1].real
    assert np.allclose(excited, np.exp(-2 * eps * rate * ctl.times), atol=1e-9)


def test_backward_diagonal_analytic(backend):
    omega, horizon = 1.0, 1.5
    sys = ClosedSystem(omega * PAULI_Z, [(PAULI_X, None)])
    ctl = ControlGrid.zeros(horizon, 1, 10)
    b_final = np.array([[1, 2j], [0.5, -1]], dtype=complex)
    traj = solve_backward(sys.generator(ctl), b_final, horizon)
    expect = np.diag([np.exp(1j * omega * horizon), np.exp(-1j * omega * horizon)]) @ b_final
    assert np.max(np.abs(traj.states[0] - expect)) <= 1e-8


def test_backward_round_trip(backend):
    sys = hadamard_system()
    ctl = smooth_control()
    cfg = IntegratorConfig(1e-10, 1e-12)
    fwd = sys.propagate(ctl, cfg)
    back = solve_backward(sys.generator(ctl), fwd.final, 1.5, cfg)
    assert np.linalg.norm(back.states[0] - np.eye(2)) <= 1e-7


def test_zero_rhs_backward_constant():
    x = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=complex)
    traj = solve_backward(MatrixODE(lambda t, y, c: 0 * y), x, 2.0, sample_times=[0.0, 1.0, 2.0])
    assert np.all(traj.states == x)


def test_counter_one_increment_per_solve(rng):
    sys = hadamard_system()
    ctl = ControlGrid(1.5, rng.uniform(-1, 1, (11, 2)))
    counter = CauchyCounter()
    fwd = sys.propagate(ctl, counter=counter)
    assert counter.count == 1
    solve_backward(sys.generator(ctl), fwd.final, 1.5, counter=counter)
    assert counter.count == 2


def test_compiled_matches_reference(monkeypatch, rng):
    # same step sequence on both paths, so only rounding differs
    sys = hadamard_system()
    ctl = ControlGrid(1.5, rng.uniform(-1, 1, (41, 2)))
    cfg = IntegratorConfig.fixed(1.5 / 160)
    a = sys.propagate(ctl, cfg, sample_times=ctl.times).states
    monkeypatch.setattr(integrate, "USE_COMPILED", False)
    b = sys.propagate(ctl, cfg, sample_times=ctl.times).states
    assert np.max(np.abs(a - b)) <= 1e-12


def test_adaptive_accuracy_against_fine_fixed_step(backend):
    sys = hadamard_system()
    ctl = smooth_control()
    ref = sys.propagate(ctl, IntegratorConfig.fixed(1.5 / 8000)).final
    assert np.max(np.abs(sys.propagate(ctl).final - ref)) <= 1e-6


def test_halving_tolerances_converges():
    sys = hadamard_system()
    ctl = smooth_control()
    tol = IntegratorConfig(1e-8, 1e-10)
    a = sys.propagate(ctl, tol).final
    b = sys.propagate(ctl, IntegratorConfig(5e-9, 5e-11)).final
    assert np.max(np.abs(a - b)) <= 10 * tol.rtol


def test_dense_output_matches_matrix_exponential():
    g = np.array([[0.0, 1.0], [-1.0, -0.1]], dtype=complex)
    sol = dopri5(lambda t, y: g @ y, 0.0, np.eye(2, dtype=complex), 3.0)
    for t in (0.37, 1.2, 2.99):
        assert np.max(np.abs(sol(t) - expm(g * t))) <= 1e-7


def test_stops_land_on_breakpoints():
    steps = []

    def f(t, y, ref):
        steps.append((t, ref))
        jump = 1.0 if ref >= 0.5 else 0.0
        return np.full_like(y, jump)

    sol = dopri5(f, 0.0, np.zeros(1, dtype=complex), 1.0, stops=np.array([0.5]))
    assert 0.5 in sol.t_start
    assert sol(1.0)[0].real == pytest.approx(0.5, abs=1e-12)


def test_fixed_step_config():
    cfg = IntegratorConfig.fixed(0.1)
    g = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
    sol = dopri5(lambda t, y: g @ y, 0.0, np.eye(2, dtype=complex), 1.0, cfg)
    assert np.allclose(sol.h, 0.1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state_raises():
    with pytest.raises(IntegrationError):
        solve_forward(MatrixODE(lambda t, y, c: np.full_like(y, np.nan)),
                      np.ones((1, 1), dtype=complex), 1.0)


def test_bad_tolerances_rejected():
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0.0)
