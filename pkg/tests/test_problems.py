import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_density
from qocgpm.controls import bv_metric
from qocgpm.linalg import von_neumann_entropy
from qocgpm.problems import (CNOT, HADAMARD, QFT4, REGISTRY, TABLE1, TABLE1_ALPHAS, TABLE1_BETAS,
                             all_problems, get_problem, hadamard_problem, list_problems,
                             table1_cell, two_qubit_system, werner_state, whc_map)


@pytest.mark.parametrize("gate", [HADAMARD, CNOT, QFT4])
def test_gates_unitary(gate):
    n = gate.shape[0]
    assert np.allclose(gate @ gate.conj().T, np.eye(n), atol=1e-14)


def test_cnot_self_inverse():
    assert np.array_equal(CNOT @ CNOT, np.eye(4))


def test_two_qubit_coupling_strength():
    h0 = two_qubit_system().h0
    assert h0[0, 3].real == pytest.approx(0.08)
    assert h0[1, 2].real == pytest.approx(0.08)


@pytest.mark.parametrize("case,penalty,c_max", [(3, 1e-3, 1.0), (4, 8e-3, 0.6)])
def test_hadamard_case_parameters(case, penalty, c_max):
    spec = hadamard_problem(case)
    assert spec.objective.penalty == penalty
    assert spec.horizon == 1.5
    _, hi = spec.problem.bounds()
    assert np.max(hi) == pytest.approx(c_max, abs=1e-3)
    assert hi[0, 0] == 0.0 and hi[-1, 0] == 0.0


def test_bell_target_normalised():
    psi = get_problem("bell").objective.psi_target
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-15)


def test_werner_state_oracles():
    rho = werner_state(0.1)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)
    assert von_neumann_entropy(rho) == pytest.approx(1.372, abs=1e-3)
    assert von_neumann_entropy(werner_state(0.0)) == pytest.approx(np.log(4), abs=1e-12)
    with pytest.raises(ValueError):
        werner_state(1.5)


def test_whc_map_oracles():
    out = whc_map(np.diag([0.0, 0.5, 0.5]))
    assert np.array_equal(out, np.diag([0.5, 0.25, 0.25]).astype(complex))
    assert np.allclose(whc_map(np.eye(3) / 3), np.eye(3) / 3, atol=1e-15)
    with pytest.raises(ValueError):
        whc_map(np.ones((2, 3)))


@given(st.integers(0, 2**31), st.integers(2, 4))
def test_whc_map_channel_properties(seed, n):
    rng = np.random.default_rng(seed)
    a, b = random_density(rng, n), random_density(rng, n)
    out = whc_map(a)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(out, out.conj().T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(out)) >= -1e-12
    assert np.allclose(whc_map(0.3 * a + 0.7 * b), 0.3 * out + 0.7 * whc_map(b), atol=1e-12)


def test_qutrit_overlap_setup():
    spec = get_problem("qutrit_overlap")
    obj = spec.objective
    assert obj.terminal([obj.rho0]) == pytest.approx(0.42)
    a13 = spec.system.channels[0].operator
    assert a13[0, 2] == 1.0 and np.count_nonzero(a13) == 1


def test_table1_lookup():
    assert table1_cell(0.1, 0.0) == (1315, False)
    assert table1_cell(0.35, 0.8) == (63, True)
    assert table1_cell(0.4, 0.0) == (None, False)
    assert set(TABLE1) == set(TABLE1_ALPHAS)
    assert all(len(row) == len(TABLE1_BETAS) for row in TABLE1.values())


@pytest.mark.parametrize("spec", all_problems(n_intervals=100), ids=lambda s: s.id)
def test_initial_guess_feasible(spec):
    u = spec.initial_control()
    lo, hi = spec.problem.bounds()
    assert np.all(u.values >= lo) and np.all(u.values <= hi)
    if np.all(hi[[0, -1]] == 0):
        assert bv_metric(u) == 0.0


def test_registry_and_listing():
    specs = all_problems(n_intervals=50)
    ids = [s.id for s in specs]
    assert len(ids) == len(set(ids)) == 15
    lines = list_problems()
    assert len(lines) == 15 and all(line.split("\t")[0] in ids for line in lines)
    assert set(REGISTRY) == {"hadamard", "cnot", "bell", "werner2q", "qft", "qutrit_overlap", "whc"}


@pytest.mark.parametrize("args", [dict(name="cnot", case=3), dict(name="bell", case=1),
                                  dict(name="whc", task="nope"), dict(name="hadamard", task="x")])
def test_get_problem_rejects(args):
    with pytest.raises(ValueError):
        get_problem(**args)
