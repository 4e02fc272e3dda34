import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qocgpm.base import ControlProblem, Evaluation
from qocgpm.controls import BoxConstraint, ControlGrid, l2_inner
from qocgpm.gpm import (GPMConfig, IterationTrace, first_variation, gpm_run, gpm_step,
                        pmp_residual, projected_step)
from qocgpm.integrate import CauchyCounter
from qocgpm.problems import all_problems, get_problem, hadamard_problem

PROBLEMS = {s.id: s for s in all_problems(n_intervals=200)}


class Quadratic(ControlProblem):
    """Nodewise ``(u - target)^2``; one evaluation counts as one solve."""

    n_components = 1

    def __init__(self, lo=0.0, hi=1.0, target=2.0):
        super().__init__(1.0, BoxConstraint.constant([lo], [hi]), n_intervals=2)
        self.target = target

    def evaluate(self, control, counter=None):
        if counter is not None:
            counter.increment()
        v = float(np.mean((control.values - self.target) ** 2))
        return Evaluation(control, v, v)

    def gradient(self, evaluation, counter=None):
        if counter is not None:
            counter.increment()
        return evaluation.control.with_values(2.0 * (evaluation.control.values - self.target))


def steps_to_boundary(beta):
    hit = []

    def cb(k, ev):
        if not hit and np.max(np.abs(ev.control.values - 1.0)) < 1e-6:
            hit.append(k)

    cfg = GPMConfig("gpm2_fixed" if beta else "gpm1_fixed", alpha=0.1, beta=beta,
                    max_iterations=100, eps_terminal=-1.0, eps_delta=0.0)
    u, _ = gpm_run(Quadratic(), None, cfg, callback=cb)
    return u, hit[0]


def test_scalar_projected_descent_reaches_bound():
    u, k1 = steps_to_boundary(0.0)
    assert np.allclose(u.values, 1.0)
    _, k2 = steps_to_boundary(0.9)
    assert k2 < k1


def test_fixed_point_unchanged_by_step():
    prob = Quadratic()
    u = ControlGrid(1.0, np.ones(3))
    out = gpm_step(prob, u, 0.1)
    assert np.max(np.abs(out.values - u.values)) <= 1e-12


def test_pmp_residual_oracles():
    interior = Quadratic(lo=0.0, hi=5.0)
    assert pmp_residual(interior, ControlGrid(1.0, np.full(3, 2.0)), 0.1) == 0.0
    assert pmp_residual(Quadratic(), ControlGrid(1.0, np.ones(3)), 0.1) == 0.0
    assert pmp_residual(Quadratic(), ControlGrid(1.0, np.zeros(3)), 0.1) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        pmp_residual(Quadratic(), ControlGrid(1.0, np.zeros(3)), 0.0)


def test_projected_step_formula(rng):
    u, up, upp, g = (ControlGrid(1.0, rng.normal(size=(5, 2))) for _ in range(4))
    lo, hi = -np.ones((5, 2)), np.ones((5, 2))
    out = projected_step(u, g, lo, hi, 0.3, 0.5, 0.2, up, upp)
    raw = u.values - 0.3 * g.values + 0.5 * (u.values - up.values) + 0.2 * (up.values - upp.values)
    assert np.array_equal(out.values, np.clip(raw, -1, 1))


def test_layout_mismatch_rejected():
    prob = Quadratic()
    with pytest.raises(ValueError):
        gpm_step(prob, ControlGrid(1.0, np.ones(3)), 0.1, 0.5, u_prev=ControlGrid(1.0, np.ones(5)))


def test_first_variation_oracles():
    spec = hadamard_problem(3, n_intervals=200)
    prob = spec.problem
    u = prob.initial_control().with_values(0.1 * np.ones((201, 2)))
    grad = prob.gradient_at(u)
    zero = u.with_values(np.zeros_like(u.values))
    assert first_variation(prob, u, zero, grad) == 0.0
    neg = u.with_values(-grad.values)
    assert first_variation(prob, u, neg, grad) == pytest.approx(-l2_inner(grad, grad))
    assert first_variation(prob, u, neg, grad) < 0
    h = 1e-4
    d = u.with_values(np.sin(np.pi * u.times / 1.5)[:, None] * np.array([1.0, -0.5]))
    fd = (prob.objective(u.with_values(u.values + h * d.values)) - prob.objective(u)) / h
    assert abs(first_variation(prob, u, d, grad) - fd) <= 1e-2 * abs(fd)


def test_already_converged_start_costs_one_solve():
    spec = hadamard_problem(1, n_intervals=200)
    u, _ = gpm_run(spec.problem, None, spec.defaults)
    counter = CauchyCounter()
    u2, trace = gpm_run(spec.problem, u, spec.defaults, counter=counter)
    assert trace.iterations == 0 and counter.count == 1 and trace.stop_reason == "terminal"
    assert np.array_equal(u2.values, u.values)


def test_case1_gpm2_counts():
    spec = hadamard_problem(1)
    _, trace = gpm_run(spec.problem, None, spec.defaults)
    it, solves = spec.targets["gpm2_fixed"]
    assert trace.stop_reason == "terminal"
    assert it / 2 <= trace.iterations <= 2 * it and solves / 2 <= trace.cauchy_count <= 2 * solves


def test_converged_case3_residual():
    spec = hadamard_problem(3)
    u, trace = gpm_run(spec.problem, None, spec.defaults)
    assert trace.stop_reason == "terminal"
    assert pmp_residual(spec.problem, u, 0.1) <= 1e-3


def test_gpm2_with_zero_beta_matches_gpm1():
    spec = hadamard_problem(3, n_intervals=200)
    cfg = spec.defaults.replace(max_iterations=15)
    _, t1 = gpm_run(spec.problem, None, cfg.replace(variant="gpm1_fixed"))
    _, t2 = gpm_run(spec.problem, None, cfg.replace(variant="gpm2_fixed", beta=0.0))
    assert np.array_equal(t1.column("objective"), t2.column("objective"))


def test_gpm3_bootstrap_steps():
    prob = Quadratic(lo=-10.0, hi=10.0)
    seen = []
    cfg = GPMConfig("gpm3_fixed", alpha=0.1, beta=0.5, xi=0.2, max_iterations=3, eps_terminal=-1)
    gpm_run(prob, ControlGrid(1.0, np.zeros(3)), cfg, callback=lambda k, ev: seen.append(ev.control.values[0, 0]))
    # k=0: one-step, k=1: two-step, k=2: three-step
    u1 = 0.4
    u2 = u1 + 0.2 * (2 - u1) + 0.5 * u1
    u3 = u2 + 0.2 * (2 - u2) + 0.5 * (u2 - u1) + 0.2 * u1
    assert np.allclose(seen, [u1, u2, u3])


@pytest.mark.parametrize("variant", ["gpm1_search", "gpm2_search"])
@pytest.mark.parametrize("search", ["nelder_mead", "anneal"])
def test_search_variants_never_increase(variant, search):
    spec = hadamard_problem(3, n_intervals=200)
    cfg = spec.defaults.replace(variant=variant, search=search, max_iterations=4, search_budget=20,
                                beta_bar0=0.9 if variant == "gpm2_search" else None)
    _, trace = gpm_run(spec.problem, None, cfg)
    obj = trace.column("objective")
    assert np.all(np.diff(obj) <= 1e-12)
    # each restart has its own budget; plus the adjoint solve
    per_iter = (cfg.search_restarts + 1) * 20 + 1
    assert np.all(np.diff(trace.column("cauchy_count")) <= per_iter)


@pytest.mark.parametrize("reset", [True, False])
def test_adaptive_variant_runs(reset):
    spec = hadamard_problem(2, n_intervals=200)
    cfg = spec.defaults.replace(variant="gpm1_adaptive", search_budget=15, max_iterations=12,
                                k_hat=3, reset_to_best=reset)
    _, trace = gpm_run(spec.problem, None, cfg)
    assert trace.records[-1].best_objective <= trace.records[0].objective


@pytest.mark.parametrize("pid", list(PROBLEMS))
def test_one_step_descends(pid):
    spec = PROBLEMS[pid]
    cfg = spec.defaults.replace(max_iterations=1, eps_delta=0.0)
    _, trace = gpm_run(spec.problem, None, cfg)
    if trace.iterations:
        assert trace.records[1].objective < trace.records[0].objective


@pytest.mark.parametrize("pid", list(PROBLEMS))
def test_iterates_feasible(pid):
    spec = PROBLEMS[pid]
    prob = spec.problem
    lo, hi = prob.bounds()
    sinc = np.all(lo[[0, -1]] == 0) and np.all(hi[[0, -1]] == 0)
    bad = []

    def cb(k, ev):
        v = ev.control.values
        if np.any(v < lo) or np.any(v > hi) or (sinc and ev.bv != 0.0):
            bad.append(k)

    gpm_run(prob, None, spec.defaults.replace(max_iterations=5), callback=cb)
    assert not bad


@given(st.floats(0.01, 1.0), st.floats(0.0, 0.95), st.integers(0, 2**31))
@settings(max_examples=25)
def test_quadratic_iterates_feasible(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    prob = Quadratic(lo=-0.5, hi=0.7, target=rng.uniform(-3, 3))
    u0 = ControlGrid(1.0, rng.uniform(-0.5, 0.7, 3))
    cfg = GPMConfig("gpm2_fixed", alpha=alpha, beta=beta, max_iterations=30, eps_terminal=-1)
    vals = []
    gpm_run(prob, u0, cfg, callback=lambda k, ev: vals.append(ev.control.values))
    v = np.array(vals)
    assert np.all(v >= -0.5) and np.all(v <= 0.7)


def test_config_validation():
    for bad in (dict(variant="gpm9"), dict(alpha=0.0), dict(beta=1.0), dict(search="grid"),
                dict(variant="gpm3_fixed", beta=0.5, xi=0.6), dict(alpha_box=(1.0, 0.5)),
                dict(beta_box=(0.0, 1.0)), dict(theta=1.0), dict(max_iterations=-1)):
        with pytest.raises(ValueError):
            GPMConfig(**bad)


def test_trace_csv_round_trip_and_summary(tmp_path):
    spec = hadamard_problem(1, n_intervals=200)
    _, trace = gpm_run(spec.problem, None, spec.defaults)
    trace.to_csv(tmp_path / "trace.csv")
    back = IterationTrace.from_csv(tmp_path / "trace.csv")
    assert back.records == trace.records
    trace.write_summary(tmp_path / "summary.json")
    text = (tmp_path / "summary.json").read_text()
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert data["stop_reason"] == "terminal" and "wall_time" in data
    assert "wall_time" not in trace.summary(include_time=False)


def test_registry_lookup_errors():
    with pytest.raises(KeyError):
        get_problem("nope")
    with pytest.raises(ValueError):
        get_problem("hadamard", case=9)
    with pytest.raises(ValueError):
        get_problem("werner2q", case=1)
