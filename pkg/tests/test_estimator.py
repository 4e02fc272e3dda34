import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qocgpm import GradientProjection
from qocgpm.gpm import GPMConfig, gpm_run
from qocgpm.problems import hadamard_problem


def test_params_mirror_config():
    est = GradientProjection()
    assert est.get_config() == GPMConfig()
    cfg = GPMConfig("gpm1_fixed", alpha=0.2, max_iterations=7)
    est = GradientProjection.from_config(cfg)
    assert est.get_config() == cfg
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_set_params_validated_on_fit():
    est = GradientProjection().set_params(alpha=-1.0)
    with pytest.raises(ValueError):
        est.fit(hadamard_problem(1))


def test_fit_matches_engine():
    spec = hadamard_problem(1)
    est = GradientProjection.from_config(spec.defaults).fit(spec)
    u, trace = gpm_run(spec.problem, None, spec.defaults)
    assert (est.n_iter_, est.n_cauchy_, est.stop_reason_) == (14, 29, "terminal")
    assert np.array_equal(est.control_.values, u.values)
    assert est.score() == -est.objective_
    assert est.score(spec) == pytest.approx(est.score(), rel=1e-12)
    assert est.pmp_residual() >= 0.0


def test_fit_accepts_problem_and_start():
    spec = hadamard_problem(3, n_intervals=100)
    u0 = spec.initial_control()
    est = GradientProjection(max_iterations=2).fit(spec.problem, u0)
    assert est.n_iter_ == 2 and est.problem_ is spec.problem


def test_not_fitted_and_bad_problem():
    est = GradientProjection()
    with pytest.raises(NotFittedError):
        est.score()
    with pytest.raises(NotFittedError):
        est.pmp_residual()
    with pytest.raises(TypeError):
        est.fit(np.zeros((3, 2)))
