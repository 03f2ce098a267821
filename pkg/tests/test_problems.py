import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from imopt.control.signal_models import SamplingConfig, SignalKind, SignalSpec
from imopt.control.synthesis import SpectralBounds
from imopt.errors import ConfigurationError, OracleError
from imopt.tracking.problems import (
    NonQuadraticProblem,
    SolutionSet,
    TvHessianProblem,
    non_quadratic_problem,
    random_quadratic,
    tv_hessian_problem,
)

SAMPLING = SamplingConfig(Ts=0.1, horizon=200)


def sine_signal(n):
    return SignalSpec(kind=SignalKind.SINE, n=n, omega=1.0)


def constant_signal(n, seed=0):
    rng = np.random.default_rng(seed)
    return SignalSpec(kind=SignalKind.CONSTANT, n=n, direction=tuple(rng.uniform(-1, 1, n)))


def test_random_quadratic_spectrum(bounds):
    problem = random_quadratic(8, bounds, sine_signal(8), seed=1, sampling=SAMPLING)
    eigs = np.linalg.eigvalsh(problem.A)
    assert eigs.min() == pytest.approx(1.0)
    assert eigs.max() == pytest.approx(10.0)
    np.testing.assert_allclose(problem.V.T @ problem.V, np.eye(8), atol=1e-12)


def test_random_quadratic_is_seeded(bounds):
    a = random_quadratic(6, bounds, sine_signal(6), seed=4, sampling=SAMPLING)
    b = random_quadratic(6, bounds, sine_signal(6), seed=4, sampling=SAMPLING)
    c = random_quadratic(6, bounds, sine_signal(6), seed=5, sampling=SAMPLING)
    np.testing.assert_array_equal(a.A, b.A)
    assert not np.allclose(a.A, c.A)


def test_scalar_problem(bounds):
    problem = random_quadratic(1, bounds, sine_signal(1), seed=0, sampling=SAMPLING)
    assert problem.A.shape == (1, 1)
    assert 1.0 <= problem.A[0, 0] <= 10.0


def test_signal_dimension_must_match(bounds):
    with pytest.raises(ConfigurationError):
        random_quadratic(4, bounds, sine_signal(3), seed=0, sampling=SAMPLING)


def test_quadratic_solution_zeroes_gradient(bounds):
    problem = random_quadratic(6, bounds, sine_signal(6), seed=2, sampling=SAMPLING)
    for k in (0, 17, 199):
        x = problem.solution(k)
        np.testing.assert_allclose(problem.gradient(k, x), 0.0, atol=1e-12)
        assert problem.tracking_error(k, x) == pytest.approx(0.0, abs=1e-12)


def test_quadratic_perturbation_bounds_vanish(bounds):
    pert = random_quadratic(6, bounds, sine_signal(6), seed=2, sampling=SAMPLING).perturbation_bounds()
    assert pert.delta == 0.0 and pert.gamma == 0.0
    assert pert.beta == pytest.approx(math.sqrt(6), rel=1e-3)


def test_convex_variant_projects_linear_term(bounds):
    problem = random_quadratic(6, bounds, sine_signal(6), seed=3, sampling=SAMPLING, rank=3)
    assert problem.kind == "convex_quadratic"
    assert np.linalg.matrix_rank(problem.A) == 3
    null = problem.V[:, 3:]
    for k in (5, 50):
        np.testing.assert_allclose(null.T @ problem.b(k), 0.0, atol=1e-12)
    solution = problem.solution(5)
    assert isinstance(solution, SolutionSet)
    shifted = solution.point + null @ np.array([1.0, -2.0, 0.5])
    assert problem.distance_to_solution(5, shifted) == pytest.approx(0.0, abs=1e-10)


def test_convex_distance_matches_brute_force():
    bounds = SpectralBounds(lambda_min=1.0, lambda_max=3.0)
    problem = random_quadratic(2, bounds, sine_signal(2), seed=7, sampling=SAMPLING, rank=1)
    k = 12
    solution = problem.solution(k)
    direction = problem.V[:, 1]
    x = np.array([0.7, -1.3])
    brute = minimize_scalar(lambda s: np.linalg.norm(x - solution.point - s * direction)).fun
    assert problem.distance_to_solution(k, x) == pytest.approx(brute, abs=1e-8)


def test_full_rank_distance_is_euclidean(bounds):
    problem = random_quadratic(5, bounds, sine_signal(5), seed=8, sampling=SAMPLING)
    x = np.linspace(-1, 1, 5)
    expected = np.linalg.norm(x + np.linalg.solve(problem.A, problem.b(9)))
    assert problem.tracking_error(9, x) == pytest.approx(expected, rel=1e-10)


def test_tv_hessian_stays_in_bounds(bounds):
    problem = tv_hessian_problem(10, bounds, constant_signal(10), seed=1, sampling=SAMPLING, omega=1.0)
    assert isinstance(problem, TvHessianProblem)
    for k in range(0, 200, 7):
        eigs = np.linalg.eigvalsh(problem.hessian(k))
        assert eigs.min() >= 1.0 - 1e-9 and eigs.max() <= 10.0 + 1e-9
    assert problem.perturbation_bounds().gamma == pytest.approx(0.5)


def test_tv_hessian_solution(bounds):
    problem = tv_hessian_problem(10, bounds, constant_signal(10), seed=1, sampling=SAMPLING, omega=1.0)
    for k in (0, 16, 33):
        expected = -np.linalg.solve(problem.hessian(k), problem.b(k))
        np.testing.assert_allclose(problem.solution(k), expected, atol=1e-12)
        np.testing.assert_allclose(problem.gradient(k, problem.solution(k)), 0.0, atol=1e-12)


def test_tv_hessian_rejects_wide_perturbation(bounds):
    with pytest.raises(ConfigurationError):
        tv_hessian_problem(10, bounds, constant_signal(10), seed=1, sampling=SAMPLING, omega=1.0, gamma0=5.0)


def test_non_quadratic_gradient_at_origin(bounds):
    problem = non_quadratic_problem(6, bounds, constant_signal(6), seed=3, sampling=SAMPLING, omega=1.0)
    assert isinstance(problem, NonQuadraticProblem)
    k = 10
    expected = problem.b(k) + 0.5 * math.sin(1.0) * problem.c
    np.testing.assert_allclose(problem.gradient(k, np.zeros(6)), expected, atol=1e-14)


def test_non_quadratic_solution_at_vanishing_perturbation(bounds):
    problem = non_quadratic_problem(6, bounds, constant_signal(6), seed=3, sampling=SAMPLING, omega=1.0)
    expected = -np.linalg.solve(problem.A, problem.b(0))
    np.testing.assert_allclose(problem.solution(0), expected, atol=1e-10)


def test_non_quadratic_newton_solution(bounds):
    problem = non_quadratic_problem(6, bounds, constant_signal(6), seed=3, sampling=SAMPLING, omega=1.0)
    for k in range(0, 60):
        x = problem.solution(k)
        assert np.linalg.norm(problem.gradient(k, x)) < 1e-11


def test_non_quadratic_perturbation_is_bounded(bounds):
    problem = non_quadratic_problem(6, bounds, constant_signal(6), seed=3, sampling=SAMPLING, omega=1.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = int(rng.integers(200))
        x = rng.normal(scale=10.0, size=6)
        assert np.linalg.norm(problem.perturbation_gradient(k, x)) <= 1.0
    pert = problem.perturbation_bounds()
    assert pert.delta == pytest.approx(1.0)
    assert pert.delta_stated == pytest.approx(0.25)


def test_non_quadratic_rejects_weak_curvature():
    weak = SpectralBounds(lambda_min=0.1, lambda_max=0.1)
    with pytest.raises(ConfigurationError):
        non_quadratic_problem(1, weak, constant_signal(1), seed=3, sampling=SAMPLING, omega=1.0)


def test_singular_newton_system_is_an_oracle_failure(bounds, monkeypatch):
    problem = non_quadratic_problem(6, bounds, constant_signal(6), seed=3, sampling=SAMPLING, omega=1.0)
    monkeypatch.setattr(problem, "hessian", lambda k, x: np.zeros((6, 6)))
    with pytest.raises(OracleError):
        problem.solution(5)
