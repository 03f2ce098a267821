import math

import numpy as np
import pytest

from imopt.control.signal_models import InternalModel, sine_factor
from imopt.control.synthesis import Controller, SpectralBounds, synthesize
from imopt.errors import BoundUndefinedError, ConfigurationError, UnstableLoopError
from imopt.tracking.analysis import (
    ModelMismatch,
    ScalarTransferFunction,
    TrackingTrace,
    asymptotic_error,
    error_bound_general,
    error_bound_inexact,
    hinf_norm,
    loop_norm_bounds,
    small_gain_check,
)
from imopt.tracking.problems import PerturbationBounds

INTEGRATOR = InternalModel(coeffs=(-1.0,))


def sine_model(theta):
    return InternalModel.from_polynomial(sine_factor(theta))


def test_hinf_of_constant_is_exact():
    assert hinf_norm(ScalarTransferFunction(np.array([1.0]), np.array([1.0]))) == 1.0


def test_hinf_of_first_order_lag():
    tf = ScalarTransferFunction(np.array([1.0]), np.array([-0.5, 1.0]))
    assert hinf_norm(tf) == pytest.approx(2.0, abs=1e-6)


def test_hinf_dominates_dense_grid():
    tf = ScalarTransferFunction(np.array([0.3, 1.0]), np.array([0.4, -0.5, 1.0]))
    dense = tf.magnitude(np.linspace(0.0, 2.0 * math.pi, 1_000_000)).max()
    assert dense <= hinf_norm(tf) + 1e-9


def test_hinf_monotone_under_grid_refinement():
    tf = ScalarTransferFunction(np.array([0.3, 1.0]), np.array([0.4, -0.5, 1.0]))
    for grid in (128, 512, 2048):
        assert hinf_norm(tf, 2 * grid) >= hinf_norm(tf, grid) - 1e-12


def test_unit_circle_pole_is_infinite():
    tf = ScalarTransferFunction(np.array([1.0]), np.array([-1.0, 1.0]))
    assert hinf_norm(tf) == math.inf


def test_hinf_rejects_coarse_grid():
    with pytest.raises(ConfigurationError):
        hinf_norm(ScalarTransferFunction(np.array([1.0]), np.array([1.0])), grid=8)


def test_transfer_function_denominator_must_be_monic():
    with pytest.raises(ConfigurationError):
        ScalarTransferFunction(np.array([1.0]), np.array([1.0, 2.0]))


def test_loop_norms_of_deadbeat_integrator():
    # c_0 = -1/lambda places the closed-loop pole at the origin: (z - 1)/z and (-1/2)/z
    ctrl = Controller(model=INTEGRATOR, K=[-0.5])
    N1, N2 = loop_norm_bounds(ctrl, SpectralBounds(lambda_min=2.0, lambda_max=2.0))
    assert N1 == pytest.approx(2.0, abs=1e-9)
    assert N2 == pytest.approx(0.5, abs=1e-9)


def test_loop_norms_with_zero_controller():
    ctrl = Controller(model=InternalModel(coeffs=(0.0,)), K=[0.0])
    N1, N2 = loop_norm_bounds(ctrl, SpectralBounds(lambda_min=1.0, lambda_max=10.0))
    assert N1 == pytest.approx(1.0, abs=1e-12)
    assert N2 == 0.0


def test_unstable_loop_is_reported(bounds):
    with pytest.raises(UnstableLoopError):
        loop_norm_bounds(Controller(model=INTEGRATOR, K=[0.0]), bounds)


def brute_force_norms(ctrl, A, thetas):
    """sup over the grid of the largest singular value of the two closed-loop transfer matrices"""
    n = A.shape[0]
    bd, cn = ctrl.model.polynomial(), ctrl.numerator()
    n1 = n2 = 0.0
    for theta in thetas:
        z = np.exp(1j * theta)
        b = np.polyval(bd[::-1], z)
        c = np.polyval(cn[::-1], z)
        inverse = np.linalg.inv(b * np.eye(n) - c * A)
        n1 = max(n1, np.linalg.norm(b * inverse, 2))
        n2 = max(n2, np.linalg.norm(c * inverse, 2))
    return n1, n2


def test_loop_norms_dominate_matrix_norms(bounds):
    controllers = [synthesize(INTEGRATOR, bounds), synthesize(sine_model(0.1), bounds),
                   synthesize(sine_model(0.5), bounds)]
    norms = [loop_norm_bounds(ctrl, bounds) for ctrl in controllers]
    rng = np.random.default_rng(5)
    thetas = np.linspace(0.0, 2.0 * math.pi, 2048, endpoint=False)
    for instance in range(20):
        ctrl = controllers[instance % len(controllers)]
        N1, N2 = norms[instance % len(controllers)]
        n = int(rng.integers(2, 11))
        V, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = (V * rng.uniform(1.0, 10.0, n)) @ V.T
        b1, b2 = brute_force_norms(ctrl, A, thetas)
        assert b1 <= N1 + 1e-6
        assert b2 <= N2 + 1e-6


def test_small_gain_without_perturbation(bounds):
    ctrl = Controller(model=INTEGRATOR, K=[-0.1])
    check = small_gain_check(ctrl, bounds, 0.0)
    assert check.passed and check.margin == math.inf


def test_small_gain_violation(bounds):
    ctrl = Controller(model=INTEGRATOR, K=[-0.1])
    _, N2 = loop_norm_bounds(ctrl, bounds)
    assert not small_gain_check(ctrl, bounds, 2.0 / N2).passed
    with pytest.raises(BoundUndefinedError):
        error_bound_general(ctrl, bounds, PerturbationBounds(beta=1.0, delta=0.0, gamma=2.0 / N2))


def test_general_bound(bounds):
    ctrl = Controller(model=INTEGRATOR, K=[-0.1])
    N1, N2 = loop_norm_bounds(ctrl, bounds)
    assert error_bound_general(ctrl, bounds, PerturbationBounds(beta=1.0, delta=0.0, gamma=0.0)) == 0.0
    assert error_bound_general(ctrl, bounds, PerturbationBounds(beta=1.0, delta=0.3, gamma=0.0)) == \
        pytest.approx(0.3 * N1)
    gamma = 0.5 / N2
    expected = N1 * (0.3 + 2.0 * gamma * N2) / (1.0 - gamma * N2)
    assert error_bound_general(ctrl, bounds, PerturbationBounds(beta=2.0, delta=0.3, gamma=gamma)) == \
        pytest.approx(expected)


def test_sine_mismatch_norm():
    mismatch = ModelMismatch.between(sine_model(0.1), sine_model(0.05))
    assert mismatch.one_norm == pytest.approx(2.0 * abs(math.cos(0.05) - math.cos(0.1)))


def test_mismatch_needs_equal_degree():
    with pytest.raises(ConfigurationError):
        ModelMismatch.between(INTEGRATOR, sine_model(0.1))


def test_inexact_bound_vanishes_for_exact_model(bounds):
    ctrl = synthesize(sine_model(0.1), bounds)
    mismatch = ModelMismatch.between(sine_model(0.1), sine_model(0.1))
    assert error_bound_inexact(ctrl, mismatch, bounds, beta=3.0) == 0.0


def test_inexact_bound_scales_with_mismatch(bounds):
    ctrl = synthesize(sine_model(0.05), bounds)
    small = error_bound_inexact(ctrl, ModelMismatch(delta_coeffs=(0.0, 1e-3)), bounds, beta=1.0)
    large = error_bound_inexact(ctrl, ModelMismatch(delta_coeffs=(0.0, 2e-3)), bounds, beta=1.0)
    assert small > 0
    assert large == pytest.approx(2.0 * small)


def test_asymptotic_error_uses_final_four_fifths():
    trace = TrackingTrace(errors=[5.0, 4.0, 3.0, 2.0, 1.0])
    assert asymptotic_error(trace) == 4.0
    trace = TrackingTrace(errors=[9.0] + [0.5] * 9)
    assert asymptotic_error(trace) == 0.5


def test_asymptotic_error_needs_five_steps():
    with pytest.raises(ConfigurationError):
        asymptotic_error(TrackingTrace(errors=[1.0, 1.0]))


def test_trace_rejects_non_finite():
    with pytest.raises(ConfigurationError):
        TrackingTrace(errors=[1.0, math.nan])
