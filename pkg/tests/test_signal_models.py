import math

import numpy as np
import pytest

from imopt.control.signal_models import (
    Impulse,
    InternalModel,
    SamplingConfig,
    SignalKind,
    SignalSpec,
    annihilation_residual,
    denominator_for,
    generate_b,
    periodic_internal_model,
    poly_multiply,
    signal_sequence,
)
from imopt.errors import AliasingError, ConfigurationError, UnsupportedDerivationError

DIRECTION = (0.5, -1.0, 0.25)


def spec(kind, **kwargs):
    defaults = {"n": 3, "omega": 1.0, "direction": DIRECTION}
    defaults.update(kwargs)
    if kind not in (SignalKind.SINE, SignalKind.SINE_RAMP, SignalKind.SINE_SQUARED):
        defaults.pop("omega")
    if kind not in (SignalKind.RAMP, SignalKind.SINE_RAMP, SignalKind.CONSTANT):
        defaults.pop("direction")
    return SignalSpec(kind=kind, **defaults)


def test_poly_multiply_squares_unit_root():
    np.testing.assert_allclose(poly_multiply([-1.0, 1.0], [-1.0, 1.0]), [1.0, -2.0, 1.0])


def test_poly_multiply_rejects_non_monic():
    with pytest.raises(ConfigurationError):
        poly_multiply([1.0, 2.0], [-1.0, 1.0])


def test_internal_model_accepts_repeated_unit_roots():
    # (z - 1)^3
    model = InternalModel(coeffs=(-1.0, 3.0, -3.0))
    assert model.degree == 3
    np.testing.assert_allclose(model.polynomial(), [-1.0, 3.0, -3.0, 1.0])


def test_internal_model_rejects_unstable_root():
    with pytest.raises(ConfigurationError):
        InternalModel(coeffs=(-2.0,))


def test_internal_model_rejects_non_finite():
    with pytest.raises(ConfigurationError):
        InternalModel(coeffs=(float("nan"), 1.0))


@pytest.mark.parametrize(
    "kind, degree",
    [
        (SignalKind.CONSTANT, 1),
        (SignalKind.RAMP, 2),
        (SignalKind.SINE, 2),
        (SignalKind.SINE_RAMP, 4),
        (SignalKind.SINE_SQUARED, 3),
    ],
)
def test_derived_model_annihilates_signal(kind, degree):
    cfg = SamplingConfig(Ts=0.1, horizon=500)
    s = spec(kind)
    model = denominator_for(s, cfg)
    assert model.degree == degree
    sequence = signal_sequence(s, cfg)
    scale = max(1.0, float(np.abs(sequence).max()))
    assert annihilation_residual(model, sequence) < 1e-9 * scale


def test_ramp_model_coefficients():
    model = denominator_for(spec(SignalKind.RAMP), SamplingConfig(Ts=0.1, horizon=10))
    np.testing.assert_allclose(model.coeffs, (1.0, -2.0))


def test_sine_model_coefficients():
    model = denominator_for(spec(SignalKind.SINE), SamplingConfig(Ts=0.1, horizon=10))
    np.testing.assert_allclose(model.coeffs, (1.0, -2.0 * math.cos(0.1)))


def test_generate_b_matches_closed_form():
    cfg = SamplingConfig(Ts=0.1, horizon=100)
    s = spec(SignalKind.SINE_RAMP)
    k = 37
    expected = math.sin(k * 0.1) + k * 0.1 * np.asarray(DIRECTION)
    np.testing.assert_allclose(generate_b(s, cfg, k), expected, atol=1e-12)


def test_generate_b_out_of_horizon():
    cfg = SamplingConfig(Ts=0.1, horizon=10)
    with pytest.raises(ConfigurationError):
        generate_b(spec(SignalKind.SINE), cfg, 10)


def test_signal_sequence_is_read_only():
    values = signal_sequence(spec(SignalKind.SINE), SamplingConfig(Ts=0.1, horizon=5))
    with pytest.raises(ValueError):
        values[0, 0] = 1.0


def test_piecewise_needs_explicit_model():
    s = SignalSpec(kind=SignalKind.PIECEWISE_IMPULSE, n=1, impulses=(Impulse(step=0, amplitude=(1.0,)),))
    cfg = SamplingConfig(Ts=0.1, horizon=10)
    with pytest.raises(UnsupportedDerivationError):
        denominator_for(s, cfg)
    with pytest.raises(UnsupportedDerivationError):
        generate_b(s, cfg, 0)


def test_piecewise_impulse_through_double_integrator():
    model = InternalModel(coeffs=(1.0, -2.0))
    s = SignalSpec(
        kind=SignalKind.PIECEWISE_IMPULSE, n=1, model=model,
        impulses=(Impulse(step=0, amplitude=(2.0,)), Impulse(step=5, amplitude=(-1.0,))),
    )
    values = signal_sequence(s, SamplingConfig(Ts=0.1, horizon=10))[:, 0]
    # slope 2 from step 2, slope 1 after the second impulse takes effect at step 7
    np.testing.assert_allclose(values, [0, 0, 2, 4, 6, 8, 10, 11, 12, 13], atol=1e-12)
    assert denominator_for(s, SamplingConfig(Ts=0.1, horizon=10)) == model


def test_signal_spec_validation():
    with pytest.raises(ConfigurationError):
        SignalSpec(kind=SignalKind.RAMP, n=3, direction=(1.0, 2.0))
    with pytest.raises(ConfigurationError):
        SignalSpec(kind=SignalKind.SINE, n=3)
    with pytest.raises(ConfigurationError):
        SignalSpec(
            kind=SignalKind.PIECEWISE_IMPULSE, n=1,
            impulses=(Impulse(step=4, amplitude=(1.0,)), Impulse(step=4, amplitude=(1.0,))),
        )


def test_periodic_model_roots_on_unit_circle():
    cfg = SamplingConfig(Ts=0.1, horizon=10)
    model = periodic_internal_model(2.0 * math.pi, cfg, harmonics=2)
    assert model.degree == 5
    angles = np.sort(np.abs(np.angle(model.roots())))
    np.testing.assert_allclose(np.abs(model.roots()), 1.0, atol=1e-9)
    np.testing.assert_allclose(angles, [0.0, 0.1, 0.1, 0.2, 0.2], atol=1e-9)


def test_periodic_model_rejects_aliasing():
    cfg = SamplingConfig(Ts=0.1, horizon=10)
    periodic_internal_model(0.3, cfg, harmonics=1)
    with pytest.raises(AliasingError):
        periodic_internal_model(0.3, cfg, harmonics=2)


def test_periodic_model_annihilates_periodic_signal():
    cfg = SamplingConfig(Ts=0.1, horizon=400)
    model = periodic_internal_model(2.0 * math.pi, cfg, harmonics=3)
    t = np.arange(400) * 0.1
    sequence = (0.3 + np.sin(t) + 0.5 * np.cos(2 * t) - 0.2 * np.sin(3 * t))[:, None]
    assert annihilation_residual(model, sequence) < 1e-9
