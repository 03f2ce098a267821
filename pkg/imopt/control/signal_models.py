"""
Rational models of the time-varying linear term b_k and the signals they generate.

Polynomials are stored as ascending coefficient sequences everywhere. An
InternalModel keeps only the non-leading coefficients (b_0, ..., b_{m-1}) of the
monic denominator B_D(z) = z^m + sum_i b_i z^i; `polynomial()` returns the full
ascending array including the leading 1.
"""

import math
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from pydantic import Field, field_validator, model_validator
from scipy import signal as sps

from imopt.errors import AliasingError, ConfigurationError, UnsupportedDerivationError, ValueModel

STABILITY_TOL = 1e-9
# roots closer than this are treated as one repeated root
ROOT_CLUSTER_RADIUS = 1e-4


def clustered_roots(polynomial: Sequence[float]) -> List[Tuple[complex, int]]:
    """
    Roots of an ascending-coefficient polynomial, with numerically split
    repeated roots merged into (centroid, multiplicity) pairs.

    A root of multiplicity k is perturbed by O(eps^(1/k)) by the companion
    eigenvalue computation, while the centroid of the cluster stays accurate
    to O(eps).
    """
    roots = npoly.polyroots(np.asarray(polynomial, dtype=float))
    remaining = list(roots)
    clusters = []
    while remaining:
        seed = remaining.pop(0)
        members = [seed]
        keep = []
        for r in remaining:
            if abs(r - seed) <= ROOT_CLUSTER_RADIUS * max(1.0, abs(seed)):
                members.append(r)
            else:
                keep.append(r)
        remaining = keep
        clusters.append((complex(np.mean(members)), len(members)))
    return clusters


def max_root_modulus(polynomial: Sequence[float]) -> float:
    """Largest modulus among the (clustered) roots; 0 for a constant polynomial"""
    if len(polynomial) <= 1:
        return 0.0
    return max(abs(root) for root, _ in clustered_roots(polynomial))


def poly_multiply(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """
    Product of two monic polynomials given as full ascending coefficient arrays.

    Args:
        a: coefficients of the first factor, leading (last) coefficient 1
        b: coefficients of the second factor, leading (last) coefficient 1

    Returns:
        Full ascending coefficients of a(z)*b(z), monic of degree deg(a)+deg(b)
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for name, p in (("a", a), ("b", b)):
        if p.ndim != 1 or p.size == 0 or not math.isclose(p[-1], 1.0, abs_tol=1e-12):
            raise ConfigurationError(f"polynomial {name} must be monic, got {p.tolist()}")
    product = npoly.polymul(a, b)
    product[-1] = 1.0
    return product


def sine_factor(theta: float) -> np.ndarray:
    """z^2 - 2cos(theta)z + 1, the annihilator of a sampled sinusoid of angular step theta"""
    return np.array([1.0, -2.0 * math.cos(theta), 1.0])


UNIT_ROOT = np.array([-1.0, 1.0])


class InternalModel(ValueModel):
    """Monic denominator B_D(z) of the Z-transform of b_k (the cost-variation model)"""
    coeffs: Tuple[float, ...] = Field(min_length=1)

    @field_validator("coeffs")
    @classmethod
    def _finite_and_stable(cls, coeffs: Tuple[float, ...]) -> Tuple[float, ...]:
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError(f"internal model coefficients must be finite, got {coeffs}")
        radius = max_root_modulus(list(coeffs) + [1.0])
        if radius > 1.0 + STABILITY_TOL:
            raise ValueError(
                f"internal model has a root of modulus {radius:.12g} > 1; "
                "only marginally or asymptotically stable models are allowed"
            )
        return coeffs

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    @classmethod
    def from_polynomial(cls, polynomial: Sequence[float]) -> "InternalModel":
        p = np.asarray(polynomial, dtype=float)
        if p.size < 2 or not math.isclose(p[-1], 1.0, abs_tol=1e-12):
            raise ConfigurationError(f"internal model polynomial must be monic of degree >= 1, got {p.tolist()}")
        return cls(coeffs=tuple(float(c) for c in p[:-1]))

    def polynomial(self) -> np.ndarray:
        return np.array(list(self.coeffs) + [1.0])

    def roots(self) -> np.ndarray:
        return npoly.polyroots(self.polynomial())


class SignalKind(str, Enum):
    RAMP = "ramp"
    SINE = "sine"
    SINE_RAMP = "sine_ramp"
    SINE_SQUARED = "sine_squared"
    CONSTANT = "constant"
    PIECEWISE_IMPULSE = "piecewise_impulse"


USES_OMEGA = {SignalKind.SINE, SignalKind.SINE_RAMP, SignalKind.SINE_SQUARED}
USES_DIRECTION = {SignalKind.RAMP, SignalKind.SINE_RAMP, SignalKind.CONSTANT}


class Impulse(ValueModel):
    step: int = Field(ge=0)
    amplitude: Tuple[float, ...]


class SignalSpec(ValueModel):
    """Description of the linear-term signal b_k"""
    kind: SignalKind
    n: int = Field(ge=1)
    omega: Optional[float] = None
    direction: Optional[Tuple[float, ...]] = None
    impulses: Tuple[Impulse, ...] = ()
    model: Optional[InternalModel] = None

    @model_validator(mode="after")
    def _consistent(self) -> "SignalSpec":
        if self.kind in USES_OMEGA and (self.omega is None or not self.omega > 0):
            raise ConfigurationError(f"signal kind '{self.kind.value}' needs omega > 0, got {self.omega}")
        if self.kind in USES_DIRECTION:
            if self.direction is None:
                raise ConfigurationError(f"signal kind '{self.kind.value}' needs a direction vector")
            if len(self.direction) != self.n:
                raise ConfigurationError(
                    f"direction has length {len(self.direction)} but the problem dimension is {self.n}"
                )
        steps = [imp.step for imp in self.impulses]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ConfigurationError(f"impulse steps must be strictly increasing, got {steps}")
        for imp in self.impulses:
            if len(imp.amplitude) != self.n:
                raise ConfigurationError(
                    f"impulse at step {imp.step} has length {len(imp.amplitude)}, expected {self.n}"
                )
        return self

    def with_omega(self, omega: float) -> "SignalSpec":
        return self.model_copy(update={"omega": omega})


class SamplingConfig(ValueModel):
    Ts: float = Field(gt=0)
    horizon: int = Field(ge=1)


@lru_cache(maxsize=64)
def signal_sequence(spec: SignalSpec, cfg: SamplingConfig) -> np.ndarray:
    """
    All samples b_0, ..., b_{K-1} of the signal as a read-only (K, n) array.

    PiecewiseImpulse signals are the output of the strictly proper filter
    1/B_D(z) (one per coordinate) driven by the impulse train sum_i a_i delta(k - k_i).
    """
    steps = np.arange(cfg.horizon, dtype=float)
    ones = np.ones(spec.n)

    if spec.kind == SignalKind.PIECEWISE_IMPULSE:
        if spec.model is None:
            raise UnsupportedDerivationError("piecewise impulse signals need an explicit internal model")
        drive = np.zeros((cfg.horizon, spec.n))
        for imp in spec.impulses:
            if imp.step < cfg.horizon:
                drive[imp.step] += np.asarray(imp.amplitude)
        m = spec.model.degree
        # 1/B_D(z) = z^-m / (1 + b_{m-1} z^-1 + ... + b_0 z^-m)
        numerator = np.zeros(m + 1)
        numerator[-1] = 1.0
        values = sps.lfilter(numerator, spec.model.polynomial()[::-1], drive, axis=0)
    else:
        t = steps * cfg.Ts
        if spec.kind == SignalKind.CONSTANT:
            values = np.tile(np.asarray(spec.direction), (cfg.horizon, 1))
        elif spec.kind == SignalKind.RAMP:
            values = np.outer(t, spec.direction)
        elif spec.kind == SignalKind.SINE:
            values = np.outer(np.sin(spec.omega * t), ones)
        elif spec.kind == SignalKind.SINE_RAMP:
            values = np.outer(np.sin(spec.omega * t), ones) + np.outer(t, spec.direction)
        elif spec.kind == SignalKind.SINE_SQUARED:
            values = np.outer(np.sin(spec.omega * t) ** 2, ones)
        else:
            raise ConfigurationError(f"unknown signal kind {spec.kind}")

    values = np.ascontiguousarray(values, dtype=float)
    values.setflags(write=False)
    return values


def generate_b(spec: SignalSpec, cfg: SamplingConfig, k: int) -> np.ndarray:
    """The linear term b_k of the given signal at step k"""
    if not 0 <= k < cfg.horizon:
        raise ConfigurationError(f"step {k} outside the horizon [0, {cfg.horizon})")
    return signal_sequence(spec, cfg)[k].copy()


def denominator_for(spec: SignalSpec, cfg: SamplingConfig) -> InternalModel:
    """Minimal annihilating internal model of the signal"""
    kind = spec.kind
    if kind == SignalKind.PIECEWISE_IMPULSE:
        if spec.model is None:
            raise UnsupportedDerivationError(
                "the internal model of a piecewise impulse signal cannot be derived; supply it explicitly"
            )
        return spec.model

    if kind == SignalKind.CONSTANT:
        polynomial = UNIT_ROOT
    elif kind == SignalKind.RAMP:
        polynomial = poly_multiply(UNIT_ROOT, UNIT_ROOT)
    elif kind == SignalKind.SINE:
        polynomial = sine_factor(spec.omega * cfg.Ts)
    elif kind == SignalKind.SINE_RAMP:
        polynomial = poly_multiply(poly_multiply(UNIT_ROOT, UNIT_ROOT), sine_factor(spec.omega * cfg.Ts))
    elif kind == SignalKind.SINE_SQUARED:
        # sin^2(x) = (1 - cos 2x)/2
        polynomial = poly_multiply(UNIT_ROOT, sine_factor(2.0 * spec.omega * cfg.Ts))
    else:
        raise UnsupportedDerivationError(f"no automatic internal model for signal kind {kind}")
    return InternalModel.from_polynomial(polynomial)


def periodic_internal_model(period: float, cfg: SamplingConfig, harmonics: int) -> InternalModel:
    """
    Internal model of a periodic cost: (z - 1) * prod_l (z^2 - 2cos(l*theta)z + 1)
    with theta = 2*pi*Ts/period and l = 1..harmonics.
    """
    if not period > 0:
        raise ConfigurationError(f"period must be positive, got {period}")
    if harmonics < 1:
        raise ConfigurationError(f"harmonic count must be at least 1, got {harmonics}")
    theta = 2.0 * math.pi * cfg.Ts / period
    polynomial = UNIT_ROOT
    for ell in range(1, harmonics + 1):
        if ell * theta >= math.pi:
            raise AliasingError(
                f"harmonic {ell} has angle {ell * theta:.6g} >= pi; "
                f"sampled poles would overlap (period {period}, Ts {cfg.Ts})"
            )
        polynomial = poly_multiply(polynomial, sine_factor(ell * theta))
    return InternalModel.from_polynomial(polynomial)


def annihilation_residual(model: InternalModel, sequence: np.ndarray) -> float:
    """
    Largest entry of B_D(q) b_k for k >= m, with q the forward shift.

    Zero (to rounding) when the model annihilates the signal.
    """
    m = model.degree
    if sequence.shape[0] <= m:
        return 0.0
    filtered = sps.lfilter(model.polynomial()[::-1], [1.0], sequence, axis=0)
    return float(np.max(np.abs(filtered[m:])))
