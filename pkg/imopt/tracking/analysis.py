# analysis.py

"""
H-infinity norms of scalar loop transfer functions, tracking-error bounds and trace metrics.

All loop quantities use the sign convention e = A x + b, x = C(z) e, so the
closed loop through a Hessian eigenvalue lambda has denominator
B_D(z) - lambda*C_N(z).
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar

from imopt.control.signal_models import InternalModel, clustered_roots, max_root_modulus
from imopt.control.synthesis import Controller, SpectralBounds
from imopt.errors import BoundUndefinedError, ConfigurationError, UnstableLoopError, ValueModel
from imopt.logger import logger
from imopt.tracking.problems import PerturbationBounds

UNIT_CIRCLE_TOL = 1e-9
DEFAULT_FREQ_GRID = 4096
DEFAULT_LAMBDA_GRID = 100
REFINED_PEAKS = 4


@dataclass(frozen=True)
class ScalarTransferFunction:
    """num(z)/den(z), both ascending coefficient arrays, den monic"""
    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.num, dtype=float))
        den = np.atleast_1d(np.asarray(self.den, dtype=float))
        if not math.isclose(den[-1], 1.0, abs_tol=1e-12):
            raise ConfigurationError(f"transfer function denominator must be monic, got {den.tolist()}")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __call__(self, theta):
        z = np.exp(1j * np.asarray(theta, dtype=float))
        return npoly.polyval(z, self.num) / npoly.polyval(z, self.den)

    def magnitude(self, theta):
        return np.abs(self(theta))

    def has_unit_circle_pole(self) -> bool:
        if self.den.size < 2:
            return False
        return any(abs(abs(root) - 1.0) <= UNIT_CIRCLE_TOL for root, _ in clustered_roots(self.den))


def hinf_norm(tf: ScalarTransferFunction, grid: int = DEFAULT_FREQ_GRID) -> float:
    """
    max over theta in [0, 2pi) of |tf(e^{j theta})|.

    A uniform grid locates the peaks; the largest few are refined with a
    golden-section search. Returns +inf when a pole lies on the unit circle.
    """
    if grid < 64:
        raise ConfigurationError(f"frequency grid needs at least 64 points, got {grid}")
    if tf.has_unit_circle_pole():
        return math.inf

    step = 2.0 * math.pi / grid
    theta = np.arange(grid) * step
    mags = tf.magnitude(theta)
    best = float(mags.max())

    left, right = np.roll(mags, 1), np.roll(mags, -1)
    peaks = np.flatnonzero((mags > left) & (mags >= right))
    for i in peaks[np.argsort(mags[peaks])[::-1][:REFINED_PEAKS]]:
        centre = theta[i]
        try:
            res = minimize_scalar(lambda t: -float(tf.magnitude(t)),
                                  bracket=(centre - step, centre, centre + step),
                                  method="golden", tol=1e-10)
        except ValueError:
            continue
        best = max(best, -float(res.fun))
    return best


def _checked_denominator(ctrl: Controller, lam: float, model: Optional[InternalModel] = None) -> np.ndarray:
    den = (model or ctrl.model).polynomial() - lam * ctrl.numerator()
    radius = max_root_modulus(den)
    if radius >= 1.0 - UNIT_CIRCLE_TOL:
        raise UnstableLoopError(lam, radius)
    return den


def _max_over_lambda(norm_at: Callable[[float], float], bounds: SpectralBounds, lambda_grid: int) -> float:
    """Grid maximum over [lambda_min, lambda_max], refined by a bounded scalar search around the argmax"""
    lams = bounds.grid(max(lambda_grid, 1)) if bounds.lambda_max > bounds.lambda_min else np.array([bounds.lambda_min])
    values = np.array([norm_at(lam) for lam in lams])
    best = float(values.max())
    if lams.size < 3:
        return best
    i = int(values.argmax())
    lo, hi = lams[max(i - 1, 0)], lams[min(i + 1, lams.size - 1)]
    res = minimize_scalar(lambda lam: -norm_at(lam), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-8 * max(1.0, hi)})
    return max(best, -float(res.fun))


def loop_norm_bounds(ctrl: Controller, bounds: SpectralBounds, lambda_grid: int = DEFAULT_LAMBDA_GRID,
                     freq_grid: int = DEFAULT_FREQ_GRID) -> Tuple[float, float]:
    """
    N1 = max_lambda ||B_D / (B_D - lambda C_N)||_inf  bounding ||(I - C(z)A)^-1||_inf,
    N2 = max_lambda ||C_N / (B_D - lambda C_N)||_inf  bounding ||C(z)(I - C(z)A)^-1||_inf.

    Raises:
        UnstableLoopError: the loop is unstable at some lambda
    """
    bd = ctrl.model.polynomial()
    cn = ctrl.numerator()

    def n1(lam):
        return hinf_norm(ScalarTransferFunction(bd, _checked_denominator(ctrl, lam)), freq_grid)

    def n2(lam):
        return hinf_norm(ScalarTransferFunction(cn, _checked_denominator(ctrl, lam)), freq_grid)

    N1 = _max_over_lambda(n1, bounds, lambda_grid)
    N2 = _max_over_lambda(n2, bounds, lambda_grid)
    logger.debug(f"Analysis - loop norms N1={N1:.6g} N2={N2:.6g}")
    return N1, N2


@dataclass(frozen=True)
class SmallGainResult:
    passed: bool
    margin: float


def small_gain_check(ctrl: Controller, bounds: SpectralBounds, gamma: float,
                     norms: Optional[Tuple[float, float]] = None) -> SmallGainResult:
    """N2 < 1/gamma, vacuous (infinite margin) for gamma = 0"""
    if gamma < 0:
        raise ConfigurationError(f"gain bound must be nonnegative, got {gamma}")
    if gamma == 0:
        return SmallGainResult(passed=True, margin=math.inf)
    _, N2 = norms if norms is not None else loop_norm_bounds(ctrl, bounds)
    margin = 1.0 / gamma - N2
    return SmallGainResult(passed=margin > 0, margin=margin)


def error_bound_general(ctrl: Controller, bounds: SpectralBounds, pert: PerturbationBounds,
                        norms: Optional[Tuple[float, float]] = None) -> float:
    """
    limsup ||x_k - x_k*|| <= N1 (delta + beta gamma N2) / (1 - gamma N2).

    Raises:
        BoundUndefinedError: the small-gain condition fails
    """
    N1, N2 = norms if norms is not None else loop_norm_bounds(ctrl, bounds)
    check = small_gain_check(ctrl, bounds, pert.gamma, norms=(N1, N2))
    if not check.passed:
        raise BoundUndefinedError(
            f"small gain violated: gamma*N2 = {pert.gamma * N2:.6g} >= 1 (margin {check.margin:.6g})"
        )
    if pert.delta == 0 and pert.gamma == 0:
        return 0.0
    return N1 * (pert.delta + pert.beta * pert.gamma * N2) / (1.0 - pert.gamma * N2)


class ModelMismatch(ValueModel):
    """Coefficient difference b - b_hat between the true and the assumed internal model"""
    delta_coeffs: Tuple[float, ...]

    @property
    def one_norm(self) -> float:
        return float(sum(abs(d) for d in self.delta_coeffs))

    @classmethod
    def between(cls, true_model: InternalModel, assumed: InternalModel) -> "ModelMismatch":
        if true_model.degree != assumed.degree:
            raise ConfigurationError(
                f"model degrees differ ({true_model.degree} vs {assumed.degree}); mismatch is undefined"
            )
        return cls(delta_coeffs=tuple(b - bh for b, bh in zip(true_model.coeffs, assumed.coeffs)))


def error_bound_inexact(ctrl: Controller, mismatch: ModelMismatch, bounds: SpectralBounds, beta: float,
                        lambda_grid: int = DEFAULT_LAMBDA_GRID, freq_grid: int = DEFAULT_FREQ_GRID) -> float:
    """
    beta * max_lambda ||1 / (B_hat_D - lambda C_N)||_inf * ||delta||_1 for a
    controller built on the assumed model B_hat_D.
    """
    if mismatch.one_norm == 0:
        return 0.0
    one = np.array([1.0])

    def inverse_norm(lam):
        return hinf_norm(ScalarTransferFunction(one, _checked_denominator(ctrl, lam)), freq_grid)

    M = _max_over_lambda(inverse_norm, bounds, lambda_grid)
    return beta * M * mismatch.one_norm


@dataclass
class TrackingTrace:
    errors: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)
    overflow: bool = False

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=float)
        if not np.all(np.isfinite(self.errors)) or np.any(self.errors < 0):
            raise ConfigurationError("trace entries must be finite and nonnegative; flag divergence instead")

    def __len__(self) -> int:
        return self.errors.size


def asymptotic_error(trace: TrackingTrace) -> float:
    """Maximum error over the final ceil(4K/5) steps; +inf for a diverged trace"""
    K = len(trace)
    if K < 5:
        raise ConfigurationError(f"asymptotic error needs at least 5 steps, got {K}")
    if trace.overflow:
        return math.inf
    return float(trace.errors[-math.ceil(4 * K / 5):].max())
