"""
Robust internal-model controller synthesis.

The controller C(z) = C_N(z)/B_D(z) is realized in state space by the companion
pair (F, G) of B_D and the row K = (c_0, ..., c_{m-1}). Closing the loop
through a Hessian eigenvalue lambda gives F + lambda*G*K, whose characteristic
polynomial is B_D(z) - lambda*C_N(z). K is found from two endpoint LMIs
(lambda_min and lambda_max) certifying quadratic stability on the interval.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import Field, model_validator
from scipy import linalg as sla

from imopt.control.lmi import DEFAULT_TOL, LmiSystem, solve_feasibility
from imopt.control.signal_models import InternalModel
from imopt.errors import ConfigurationError, Infeasible, LmiNoConvergence, SynthesisError, ValueModel
from imopt.logger import logger

MAX_CONDITION = 1e12


class SpectralBounds(ValueModel):
    """Eigenvalue bounds lambda_min*I <= A <= lambda_max*I of the Hessian"""
    lambda_min: float = Field(gt=0)
    lambda_max: float

    @model_validator(mode="after")
    def _ordered(self) -> "SpectralBounds":
        if not (math.isfinite(self.lambda_max) and self.lambda_max >= self.lambda_min):
            raise ConfigurationError(
                f"spectral bounds need 0 < lambda_min <= lambda_max < inf, got [{self.lambda_min}, {self.lambda_max}]"
            )
        return self

    def grid(self, points: int) -> np.ndarray:
        return np.linspace(self.lambda_min, self.lambda_max, points)

    @property
    def default_alpha(self) -> float:
        return 2.0 / (self.lambda_min + self.lambda_max)


@dataclass(frozen=True)
class CompanionPair:
    F: np.ndarray
    G: np.ndarray


def companion(model: InternalModel) -> CompanionPair:
    """Companion pair of B_D: ones on the superdiagonal, last row -b, G the last unit vector"""
    m = model.degree
    F = np.eye(m, k=1)
    F[-1, :] = -np.asarray(model.coeffs)
    G = np.zeros((m, 1))
    G[-1, 0] = 1.0
    return CompanionPair(F=F, G=G)


@dataclass
class Controller:
    model: InternalModel
    K: np.ndarray
    companion: Optional[CompanionPair] = None
    rate: float = 1.0
    endpoint_margins: Tuple[float, ...] = ()
    lmi_margin: float = float("nan")

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float).reshape(-1)
        if self.K.size != self.model.degree:
            raise ConfigurationError(f"controller has {self.K.size} coefficients, model degree is {self.model.degree}")
        if self.companion is None:
            self.companion = companion(self.model)

    def closed_loop(self, lam: float) -> np.ndarray:
        return self.companion.F + lam * self.companion.G @ self.K[None, :]

    def spectral_radius(self, lam: float) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.closed_loop(lam)))))

    def numerator(self) -> np.ndarray:
        """C_N(z) ascending, padded to the length of B_D"""
        return np.append(self.K, 0.0)

    def loop_polynomial(self, lam: float) -> np.ndarray:
        """B_D(z) - lambda*C_N(z), ascending"""
        return self.model.polynomial() - lam * self.numerator()


def build_stability_system(pair: CompanionPair, bounds: SpectralBounds, rate: float = 1.0,
                           shift: float = 1.0) -> LmiSystem:
    """
    The two endpoint LMIs

        [[P_l,              F Q + l G R],
         [Q^T F^T + l R^T G^T, Q + Q^T - P_l]]  >  shift*I,   l in {lambda_min, lambda_max}

    with (F, G) scaled by 1/rate. Q is a general square matrix; P_l are symmetric.
    Positivity of P_l is implied by the top-left block.
    """
    m = pair.F.shape[0]
    F = pair.F / rate
    G = pair.G / rate
    I = np.eye(m)
    E1 = np.vstack([I, np.zeros((m, m))])
    E2 = np.vstack([np.zeros((m, m)), I])

    system = LmiSystem()
    system.variable("P_low", (m, m), symmetric=True)
    system.variable("P_high", (m, m), symmetric=True)
    system.variable("Q", (m, m))
    system.variable("R", (1, m))
    for P, lam in (("P_low", bounds.lambda_min), ("P_high", bounds.lambda_max)):
        system.constraint(
            -shift * np.eye(2 * m),
            [
                (P, 0.5 * E1, E1.T),
                (P, -0.5 * E2, E2.T),
                ("Q", E2, E2.T),
                ("Q", E1 @ F, E2.T),
                ("R", lam * E1 @ G, E2.T),
            ],
            name=f"stability@{lam:g}",
        )
    return system


def check_endpoints(ctrl: Controller, bounds: SpectralBounds, rate: float) -> None:
    """Spectral radius strictly below `rate` at both ends of the interval; a root on the boundary fails"""
    for lam in (bounds.lambda_min, bounds.lambda_max):
        radius = ctrl.spectral_radius(lam)
        if not radius < rate:
            raise SynthesisError(
                f"endpoint check failed: spectral radius {radius:.12g} at lambda={lam:g} (required < {rate:g})"
            )


def synthesize(model: InternalModel, bounds: SpectralBounds, rate: float = 1.0,
               tol: float = DEFAULT_TOL) -> Union[Controller, Infeasible]:
    """
    Robustly stabilizing controller K = R Q^-1 for every lambda in the bounds.

    With rate < 1 the closed loop is certified to have spectral radius below `rate`.

    Raises:
        SynthesisError: Q numerically singular, or the endpoint check failed
        LmiNoConvergence: propagated from the LMI solver
    """
    if not 0 < rate <= 1:
        raise ConfigurationError(f"decay rate must lie in (0, 1], got {rate}")
    pair = companion(model)
    system = build_stability_system(pair, bounds, rate=rate)
    result = solve_feasibility(system, tol=tol)
    if isinstance(result, Infeasible):
        logger.info(f"Synthesis - LMIs infeasible for model {model.coeffs} on "
                    f"[{bounds.lambda_min:g}, {bounds.lambda_max:g}] at rate {rate:g}")
        return result

    Q = result.assignments["Q"]
    R = result.assignments["R"]
    condition = np.linalg.cond(Q)
    if not condition <= MAX_CONDITION:
        raise SynthesisError(f"Q is numerically singular (condition number {condition:.3e})")
    # K Q = R  <=>  Q^T K^T = R^T
    K = sla.lu_solve(sla.lu_factor(Q), R.T, trans=1).reshape(-1)

    raw = [M + np.eye(M.shape[0]) for M in system.assemble(result.assignments)]
    margins = tuple(float(sla.eigvalsh(M)[0]) for M in raw)
    ctrl = Controller(model=model, K=K, companion=pair, rate=rate,
                      endpoint_margins=margins, lmi_margin=result.margin)

    check_endpoints(ctrl, bounds, rate)
    logger.info(f"Synthesis - controller K={np.array2string(K, precision=6)} at rate {rate:g}, "
                f"LMI margin {result.margin:.3e}")
    return ctrl


def synthesize_fastest(model: InternalModel, bounds: SpectralBounds, rate_tol: float = 1e-3,
                       tol: float = DEFAULT_TOL) -> Union[Controller, Infeasible]:
    """
    Bisect the certified decay rate r in (0, 1] and return the controller of the
    smallest feasible r found. Infeasible when r = 1 is infeasible.
    """
    best = synthesize(model, bounds, rate=1.0, tol=tol)
    if isinstance(best, Infeasible):
        return best
    low, high = 0.0, 1.0
    while high - low > rate_tol:
        rate = 0.5 * (low + high)
        try:
            candidate = synthesize(model, bounds, rate=rate, tol=tol)
        except (LmiNoConvergence, SynthesisError) as e:
            logger.warning(f"Synthesis - rate {rate:.4g} treated as infeasible: {e}")
            candidate = None
        if isinstance(candidate, Controller):
            best, high = candidate, rate
        else:
            low = rate
    logger.info(f"Synthesis - fastest certified rate {best.rate:.4g}")
    return best


def verify_stability(ctrl: Controller, bounds: SpectralBounds, grid_points: int = 100) -> float:
    """Largest spectral radius of F + lambda*G*K over a uniform lambda grid including both endpoints"""
    if grid_points < 2:
        raise ConfigurationError(f"stability grid needs at least 2 points, got {grid_points}")
    return max(ctrl.spectral_radius(lam) for lam in bounds.grid(grid_points))
