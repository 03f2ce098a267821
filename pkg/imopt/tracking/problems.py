# problems.py

"""
Time-varying problem families and their solution oracles.

Oracles (`solution`, `tracking_error`) are used only for error measurement; the
online algorithms see nothing but `gradient`.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np
from pydantic import Field
from scipy import linalg as sla
from scipy.special import expit

from imopt.control.signal_models import SamplingConfig, SignalSpec, signal_sequence
from imopt.control.synthesis import SpectralBounds
from imopt.errors import ConfigurationError, OracleError, ValueModel
from imopt.logger import logger

EIG_TOL = 1e-12
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
DEFAULT_GAMMA0 = 0.5
# sup of sigma(1 - sigma) for the unit vector c
CURVATURE_BOUND = 0.25


class PerturbationBounds(ValueModel):
    """Constants beta >= ||b_k||, delta >= ||grad phi'_k||, gamma >= gain of grad phi''_k"""
    beta: float = Field(ge=0)
    delta: float = Field(ge=0)
    gamma: float = Field(ge=0)
    delta_stated: Optional[float] = None


@dataclass(frozen=True)
class SolutionSet:
    """Affine solution set {point + projector @ w} of a rank-deficient quadratic"""
    point: np.ndarray
    projector: np.ndarray


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    # sign fix makes the factorization unique
    return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))


def spread_eigenvalues(count: int, low: float, high: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in [low, high] with both endpoints included, sorted descending"""
    eigs = rng.uniform(low, high, size=count)
    if count >= 2:
        eigs[0], eigs[1] = low, high
    return np.sort(eigs)[::-1]


class OnlineProblem(ABC):
    """A sequence of costs f_k on R^n, accessed online through its gradient"""

    kind: str = ""

    def __init__(self, n: int, bounds: SpectralBounds, signal: SignalSpec, sampling: SamplingConfig):
        if signal.n != n:
            raise ConfigurationError(f"signal dimension {signal.n} does not match problem dimension {n}")
        self.n = n
        self.bounds = bounds
        self.signal = signal
        self.sampling = sampling
        self._b = self._linear_terms()

    def _linear_terms(self) -> np.ndarray:
        return signal_sequence(self.signal, self.sampling)

    @property
    def horizon(self) -> int:
        return self.sampling.horizon

    def b(self, k: int) -> np.ndarray:
        return self._b[k]

    def phase(self, omega: float, k: int) -> float:
        return float(np.sin(omega * k * self.sampling.Ts))

    @abstractmethod
    def gradient(self, k: int, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def solution(self, k: int):
        ...

    def tracking_error(self, k: int, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.solution(k)))

    @abstractmethod
    def perturbation_bounds(self) -> PerturbationBounds:
        ...

    def describe(self) -> Dict[str, object]:
        return {"problem": self.kind, "n": self.n, "signal": self.signal.kind.value}


class QuadraticProblem(OnlineProblem):
    """
    f_k(x) = 1/2 x^T A x + x^T b_k with A = V diag(eigs) V^T.

    With rank < n (convex variant) the trailing eigenvalues are zero and every
    b_k is projected onto range(A).
    """

    kind = "quadratic"

    def __init__(self, V: np.ndarray, eigs: np.ndarray, signal: SignalSpec, sampling: SamplingConfig,
                 bounds: SpectralBounds, rank: Optional[int] = None):
        n = V.shape[0]
        self.V = np.asarray(V, dtype=float)
        self.eigs = np.asarray(eigs, dtype=float)
        self.rank = n if rank is None else rank
        if self.eigs.shape != (n,) or not 1 <= self.rank <= n:
            raise ConfigurationError(f"eigenvalues {self.eigs.shape} / rank {self.rank} inconsistent with n={n}")
        if not np.allclose(self.V.T @ self.V, np.eye(n), atol=1e-10):
            raise ConfigurationError("V is not orthogonal")
        nonzero = self.eigs[:self.rank]
        if nonzero.min() < bounds.lambda_min - EIG_TOL or nonzero.max() > bounds.lambda_max + EIG_TOL:
            raise ConfigurationError(
                f"eigenvalues [{nonzero.min():g}, {nonzero.max():g}] outside bounds "
                f"[{bounds.lambda_min:g}, {bounds.lambda_max:g}]"
            )
        if np.any(self.eigs[self.rank:] != 0):
            raise ConfigurationError("eigenvalues beyond the rank must be zero")
        self.A = (self.V * self.eigs) @ self.V.T
        self._range = self.V[:, :self.rank]
        self._pinv = (self._range / nonzero) @ self._range.T
        self._factor = sla.cho_factor(self.A) if self.rank == n else None
        super().__init__(n, bounds, signal, sampling)
        if self.convex:
            self.kind = "convex_quadratic"

    @property
    def convex(self) -> bool:
        return self.rank < self.n

    def _linear_terms(self) -> np.ndarray:
        raw = signal_sequence(self.signal, self.sampling)
        if not self.convex:
            return raw
        projected = (raw @ self._range) @ self._range.T
        projected.setflags(write=False)
        return projected

    def gradient(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self._b[k]

    def solution(self, k: int) -> Union[np.ndarray, SolutionSet]:
        if self.convex:
            return SolutionSet(point=-self._pinv @ self._b[k], projector=np.eye(self.n) - self._pinv @ self.A)
        return -sla.cho_solve(self._factor, self._b[k])

    def distance_to_solution(self, k: int, x: np.ndarray) -> float:
        """||A^+ (A x + b_k)||, the distance from x to the solution set"""
        return float(np.linalg.norm(self._pinv @ self.gradient(k, x)))

    def tracking_error(self, k: int, x: np.ndarray) -> float:
        if self.convex:
            return self.distance_to_solution(k, x)
        return super().tracking_error(k, x)

    def perturbation_bounds(self) -> PerturbationBounds:
        beta = float(np.max(np.linalg.norm(self._b, axis=1)))
        return PerturbationBounds(beta=beta, delta=0.0, gamma=0.0)

    def describe(self) -> Dict[str, object]:
        info = super().describe()
        info["rank"] = self.rank
        return info


def random_quadratic(n: int, bounds: SpectralBounds, signal: SignalSpec, seed: int,
                     sampling: SamplingConfig, rank: Optional[int] = None) -> QuadraticProblem:
    """
    Quadratic problem with a seeded random orthogonal basis and eigenvalues
    uniform in the bounds (both endpoints included). `rank < n` builds the
    convex variant.
    """
    if n < 1:
        raise ConfigurationError(f"problem dimension must be positive, got {n}")
    r = n if rank is None else rank
    if not 1 <= r <= n:
        raise ConfigurationError(f"rank must lie in [1, {n}], got {r}")
    rng = np.random.default_rng(seed)
    V = random_orthogonal(n, rng)
    eigs = np.zeros(n)
    eigs[:r] = spread_eigenvalues(r, bounds.lambda_min, bounds.lambda_max, rng)
    return QuadraticProblem(V, eigs, signal, sampling, bounds, rank=r)


class TvHessianProblem(OnlineProblem):
    """Quadratic cost with Hessian A_k = V diag(eigs + sin(omega k Ts) d) V^T"""

    kind = "tv_hessian"

    def __init__(self, base: QuadraticProblem, d: np.ndarray, omega: float):
        if base.convex:
            raise ConfigurationError("time-varying Hessian needs a full-rank base problem")
        self.base = base
        self.V = base.V
        self.d = np.asarray(d, dtype=float)
        self.omega = omega
        if self.d.shape != (base.n,):
            raise ConfigurationError(f"perturbation vector has shape {self.d.shape}, expected ({base.n},)")
        for extreme in (-1.0, 1.0):
            eigs = base.eigs + extreme * self.d
            if eigs.min() < base.bounds.lambda_min - EIG_TOL or eigs.max() > base.bounds.lambda_max + EIG_TOL:
                raise ConfigurationError(
                    f"Hessian eigenvalues leave [{base.bounds.lambda_min:g}, {base.bounds.lambda_max:g}] "
                    f"at sin = {extreme:+g}"
                )
        super().__init__(base.n, base.bounds, base.signal, base.sampling)

    def eigenvalues(self, k: int) -> np.ndarray:
        return self.base.eigs + self.phase(self.omega, k) * self.d

    def hessian(self, k: int) -> np.ndarray:
        return (self.V * self.eigenvalues(k)) @ self.V.T

    def gradient(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.V @ (self.eigenvalues(k) * (self.V.T @ x)) + self._b[k]

    def solution(self, k: int) -> np.ndarray:
        return -self.V @ ((self.V.T @ self._b[k]) / self.eigenvalues(k))

    def perturbation_bounds(self) -> PerturbationBounds:
        beta = float(np.max(np.linalg.norm(self._b, axis=1)))
        return PerturbationBounds(beta=beta, delta=0.0, gamma=float(np.max(np.abs(self.d))))

    def describe(self) -> Dict[str, object]:
        info = super().describe()
        info.update({"omega": self.omega, "gamma": float(np.max(np.abs(self.d)))})
        return info


def tv_hessian_problem(n: int, bounds: SpectralBounds, signal: SignalSpec, seed: int,
                       sampling: SamplingConfig, omega: float, gamma0: float = DEFAULT_GAMMA0) -> TvHessianProblem:
    """
    Base eigenvalues in [lambda_min + gamma0, lambda_max - gamma0], sorted
    descending, paired with the decreasing perturbation d_i = gamma0 (n - i)/n.
    """
    if not 0 <= gamma0 < 0.5 * (bounds.lambda_max - bounds.lambda_min):
        raise ConfigurationError(
            f"gamma0={gamma0} must be below half the spectral width {bounds.lambda_max - bounds.lambda_min:g}"
        )
    rng = np.random.default_rng(seed)
    V = random_orthogonal(n, rng)
    eigs = spread_eigenvalues(n, bounds.lambda_min + gamma0, bounds.lambda_max - gamma0, rng)
    base = QuadraticProblem(V, eigs, signal, sampling, bounds)
    d = gamma0 * (n - np.arange(n)) / n
    return TvHessianProblem(base, d, omega)


class NonQuadraticProblem(OnlineProblem):
    """f_k(x) = 1/2 x^T A x + <b_k, x> + sin(omega k Ts) log(1 + exp<c, x>)"""

    kind = "non_quadratic"

    def __init__(self, base: QuadraticProblem, c: np.ndarray, omega: float):
        if base.convex:
            raise ConfigurationError("non-quadratic cost needs a full-rank base problem")
        self.base = base
        self.A = base.A
        self.c = np.asarray(c, dtype=float)
        self.omega = omega
        if self.c.shape != (base.n,) or abs(np.linalg.norm(self.c) - 1.0) > 1e-12:
            raise ConfigurationError("c must be a unit vector of the problem dimension")
        # the logistic curvature adds at most ||c||^2/4 in either direction
        if not base.bounds.lambda_min > CURVATURE_BOUND:
            raise ConfigurationError(
                f"non-quadratic cost needs lambda_min > {CURVATURE_BOUND} to stay strongly convex, "
                f"got {base.bounds.lambda_min}"
            )
        self._solutions: Dict[int, np.ndarray] = {}
        super().__init__(base.n, base.bounds, base.signal, base.sampling)

    def perturbation_gradient(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.phase(self.omega, k) * expit(self.c @ x) * self.c

    def gradient(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self._b[k] + self.perturbation_gradient(k, x)

    def hessian(self, k: int, x: np.ndarray) -> np.ndarray:
        sigma = expit(self.c @ x)
        return self.A + self.phase(self.omega, k) * sigma * (1.0 - sigma) * np.outer(self.c, self.c)

    def solution(self, k: int) -> np.ndarray:
        """Newton iterations warm-started at the previous step's solution"""
        if k in self._solutions:
            return self._solutions[k]
        x = self._solutions.get(k - 1)
        if x is None:
            x = self.base.solution(k)
        threshold = NEWTON_TOL * max(1.0, float(np.linalg.norm(self._b[k])))
        for _ in range(NEWTON_MAX_ITER):
            g = self.gradient(k, x)
            if np.linalg.norm(g) < threshold:
                self._solutions[k] = x
                return x
            try:
                x = x - sla.solve(self.hessian(k, x), g, assume_a="pos")
            except sla.LinAlgError as e:
                logger.error(f"Oracle - singular Hessian at step {k}", exc_info=True)
                raise OracleError(f"solution oracle failed at step {k}: {e}") from e
        logger.error(f"Oracle - Newton did not converge at step {k} (gradient norm {np.linalg.norm(g):.3e})")
        raise OracleError(f"solution oracle failed to converge at step {k} within {NEWTON_MAX_ITER} iterations")

    def perturbation_bounds(self) -> PerturbationBounds:
        beta = float(np.max(np.linalg.norm(self._b, axis=1)))
        norm_c = float(np.linalg.norm(self.c))
        return PerturbationBounds(beta=beta, delta=norm_c, gamma=0.0, delta_stated=norm_c ** 2 / 4.0)

    def describe(self) -> Dict[str, object]:
        info = super().describe()
        info["omega"] = self.omega
        return info


def non_quadratic_problem(n: int, bounds: SpectralBounds, signal: SignalSpec, seed: int,
                          sampling: SamplingConfig, omega: float) -> NonQuadraticProblem:
    rng = np.random.default_rng(seed)
    base = random_quadratic(n, bounds, signal, int(rng.integers(2 ** 32)), sampling)
    c = rng.standard_normal(n)
    return NonQuadraticProblem(base, c / np.linalg.norm(c), omega)
