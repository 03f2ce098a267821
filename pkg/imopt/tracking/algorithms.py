# algorithms.py

"""
Online algorithms driven by a gradient oracle: the internal-model (control-based)
update and the two unstructured baselines.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from imopt.control.synthesis import Controller
from imopt.errors import ConfigurationError
from imopt.logger import logger
from imopt.tracking.analysis import TrackingTrace
from imopt.tracking.problems import OnlineProblem

OVERFLOW_LIMIT = 1e12


class Method(str, Enum):
    CONTROL = "control"
    GRADIENT = "gradient"
    PREDICTED_GRADIENT = "predicted_gradient"


@dataclass
class AlgorithmState:
    """Auxiliary blocks w (m rows of n-vectors) and the current iterate x"""
    w: np.ndarray
    x: np.ndarray

    @classmethod
    def zeros(cls, m: int, n: int) -> "AlgorithmState":
        return cls(w=np.zeros((m, n)), x=np.zeros(n))


class GradientOracle:
    """Counts (and optionally records) every gradient request made by an algorithm"""

    def __init__(self, problem: OnlineProblem, record: bool = False):
        self.problem = problem
        self.record = record
        self.calls: List[Tuple[int, Optional[np.ndarray]]] = []

    def __call__(self, k: int, x: np.ndarray) -> np.ndarray:
        self.calls.append((k, x.copy() if self.record else None))
        return self.problem.gradient(k, x)

    @property
    def count(self) -> int:
        return len(self.calls)


def step_control(state: AlgorithmState, ctrl: Controller, g: np.ndarray) -> AlgorithmState:
    """
    w' = (F kron I) w + (G kron I) g,  x' = (K kron I) w', applied blockwise.
    """
    w = state.w
    m, n = w.shape
    if m != ctrl.model.degree or g.shape != (n,):
        raise ConfigurationError(
            f"state blocks {w.shape} and gradient {g.shape} do not match model degree {ctrl.model.degree}"
        )
    shifted = np.empty_like(w)
    shifted[:-1] = w[1:]
    shifted[-1] = g - np.asarray(ctrl.model.coeffs) @ w
    return AlgorithmState(w=shifted, x=ctrl.K @ shifted)


def step_gradient(x: np.ndarray, alpha: float, g: np.ndarray) -> np.ndarray:
    return x - alpha * g


def step_predicted_gradient(x: np.ndarray, alpha: float, g_now: np.ndarray, g_prev: np.ndarray) -> np.ndarray:
    """x - alpha (2 grad f_k(x) - grad f_{k-1}(x))"""
    return x - alpha * (2.0 * g_now - g_prev)


def run(method: Method, problem: OnlineProblem, controller: Optional[Controller] = None,
        alpha: Optional[float] = None, horizon: Optional[int] = None,
        oracle: Optional[GradientOracle] = None) -> TrackingTrace:
    """
    Simulate `method` on `problem` from the zero initial state.

    The tracking error at step k is measured before the update that consumes
    grad f_k(x_k). A diverging run stops early; its remaining entries hold
    OVERFLOW_LIMIT and the trace is flagged.
    """
    method = Method(method)
    K = problem.horizon if horizon is None else horizon
    oracle = oracle or GradientOracle(problem)
    n = problem.n
    metadata = dict(problem.describe())
    metadata["method"] = method.value

    if method == Method.CONTROL:
        if controller is None:
            raise ConfigurationError("control-based method needs a controller")
        state = AlgorithmState.zeros(controller.model.degree, n)
        metadata["model"] = list(controller.model.coeffs)
        metadata["K"] = controller.K.tolist()
        metadata["rate"] = controller.rate
    else:
        if alpha is None:
            alpha = problem.bounds.default_alpha
        if not 0 < alpha < 2.0 / problem.bounds.lambda_max:
            logger.warning(f"Simulate - step size {alpha:g} outside (0, {2.0 / problem.bounds.lambda_max:g}); "
                           "convergence is not guaranteed")
        metadata["alpha"] = alpha

    x = np.zeros(n)
    errors = np.full(K, OVERFLOW_LIMIT)
    overflow = False
    for k in range(K):
        err = problem.tracking_error(k, x)
        if not np.isfinite(err) or err > OVERFLOW_LIMIT:
            overflow = True
            logger.warning(f"Simulate - {method.value} diverged at step {k}")
            break
        errors[k] = err

        g = oracle(k, x)
        if method == Method.CONTROL:
            state = step_control(state, controller, g)
            x = state.x
        elif method == Method.GRADIENT:
            x = step_gradient(x, alpha, g)
        else:
            g_prev = oracle(k - 1, x) if k > 0 else g
            x = step_predicted_gradient(x, alpha, g, g_prev)

    logger.info(f"Simulate - {method.value} finished {K} steps on {problem.kind} (final error {errors[-1]:.3e})")
    return TrackingTrace(errors=errors, metadata=metadata, overflow=overflow)
