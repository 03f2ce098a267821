"""
Exception hierarchy, typed results and the validated value-type base shared across the package
"""

from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, ValidationError


class ImoptError(Exception):
    """Base class for every error raised by imopt"""


class ConfigurationError(ImoptError, ValueError):
    """Malformed input: dimensions, schema, or violated construction invariants"""


class UnsupportedDerivationError(ConfigurationError):
    """An internal model cannot be derived automatically for this signal"""


class AliasingError(ConfigurationError):
    """Harmonics of a periodic model overlap on the unit circle"""


class LmiNoConvergence(ImoptError):
    """The interior-point iteration ran out of Newton steps"""


class SynthesisError(ImoptError):
    """The LMI solution could not be turned into a valid controller"""


class UnstableLoopError(ImoptError):
    """The closed loop is unstable for some Hessian eigenvalue in the grid"""

    def __init__(self, lam: float, radius: float):
        self.lam = lam
        self.radius = radius
        super().__init__(f"closed loop unstable at lambda={lam:.6g} (largest root modulus {radius:.6g})")


class BoundUndefinedError(ImoptError):
    """The small-gain condition fails, so the tracking bound does not hold"""


class OracleError(ImoptError):
    """A solution oracle failed; the experiment must be aborted"""


@dataclass(frozen=True)
class Infeasible:
    """Verdict returned instead of a solution when no strictly feasible point exists"""
    margin: float
    message: str


class ValueModel(BaseModel):
    """
    Frozen value type. Direct construction reports a violated invariant as
    ConfigurationError; nested validation inside a larger model still raises
    pydantic's ValidationError, which the config loader converts.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    def __init__(self, **data):
        try:
            super().__init__(**data)
        except ValidationError as e:
            problems = "; ".join(error["msg"] for error in e.errors())
            raise ConfigurationError(f"invalid {type(self).__name__}: {problems}") from e
