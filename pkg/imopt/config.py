"""
Experiment configuration: one versioned JSON document validated by pydantic
"""

from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from imopt.control.signal_models import Impulse, InternalModel, SamplingConfig, SignalKind, SignalSpec
from imopt.control.synthesis import SpectralBounds
from imopt.errors import ConfigurationError
from imopt.logger import logger


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SignalConfig(Strict):
    kind: SignalKind
    omega: Optional[float] = None
    direction: Optional[List[float]] = None
    impulses: List[Impulse] = []
    model: Optional[List[float]] = None


class QuadraticConfig(Strict):
    kind: Literal["quadratic"] = "quadratic"


class ConvexQuadraticConfig(Strict):
    kind: Literal["convex_quadratic"] = "convex_quadratic"
    rank: Optional[int] = Field(default=None, ge=1)


class TvHessianConfig(Strict):
    kind: Literal["tv_hessian"] = "tv_hessian"
    omega: float = Field(default=1.0, gt=0)
    gamma0: float = Field(default=0.5, ge=0)


class NonQuadraticConfig(Strict):
    kind: Literal["non_quadratic"] = "non_quadratic"
    omega: float = Field(default=1.0, gt=0)


ProblemConfig = Annotated[
    Union[QuadraticConfig, ConvexQuadraticConfig, TvHessianConfig, NonQuadraticConfig],
    Field(discriminator="kind"),
]


class AutoModel(Strict):
    source: Literal["auto"] = "auto"


class ExplicitModel(Strict):
    source: Literal["explicit"] = "explicit"
    coeffs: List[float] = Field(min_length=1)


class PeriodicModel(Strict):
    source: Literal["periodic"] = "periodic"
    period: Optional[float] = Field(default=None, gt=0)
    harmonics: int = Field(default=1, ge=1)


ModelSource = Annotated[Union[AutoModel, ExplicitModel, PeriodicModel], Field(discriminator="source")]


class ControlEntry(Strict):
    method: Literal["control"] = "control"
    label: Optional[str] = None
    model: ModelSource = AutoModel()
    rate: Optional[float] = Field(default=None, gt=0, le=1)
    rate_search: bool = True
    rate_tol: float = Field(default=1e-3, gt=0)

    def default_label(self) -> str:
        if isinstance(self.model, PeriodicModel):
            return f"control_L{self.model.harmonics}"
        if isinstance(self.model, ExplicitModel):
            return "control_explicit"
        return "control"


class GradientEntry(Strict):
    method: Literal["gradient"] = "gradient"
    label: Optional[str] = None
    alpha: Optional[float] = None

    def default_label(self) -> str:
        return "gradient"


class PredictedGradientEntry(Strict):
    method: Literal["predicted_gradient"] = "predicted_gradient"
    label: Optional[str] = None
    alpha: Optional[float] = None

    def default_label(self) -> str:
        return "predicted_gradient"


AlgorithmEntry = Annotated[
    Union[ControlEntry, GradientEntry, PredictedGradientEntry],
    Field(discriminator="method"),
]


class SweepConfig(Strict):
    parameter: Literal["omega_hat"] = "omega_hat"
    values: List[float] = Field(min_length=1)


class ExperimentConfig(Strict):
    schema_version: Literal[1]
    problem: ProblemConfig = QuadraticConfig()
    n: int = Field(default=50, ge=1)
    seed: int = Field(default=0, ge=0)
    bounds: Tuple[float, float] = (1.0, 10.0)
    signal: SignalConfig
    sampling: SamplingConfig = SamplingConfig(Ts=0.1, horizon=2000)
    algorithms: List[AlgorithmEntry] = Field(min_length=1)
    sweep: Optional[SweepConfig] = None
    output: str = "results"

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        SpectralBounds(lambda_min=self.bounds[0], lambda_max=self.bounds[1])
        if isinstance(self.problem, ConvexQuadraticConfig) and self.problem.rank is not None \
                and self.problem.rank >= self.n:
            raise ConfigurationError(f"convex_quadratic needs rank < n, got rank {self.problem.rank} with n {self.n}")
        explicit = [a.label for a in self.algorithms if a.label is not None]
        if len(explicit) != len(set(explicit)):
            raise ConfigurationError(f"algorithm labels must be unique, got {explicit}")
        return self

    @property
    def spectral_bounds(self) -> SpectralBounds:
        return SpectralBounds(lambda_min=self.bounds[0], lambda_max=self.bounds[1])

    def seeds(self) -> Tuple[int, int]:
        """Independent (problem, signal) seeds derived from the experiment seed"""
        problem_seq, signal_seq = np.random.SeedSequence(self.seed).spawn(2)
        return int(problem_seq.generate_state(1)[0]), int(signal_seq.generate_state(1)[0])

    def signal_spec(self) -> SignalSpec:
        """
        The linear-term signal; a missing direction vector is drawn uniformly
        from [-1, 1]^n with the signal seed.
        """
        direction = self.signal.direction
        if direction is None and self.signal.kind in (SignalKind.RAMP, SignalKind.SINE_RAMP, SignalKind.CONSTANT):
            rng = np.random.default_rng(self.seeds()[1])
            direction = rng.uniform(-1.0, 1.0, size=self.n).tolist()
        model = InternalModel(coeffs=tuple(self.signal.model)) if self.signal.model else None
        return SignalSpec(
            kind=self.signal.kind,
            n=self.n,
            omega=self.signal.omega,
            direction=tuple(direction) if direction is not None else None,
            impulses=tuple(self.signal.impulses),
            model=model,
        )

    def labels(self) -> List[str]:
        """Unique label per algorithm entry; colliding derived labels get a numeric suffix"""
        taken = {a.label for a in self.algorithms if a.label is not None}
        counts: Dict[str, int] = {}
        out = []
        for entry in self.algorithms:
            if entry.label is not None:
                out.append(entry.label)
                continue
            base = entry.default_label()
            label = base
            while label in taken:
                counts[base] = counts.get(base, 1) + 1
                label = f"{base}_{counts[base]}"
            taken.add(label)
            out.append(label)
        return out

    def with_overrides(self, seed: Optional[int] = None, output: Optional[str] = None) -> "ExperimentConfig":
        update = {}
        if seed is not None:
            update["seed"] = seed
        if output is not None:
            update["output"] = output
        return self.model_copy(update=update) if update else self


def parse_config(data: Union[str, bytes, dict]) -> ExperimentConfig:
    """Validate a JSON document (text or already-decoded mapping)"""
    try:
        if isinstance(data, dict):
            return ExperimentConfig.model_validate(data)
        return ExperimentConfig.model_validate_json(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config: {e}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    logger.debug(f"Config - loading {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return parse_config(text)
