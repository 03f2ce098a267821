"""
HTTP surface for the experiment pipelines
"""

import os
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Callable, Dict

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from imopt import __version__
from imopt.config import ExperimentConfig
from imopt.errors import ConfigurationError, ImoptError
from imopt.experiments import (
    RunOutcome,
    bounds_pipeline,
    simulate_pipeline,
    sweep_pipeline,
    synthesize_pipeline,
    write_outcome,
)
from imopt.logger import logger

RESULTS_ROOT_ENV = "IMOPT_RESULTS_ROOT"


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("=" * 60)
    logger.info(f"imopt server {__version__} starting")
    logger.info("=" * 60)
    yield
    logger.info("Server shutting down...")


app = FastAPI(title="Internal-model online optimization", version=__version__, lifespan=lifespan)


class ReportResponse(BaseModel):
    report: Dict[str, str]
    infeasible: bool
    failed: bool


def results_root() -> Path:
    return Path(os.getenv(RESULTS_ROOT_ENV, "results")).resolve()


def resolve_output(output: str) -> Path:
    """
    Directory for a request's files: `output` is taken relative to the server's
    results root and may not leave it.
    """
    relative = Path(output)
    if relative.is_absolute() or ".." in relative.parts:
        raise ConfigurationError(f"output must be a relative path inside the results root, got '{output}'")
    root = results_root()
    target = (root / relative).resolve()
    if not target.is_relative_to(root):
        raise ConfigurationError(f"output '{output}' resolves outside the results root")
    return target


def _execute(name: str, pipeline: Callable[[ExperimentConfig], RunOutcome], config: ExperimentConfig,
             write: bool = False) -> ReportResponse:
    logger.info(f"Received {name} request (problem {config.problem.kind}, n={config.n}, seed={config.seed})")
    try:
        target = resolve_output(config.output) if write else None
        outcome = pipeline(config)
        if target is not None:
            write_outcome(target, outcome, "summary.txt")
    except ConfigurationError as e:
        logger.error(f"Invalid {name} request: {e}", exc_info=True)
        raise HTTPException(status_code=422, detail=str(e))
    except ImoptError as e:
        logger.error(f"Error running {name}: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(e))
    return ReportResponse(report=outcome.report, infeasible=outcome.infeasible, failed=outcome.failed)


@app.get("/health")
async def health():
    """Health check endpoint"""
    return {"status": "healthy", "version": __version__}


@app.post("/synthesize", response_model=ReportResponse)
def synthesize(config: ExperimentConfig):
    return _execute("synthesize", synthesize_pipeline, config)


@app.post("/simulate", response_model=ReportResponse)
def simulate(config: ExperimentConfig):
    """Simulate every algorithm; traces and the summary are also written to `output` under the results root"""
    return _execute("simulate", simulate_pipeline, config, write=True)


@app.post("/sweep", response_model=ReportResponse)
def sweep(config: ExperimentConfig):
    return _execute("sweep", sweep_pipeline, config)


@app.post("/bounds", response_model=ReportResponse)
def bounds(config: ExperimentConfig):
    return _execute("bounds", bounds_pipeline, config)
