import json

import pytest

from imopt.control.signal_models import SamplingConfig
from imopt.control.synthesis import SpectralBounds


@pytest.fixture
def bounds():
    return SpectralBounds(lambda_min=1.0, lambda_max=10.0)


@pytest.fixture
def sampling():
    return SamplingConfig(Ts=0.1, horizon=2000)


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment config to tmp_path and return its path"""

    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return _write


def experiment(signal, algorithms, **overrides):
    data = {
        "schema_version": 1,
        "n": 10,
        "seed": 3,
        "bounds": [1.0, 10.0],
        "signal": signal,
        "sampling": {"Ts": 0.1, "horizon": 2000},
        "algorithms": algorithms,
    }
    data.update(overrides)
    return data


@pytest.fixture
def make_experiment():
    return experiment
