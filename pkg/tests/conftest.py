import numpy as np
import pytest

from ac_forecast.ensemble.ensemble import ForecastEnsemble, TimeSeries
from ac_forecast.sari.model import SariParams, SariSpec


@pytest.fixture
def small_ensemble():
    """A 3-origin, 2-horizon point ensemble whose origins are 1, 2 and 3."""
    values = np.array(
        [
            [10.0, 11.0],
            [20.0, 21.0],
            [30.0, 31.0],
        ],
    )
    return ForecastEnsemble(values, origin_offset=1)


@pytest.fixture
def ar1_values():
    """Simulated AR(1) with phi = 0.6 and unit innovations, 2000 values."""
    rng = np.random.default_rng(1234)
    noise = rng.normal(size=2200)
    x = np.zeros(2200)
    for t in range(1, 2200):
        x[t] = 0.6 * x[t - 1] + noise[t]
    return x[200:]


@pytest.fixture
def ar1_series(ar1_values):
    """Short AR(1) series for training tests."""
    return TimeSeries("ar1", ar1_values[:120])


@pytest.fixture
def seasonal_model():
    """Stationary seasonal AR used for synthetic suites."""
    return SariSpec(p=1, d=0, P=1, D=0, s=24), SariParams(phi=[0.5], Phi=[0.6], sigma=1.0)


@pytest.fixture
def constant_series():
    """A constant series of length 60."""
    return TimeSeries("flat", np.full(60, 5.0))


@pytest.fixture
def output_dir(tmp_path):
    """Temporary output directory for result stores."""
    return tmp_path / "results"
