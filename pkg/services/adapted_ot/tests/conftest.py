import numpy as np
import pytest

from services.adapted_ot.app.core.config import get_settings
from services.adapted_ot.app.core.measures import PairedMeasure
from services.adapted_ot.app.core.spaces import FiniteMetricSpace


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def line():
    """Five points 0, 1, 2, 3, 4 on the real line."""
    return FiniteMetricSpace.from_points([0.0, 1.0, 2.0, 3.0, 4.0])


@pytest.fixture
def graph_measure(line) -> PairedMeasure:
    """y = x on three atoms."""
    return PairedMeasure.from_atoms(
        line, line, [((0, 0), 0.25), ((1, 1), 0.25), ((2, 2), 0.5)]
    )


@pytest.fixture
def split_measure(line) -> PairedMeasure:
    """Two atoms at x = 0 with y = 1 and y = 3."""
    return PairedMeasure.from_atoms(line, line, [((0, 1), 0.5), ((0, 3), 0.5)])


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Keep host environment overrides out of the tests."""
    for name in (
        "LOG_LEVEL",
        "THREADS",
        "P",
        "SEED",
        "OUTPUT_FORMAT",
        "MASS_TOL",
        "GRAPH_TOL",
    ):
        monkeypatch.delenv(f"ADAPTED_OT_{name}", raising=False)
    monkeypatch.setenv("ENV_FILE", "/nonexistent/.env")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
