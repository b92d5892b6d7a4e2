import numpy as np
import pytest

from services.adapted_ot.app.core.config import get_settings

SETTINGS = (
    "LOG_LEVEL",
    "THREADS",
    "P",
    "SEED",
    "OUTPUT_FORMAT",
    "MASS_TOL",
    "GRAPH_TOL",
)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Run every suite on default settings, whatever the host exports."""
    for name in SETTINGS:
        monkeypatch.delenv(f"ADAPTED_OT_{name}", raising=False)
    monkeypatch.setenv("ENV_FILE", "/nonexistent/.env")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
