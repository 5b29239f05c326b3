import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dfclab.weather import generate_synthetic_weather  # noqa: E402


@pytest.fixture(scope="session")
def winter_weather():
    """Forty days of synthetic weather at 10-minute spacing."""
    return generate_synthetic_weather(seed=11, days=40, dt=600.0, start="2021-01-01T00:00:00Z")
