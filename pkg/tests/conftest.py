from __future__ import annotations

from typing import Iterator

import pytest

from qlv_sim.config import reset_settings
from qlv_sim.protocol.types import Geometry, ScenarioConfig


@pytest.fixture(autouse=True)
def _default_settings() -> Iterator[None]:
    reset_settings()
    yield
    reset_settings()


@pytest.fixture()
def line_geometry() -> Geometry:
    return Geometry(stations={"A": (0.0, 0.0), "B": (30_000.0, 0.0)}, device=(12_000.0, 0.0))


@pytest.fixture()
def plane_geometry() -> Geometry:
    return Geometry(
        stations={"A": (0.0, 0.0), "B": (40_000.0, 0.0), "D": (20_000.0, 30_000.0)},
        device=(20_000.0, 10_000.0),
        dimension=2,
    )


@pytest.fixture()
def honest_config(line_geometry: Geometry) -> ScenarioConfig:
    return ScenarioConfig(geometry=line_geometry, pairs=40, challenge_bits=32, seed=3)
