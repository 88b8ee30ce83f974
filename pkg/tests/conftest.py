"""Shared fixtures for all stepnav tests."""
from pathlib import Path
import pytest

from stepnav._shapes import Circle, ConvexPolygon, Ellipse
from stepnav.sac import SacConfig
from stepnav.world import Environment, generate_trap_environment

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def env_circle_file() -> Path:
    return FIXTURES / "env_circle.env"


@pytest.fixture
def invalid_trace_file() -> Path:
    return FIXTURES / "invalid_trace.trace"


@pytest.fixture
def type_mismatch_file() -> Path:
    return FIXTURES / "type_mismatch.trace"


@pytest.fixture
def empty_env() -> Environment:
    """No obstacles, goal 3 m straight ahead."""
    return Environment(id=0, obstacles=(), start=(0.0, 0.0), goal=(3.0, 0.0))


@pytest.fixture
def circle_env() -> Environment:
    return Environment(id=1, obstacles=(Circle(center=(2.0, 0.0), radius=0.5),), start=(0.0, 0.0), goal=(6.0, 0.0))


@pytest.fixture
def mixed_env() -> Environment:
    obstacles = (
        Circle(center=(3.0, 3.0), radius=0.5),
        Ellipse(center=(6.0, 2.0), semi_axes=(0.8, 0.4), rotation=0.5),
        ConvexPolygon(vertices=((4.0, 6.0), (5.0, 6.0), (5.0, 7.0), (4.0, 7.0))),
    )
    return Environment(id=2, obstacles=obstacles, start=(0.0, 0.0), goal=(8.0, 8.0))


@pytest.fixture
def trap_env() -> Environment:
    return generate_trap_environment(11, env_id=7)


@pytest.fixture
def tiny_sac() -> SacConfig:
    return SacConfig(hidden=(16, 16), batch_size=8, buffer_capacity=64)
