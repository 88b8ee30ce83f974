"""Unit tests for features.py: pooling, the proprioceptive block and encoding."""
import math

import numpy as np
import pytest

from stepnav.features import (
    FEATURE_SIZE,
    RawState,
    build_raw_state,
    encode,
    goal_geometry,
    pack_grid,
    pool_grid,
    proprio_block,
    unpack_grid,
)
from stepnav.lip import LipParams, LipState


def _state(grid: np.ndarray, d_o: float = math.inf) -> RawState:
    return RawState(
        grid=grid, position=(1.0, 2.0), velocity=(0.3, -0.1), theta=0.5, stance_index=-1,
        d_g=5.0, delta_theta_g=0.2, d_o=d_o, goal=(6.0, 4.0),
    )


def test_empty_grid_pools_to_zeros():
    assert not pool_grid(np.zeros((64, 64))).any()

def test_single_cell_lights_one_block():
    grid = np.zeros((64, 64), dtype=np.uint8)
    grid[10, 20] = 1
    pooled = pool_grid(grid)
    assert pooled.sum() == 1
    assert pooled[1 * 8 + 2] == 1

def test_pooling_matches_block_maximum():
    rng = np.random.default_rng(0)
    grid = (rng.random((64, 64)) < 0.05).astype(np.uint8)
    pooled = pool_grid(grid)
    for bi in range(8):
        for bj in range(8):
            assert pooled[bi * 8 + bj] == grid[8 * bi:8 * bi + 8, 8 * bj:8 * bj + 8].max()

def test_pool_rejects_wrong_shape():
    with pytest.raises(ValueError):
        pool_grid(np.zeros((32, 32)))

def test_encoding_length_and_layout():
    grid = np.zeros((64, 64), dtype=np.uint8)
    grid[0, 0] = 1
    vec = encode(_state(grid))
    assert vec.shape == (FEATURE_SIZE,) == (75,)
    assert vec[0] == 1.0
    np.testing.assert_array_equal(vec[64:], proprio_block(_state(grid)))

def test_missing_obstacle_encodes_as_far():
    assert proprio_block(_state(np.zeros((64, 64))))[8] == 1.0
    assert proprio_block(_state(np.zeros((64, 64)), d_o=1.5))[8] == pytest.approx(0.5)

def test_goal_geometry_behind():
    d, bearing = goal_geometry((0.0, 0.0), 0.0, (-2.0, 0.0))
    assert d == pytest.approx(2.0)
    assert abs(bearing) == pytest.approx(math.pi)

def test_raw_state_from_standing(empty_env):
    x = LipState.standing(empty_env.start, 0.0, LipParams())
    s = build_raw_state(empty_env, x)
    assert s.d_g == pytest.approx(3.0)
    assert s.delta_theta_g == pytest.approx(0.0)
    assert math.isinf(s.d_o)
    assert not s.grid.any()

def test_raw_state_sees_obstacle(circle_env):
    x = LipState.standing(circle_env.start, 0.0, LipParams())
    s = build_raw_state(circle_env, x)
    assert s.d_o == pytest.approx(1.5, abs=1e-9)
    assert pool_grid(s.grid).any()

def test_packed_grid_restores_cells():
    rng = np.random.default_rng(1)
    grid = (rng.random((64, 64)) < 0.1).astype(np.uint8)
    np.testing.assert_array_equal(unpack_grid(pack_grid(grid)), grid)

def test_unpack_rejects_short_text():
    with pytest.raises(ValueError):
        unpack_grid("ff00")
