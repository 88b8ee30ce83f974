"""Smoke tests for train.py on tiny networks and short episodes."""
import math
from dataclasses import replace

import pytest

from stepnav.expert import collect_demonstrations
from stepnav.sac import SacAgent, load_checkpoint
from stepnav.sim import EpisodeConfig
from stepnav.train import TrainConfig, load_curves, train

SHORT = EpisodeConfig(n_max=5)


def test_training_from_scratch(empty_env, tiny_sac, tmp_path):
    cfg = TrainConfig(episodes=3, checkpoint_every=2, log_every=1)
    result = train([empty_env], tiny_sac, cfg, seed=0, out_dir=tmp_path, episode_cfg=SHORT,
                   provenance={"seed": "0", "config_hash": "h"})
    assert [r.episode for r in result.rows] == [0, 1, 2]
    assert all(r.demo_fraction == 0.0 for r in result.rows)
    assert [p.name for p in result.checkpoints] == ["ckpt_000002.npz", "final.npz"]
    assert all(math.isfinite(r.total_reward) for r in result.rows)

def test_curves_file_matches_rows(empty_env, tiny_sac, tmp_path):
    result = train([empty_env], tiny_sac, TrainConfig(episodes=2), seed=1, out_dir=tmp_path, episode_cfg=SHORT)
    loaded = load_curves(result.curves_path)
    assert [r.total_reward for r in loaded] == [r.total_reward for r in result.rows]
    assert [r.outcome for r in loaded] == [r.outcome for r in result.rows]

def test_final_checkpoint_restores(empty_env, tiny_sac, tmp_path):
    result = train([empty_env], tiny_sac, TrainConfig(episodes=2), seed=2, out_dir=tmp_path, episode_cfg=SHORT)
    agent = SacAgent(tiny_sac, seed=99)
    meta = load_checkpoint(result.checkpoints[-1], agent)
    assert meta["episode"] == 2
    assert "train" in meta["rng_state"]
    for name, p in result.agent.named_parameters().items():
        assert (agent.named_parameters()[name] == p).all()

def test_same_seed_same_run(empty_env, tiny_sac, tmp_path):
    cfg = TrainConfig(episodes=2)
    a = train([empty_env], tiny_sac, cfg, seed=3, out_dir=tmp_path / "a", episode_cfg=SHORT)
    b = train([empty_env], tiny_sac, cfg, seed=3, out_dir=tmp_path / "b", episode_cfg=SHORT)
    assert [r.total_reward for r in a.rows] == [r.total_reward for r in b.rows]

def test_demonstrations_seed_the_buffer(empty_env, tiny_sac, tmp_path):
    demos = collect_demonstrations([empty_env], n_target=8, seed=0)
    result = train([empty_env], tiny_sac, TrainConfig(episodes=3), seed=4, out_dir=tmp_path,
                   demos=demos, episode_cfg=SHORT)
    assert result.rows[0].demo_fraction == pytest.approx(0.8)
    assert result.rows[-1].demo_fraction <= result.rows[0].demo_fraction
    # a full batch of demonstrations lets updates run from the first online step
    assert result.agent.updates > 0

def test_demonstrations_can_be_ignored(empty_env, tiny_sac, tmp_path):
    demos = collect_demonstrations([empty_env], n_target=4, seed=0)
    result = train([empty_env], tiny_sac, TrainConfig(episodes=1, use_demos=False), seed=4,
                   out_dir=tmp_path, demos=demos, episode_cfg=SHORT)
    assert result.rows[0].demo_fraction == 0.0

def test_no_environments(tiny_sac, tmp_path):
    with pytest.raises(ValueError):
        train([], tiny_sac, TrainConfig(episodes=1), seed=0, out_dir=tmp_path)

def test_bad_train_config():
    with pytest.raises(ValueError):
        TrainConfig(episodes=0)

def test_zero_schedule_matches_scratch(empty_env, tiny_sac, tmp_path):
    cfg = replace(tiny_sac, demo_start=0.0)
    demos = collect_demonstrations([empty_env], n_target=8, seed=0)
    scratch = train([empty_env], cfg, TrainConfig(episodes=3), seed=5, out_dir=tmp_path / "s", episode_cfg=SHORT)
    seeded = train([empty_env], cfg, TrainConfig(episodes=3), seed=5, out_dir=tmp_path / "d",
                   demos=demos, episode_cfg=SHORT)
    assert [r.total_reward for r in seeded.rows] == [r.total_reward for r in scratch.rows]
    assert seeded.agent.updates == scratch.agent.updates
    for name, p in scratch.agent.named_parameters().items():
        assert (seeded.agent.named_parameters()[name] == p).all()
