"""Unit tests for sac.py: schedule, replay, targets, squashing and checkpoints."""
import math

import numpy as np
import pytest

from stepnav.exceptions import ParseError, TrainingError
from stepnav.features import FEATURE_SIZE, RawState
from stepnav.sac import (
    Batch,
    ReplayBuffer,
    SacAgent,
    SacConfig,
    Transition,
    demo_fraction,
    load_checkpoint,
    normalize_action,
    save_checkpoint,
    squash,
    squashed_log_prob,
)


def _transition(rng, reward: float = 0.0, done: bool = False, demo: bool = False) -> Transition:
    return Transition(
        features=rng.random(FEATURE_SIZE),
        action=np.array([rng.uniform(0, 3), rng.uniform(-math.pi / 4, math.pi / 4)]),
        reward=reward,
        next_features=rng.random(FEATURE_SIZE),
        done=done,
        demo=demo,
    )


# --- Demonstration schedule ---

def test_demo_fraction_schedule():
    assert demo_fraction(0, 100) == 0.8
    assert demo_fraction(10, 100) == pytest.approx(0.8)
    assert demo_fraction(30, 100) == pytest.approx(0.4)
    assert demo_fraction(50, 100) == 0.0
    assert demo_fraction(100, 100) == 0.0

def test_demo_fraction_is_non_increasing():
    values = [demo_fraction(e, 200) for e in range(201)]
    assert all(a >= b for a, b in zip(values, values[1:]))

def test_demo_schedule_validation():
    with pytest.raises(ValueError):
        SacConfig(demo_hold=0.6, demo_end=0.5)
    with pytest.raises(ValueError):
        SacConfig(encoder="transformer")


# --- Replay ---

def test_batch_split_rounds_to_nearest():
    rng = np.random.default_rng(0)
    buf = ReplayBuffer(10, demos=[_transition(rng, demo=True) for _ in range(5)])
    buf.append(_transition(rng))
    assert buf.split(64, 0.8) == 51
    assert buf.split(64, 0.0) == 0

def test_empty_partition_redirects_batch():
    rng = np.random.default_rng(1)
    only_demos = ReplayBuffer(10, demos=[_transition(rng, demo=True)])
    assert only_demos.split(64, 0.1) == 64
    only_online = ReplayBuffer(10)
    only_online.append(_transition(rng))
    assert only_online.split(64, 0.8) == 0
    batch = only_online.sample(8, 0.8, rng)
    assert len(batch) == 8 and not batch.demo.any()

def test_fifo_eviction():
    rng = np.random.default_rng(2)
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.append(_transition(rng, reward=float(i)))
    assert buf.online_size == 3
    assert [tr.reward for tr in buf.online()] == [2.0, 3.0, 4.0]

def test_sample_mixes_partitions():
    rng = np.random.default_rng(3)
    buf = ReplayBuffer(10, demos=[_transition(rng, demo=True) for _ in range(4)])
    for _ in range(4):
        buf.append(_transition(rng))
    batch = buf.sample(10, 0.5, rng)
    assert int(batch.demo.sum()) == 5
    assert batch.features.shape == (10, FEATURE_SIZE)

def test_empty_buffer_cannot_sample():
    with pytest.raises(TrainingError):
        ReplayBuffer(4).sample(2, 0.5, np.random.default_rng(0))

def test_bad_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(0)


# --- Squashing ---

def test_squash_stays_in_action_box():
    _, action = squash(np.array([[-50.0, 50.0], [0.0, 0.0], [50.0, -50.0]]))
    assert np.all(action[:, 0] >= 0.0) and np.all(action[:, 0] <= 3.0)
    assert np.all(np.abs(action[:, 1]) <= math.pi / 4)
    np.testing.assert_allclose(action[1], [1.5, 0.0])

def test_normalize_inverts_squash():
    t, action = squash(np.array([0.3, -0.7]))
    np.testing.assert_allclose(normalize_action(action), t, atol=1e-12)

def test_log_prob_matches_change_of_variables():
    u = np.array([0.4, -1.1])
    mu = np.array([0.1, -0.5])
    log_sigma = np.array([-0.3, 0.2])
    sigma = np.exp(log_sigma)
    normal = -0.5 * ((u - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * math.log(2 * math.pi)
    jac = np.log(1 - np.tanh(u) ** 2) + np.log([1.5, math.pi / 4])
    assert squashed_log_prob(u, mu, log_sigma) == pytest.approx(float(np.sum(normal - jac)), abs=1e-10)


# --- Agent ---

def test_terminal_target_is_reward(tiny_sac):
    rng = np.random.default_rng(4)
    agent = SacAgent(tiny_sac, seed=0)
    batch = Batch.stack([_transition(rng, reward=r, done=True) for r in (1.0, -80.0, 0.5)])
    np.testing.assert_array_equal(agent.critic_targets(batch), [1.0, -80.0, 0.5])

def test_update_reports_finite_losses(tiny_sac):
    rng = np.random.default_rng(5)
    agent = SacAgent(tiny_sac, seed=0)
    batch = Batch.stack([_transition(rng, reward=float(rng.random())) for _ in range(8)])
    before = agent.targets[0].parameters()[0].copy()
    losses = agent.sac_update(batch)
    assert all(math.isfinite(v) for v in (losses.critic, losses.actor, losses.alpha_loss, losses.alpha))
    assert agent.updates == 1
    assert not np.array_equal(agent.targets[0].parameters()[0], before)

def test_act_returns_bounded_action(tiny_sac):
    agent = SacAgent(tiny_sac, seed=0)
    state = RawState(
        grid=np.zeros((64, 64), dtype=np.uint8), position=(0.0, 0.0), velocity=(0.0, 0.0), theta=0.0,
        stance_index=1, d_g=5.0, delta_theta_g=0.1, d_o=math.inf, goal=(5.0, 0.0),
    )
    for deterministic in (True, False):
        d, phi = agent.act(state, deterministic=deterministic)
        assert 0.0 <= d <= 3.0
        assert abs(phi) <= math.pi / 4
    np.testing.assert_array_equal(agent.act(state, deterministic=True), agent.act(state, deterministic=True))


# --- Checkpoints ---

def test_checkpoint_restores_agent(tiny_sac, tmp_path):
    rng = np.random.default_rng(6)
    agent = SacAgent(tiny_sac, seed=0)
    agent.sac_update(Batch.stack([_transition(rng) for _ in range(8)]))
    path = save_checkpoint(agent, tmp_path / "ckpt.npz", episode=12, provenance={"seed": "0", "config_hash": "abc"})

    other = SacAgent(tiny_sac, seed=1)
    meta = load_checkpoint(path, other)
    assert meta["episode"] == 12
    assert meta["config_hash"] == "abc"
    for name, p in agent.named_parameters().items():
        np.testing.assert_array_equal(other.named_parameters()[name], p)
    assert other.updates == 1
    assert other.rng.random() == agent.rng.random()

def test_foreign_archive_rejected(tiny_sac, tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, weights=np.zeros(3))
    with pytest.raises(ParseError):
        load_checkpoint(path, SacAgent(tiny_sac))

def test_missing_checkpoint(tiny_sac, tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "absent.npz", SacAgent(tiny_sac))

def test_demo_share_audit_at_first_episode():
    rng = np.random.default_rng(7)
    buf = ReplayBuffer(100, demos=[_transition(rng, demo=True) for _ in range(20)])
    for _ in range(20):
        buf.append(_transition(rng))
    fraction = demo_fraction(0, 100)
    share = np.mean([buf.sample(64, fraction, rng).demo.mean() for _ in range(1000)])
    sigma = math.sqrt(0.8 * 0.2 / (64 * 1000))
    assert abs(share - 0.8) <= 3 * sigma
