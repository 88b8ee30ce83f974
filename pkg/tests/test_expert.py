"""Unit tests for expert.py: RRT planning, subgoal extraction and demonstration collection."""
import math

import numpy as np
import pytest

from stepnav.exceptions import ParseError, PlanningError
from stepnav.expert import (
    ExpertConfig,
    RrtLmpcPolicy,
    build_tree,
    collect_demonstrations,
    extract_subgoal,
    load_demos,
    replay_demo_rewards,
    rrt_plan,
    save_demos,
    shortcut,
)
from stepnav.lip import LipParams, LipState
from stepnav.reward import Outcome
from stepnav.world import Environment, segment_free


@pytest.fixture(scope="module")
def demos():
    env = Environment(id=0, obstacles=(), start=(0.0, 0.0), goal=(3.0, 0.0))
    return env, collect_demonstrations([env], n_target=5, seed=0)


# --- RRT ---

def test_open_field_shortcuts_to_straight_line(empty_env):
    path = rrt_plan(empty_env, empty_env.start, empty_env.goal, seed=0)
    assert path == [empty_env.start, empty_env.goal]

def test_plan_is_deterministic_in_seed(mixed_env):
    a = rrt_plan(mixed_env, mixed_env.start, mixed_env.goal, seed=4)
    b = rrt_plan(mixed_env, mixed_env.start, mixed_env.goal, seed=4)
    assert a == b

def test_trap_path_is_collision_free(trap_env):
    path = rrt_plan(trap_env, trap_env.start, trap_env.goal, seed=1)
    assert path[0] == trap_env.start and path[-1] == trap_env.goal
    assert len(path) >= 3
    for a, b in zip(path[:-1], path[1:]):
        assert segment_free(trap_env, a, b)

def test_tree_edges_respect_step_size(mixed_env):
    cfg = ExpertConfig()
    tree, reached = build_tree(mixed_env, mixed_env.start, mixed_env.goal, seed=2, cfg=cfg)
    assert reached is not None
    for i, parent in enumerate(tree.parent):
        if parent is not None:
            assert math.dist(tree.nodes[i], tree.nodes[parent]) <= cfg.step_size + 1e-9

def test_sample_budget_exhaustion(trap_env):
    tree, reached = build_tree(trap_env, trap_env.start, trap_env.goal, seed=0, cfg=ExpertConfig(max_samples=5))
    assert reached is None
    with pytest.raises(PlanningError):
        rrt_plan(trap_env, trap_env.start, trap_env.goal, seed=0, cfg=ExpertConfig(max_samples=5))

def test_start_in_collision(circle_env):
    with pytest.raises(PlanningError):
        rrt_plan(circle_env, (2.0, 0.0), circle_env.goal, seed=0)

def test_shortcut_keeps_endpoints(circle_env):
    path = [(0.0, 0.0), (1.0, 1.5), (2.0, 1.5), (3.0, 1.5), (6.0, 0.0)]
    out = shortcut(circle_env, path, 0.3, 0.05)
    assert out[0] == path[0] and out[-1] == path[-1]
    assert len(out) < len(path)

def test_bad_expert_config():
    with pytest.raises(ValueError):
        ExpertConfig(goal_bias=1.5)
    with pytest.raises(ValueError):
        ExpertConfig(max_samples=0)


# --- Subgoals ---

def test_subgoal_on_straight_path(empty_env):
    sg = extract_subgoal([(0.0, 0.0), (2.0, 0.0)], ((0.0, 0.0), 0.0), empty_env)
    assert sg.d_c == pytest.approx(2.0)
    assert sg.phi_c == pytest.approx(0.0)

def test_subgoal_respects_lookahead(empty_env):
    sg = extract_subgoal([(0.0, 0.0), (6.0, 0.0)], ((0.0, 0.0), 0.0), empty_env)
    assert sg.d_c == pytest.approx(3.0)

def test_subgoal_bearing_is_clamped(empty_env):
    sg = extract_subgoal([(0.0, 0.0), (0.0, 2.0)], ((0.0, 0.0), 0.0), empty_env)
    assert sg.phi_c == pytest.approx(math.pi / 4)

def test_subgoal_stops_short_of_occluded_points(circle_env):
    sg = extract_subgoal([(0.0, 0.0), (3.0, 0.0)], ((0.0, 0.0), 0.0), circle_env)
    assert sg.d_c < 1.3

def test_empty_path_rejected(empty_env):
    with pytest.raises(PlanningError):
        extract_subgoal([], ((0.0, 0.0), 0.0), empty_env)


# --- Policy ---

def test_policy_plans_on_reset(empty_env):
    policy = RrtLmpcPolicy()
    x = LipState.standing(empty_env.start, 0.0, LipParams())
    policy.reset(empty_env, x, np.random.default_rng(0))
    assert policy.path[0] == pytest.approx(empty_env.start, abs=1e-12)
    assert policy.path[-1] == empty_env.goal

def test_strict_policy_raises_when_unplannable(circle_env):
    x = LipState.standing((2.0, 0.0), 0.0, LipParams())
    with pytest.raises(PlanningError):
        RrtLmpcPolicy(strict=True).reset(circle_env, x, np.random.default_rng(0))

def test_lenient_policy_falls_back_to_straight_line(circle_env):
    x = LipState.standing((2.0, 0.0), 0.0, LipParams())
    policy = RrtLmpcPolicy()
    policy.reset(circle_env, x, np.random.default_rng(0))
    assert len(policy.path) == 2
    assert policy.path[-1] == circle_env.goal


# --- Demonstrations ---

def test_demos_truncated_to_target(demos):
    _, dataset = demos
    assert len(dataset) == 5
    assert [r.step for r in dataset.records] == [1, 2, 3, 4, 5]
    assert all(r.episode == 0 and r.env_id == 0 for r in dataset.records)
    assert all(r.episode_outcome is Outcome.GOAL for r in dataset.records)

def test_demo_transitions_are_flagged(demos):
    _, dataset = demos
    transitions = dataset.transitions()
    assert len(transitions) == 5
    assert all(tr.demo for tr in transitions)
    assert transitions[0].features.shape == (75,)

def test_demo_rewards_replay(demos):
    env, dataset = demos
    replayed = replay_demo_rewards(dataset, {env.id: env})
    assert replayed == pytest.approx([r.reward for r in dataset.records], abs=1e-12)

def test_demos_reload(demos, tmp_path):
    env, dataset = demos
    loaded = load_demos(save_demos(dataset, tmp_path / "demos.demos", {"seed": "0"}))
    assert len(loaded) == len(dataset)
    for a, b in zip(loaded.records, dataset.records):
        assert a.action == pytest.approx(b.action)
        assert a.reward == b.reward
        assert a.state.position == b.state.position
        np.testing.assert_array_equal(a.next_state.grid, b.next_state.grid)
    assert replay_demo_rewards(loaded, {env.id: env}) == pytest.approx([r.reward for r in dataset.records], abs=1e-12)

def test_collect_needs_environments():
    with pytest.raises(ValueError):
        collect_demonstrations([], n_target=5)

def test_unplannable_suite_raises(circle_env):
    blocked = Environment(id=9, obstacles=circle_env.obstacles, start=(2.0, 0.0), goal=(6.0, 0.0))
    with pytest.raises(PlanningError):
        collect_demonstrations([blocked], n_target=5)

def test_demos_wrong_kind(env_circle_file):
    with pytest.raises(ParseError):
        load_demos(env_circle_file)
