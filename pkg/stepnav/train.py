"""SAC training loop with optional demonstration bootstrapping.

Public API:
    TrainConfig, CurveRow, TrainResult
    train(envs, sac_cfg, train_cfg, seed, out_dir, demos=None, ...)
    save_curves, load_curves

One gradient update follows every online step once the replay buffer holds a
full batch; demonstrations count toward it only while the demo fraction is
nonzero, so a zero schedule reproduces training from scratch exactly. Batches
mix demonstrations and online transitions according to
demo_fraction(episode, total); with no demonstrations every batch is online.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Union

import numpy as np
from loguru import logger

from ._records import read_artifact, write_artifact
from .exceptions import ParseError
from .lip import LipParams
from .lmpc import LipMpcPlanner, MpcConfig
from .reward import Outcome, RewardParams
from .sac import ReplayBuffer, SacAgent, SacConfig, SacLosses, Transition, demo_fraction, save_checkpoint
from .sim import EpisodeConfig, SacPolicy, StepRecord, run_episode
from .world import Environment

if TYPE_CHECKING:
    from .expert import DemoDataset


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 10_000
    checkpoint_every: int = 500
    log_every: int = 50
    use_demos: bool = True

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError(f"episodes must be ≥ 1, got {self.episodes}")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ValueError("checkpoint_every and log_every must be ≥ 1")


@dataclass(frozen=True)
class CurveRow:
    episode: int
    env_id: int
    total_reward: float
    success: bool
    steps: int
    demo_fraction: float
    alpha: float
    critic_loss: Optional[float]
    actor_loss: Optional[float]
    outcome: Outcome


@dataclass
class TrainResult:
    agent: SacAgent
    rows: list[CurveRow] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    curves_path: Optional[Path] = None


def _mean(values: list[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def train(
    envs: Sequence[Environment],
    sac_cfg: SacConfig,
    train_cfg: TrainConfig,
    seed: int,
    out_dir: Union[str, Path],
    demos: Optional["DemoDataset"] = None,
    *,
    episode_cfg: EpisodeConfig = EpisodeConfig(),
    params: LipParams = LipParams(),
    mpc_cfg: MpcConfig = MpcConfig(),
    reward_params: RewardParams = RewardParams(),
    provenance: Optional[dict] = None,
    on_episode: Optional[Callable[[CurveRow], None]] = None,
) -> TrainResult:
    """
    Train from scratch (demos=None or train_cfg.use_demos=False) or with the
    demonstrations seeding the replay buffer. Writes curves.txt and checkpoints
    ckpt_<episode>.npz every train_cfg.checkpoint_every episodes plus final.npz
    into out_dir. Episode outcomes never abort the run.
    """
    if not envs:
        raise ValueError("no training environments")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    provenance = dict(provenance or {})

    rng = np.random.default_rng(seed)
    agent = SacAgent(sac_cfg, seed=seed, dump_path=out / "nonfinite_dump.npz")
    keep_grids = sac_cfg.encoder == "cnn"
    demo_transitions = demos.transitions(keep_grids) if (demos is not None and train_cfg.use_demos) else ()
    buffer = ReplayBuffer(sac_cfg.buffer_capacity, demos=demo_transitions)
    policy = SacPolicy(agent, deterministic=False)
    planner = LipMpcPlanner(mpc_cfg, params)
    result = TrainResult(agent=agent, curves_path=out / "curves.txt")
    logger.info("training {} episodes on {} environments, {} demonstration transitions",
                train_cfg.episodes, len(envs), len(demo_transitions))

    for episode in range(train_cfg.episodes):
        env = envs[int(rng.integers(len(envs)))]
        fraction = (
            demo_fraction(episode, train_cfg.episodes, sac_cfg.demo_start, sac_cfg.demo_hold, sac_cfg.demo_end)
            if demo_transitions else 0.0
        )
        losses: list[SacLosses] = []

        def on_step(rec: StepRecord) -> None:
            buffer.append(Transition.from_states(
                rec.raw, rec.subgoal.as_tuple(), rec.reward.total, rec.next_raw,
                rec.outcome.terminal, keep_grids=keep_grids,
            ))
            ready = buffer.online_size if fraction == 0.0 else len(buffer)
            if ready >= sac_cfg.batch_size:
                losses.append(agent.sac_update(buffer.sample(sac_cfg.batch_size, fraction, agent.rng)))

        trace = run_episode(
            env, policy, episode_cfg, int(rng.integers(2**31)),
            params=params, mpc_cfg=mpc_cfg, reward_params=reward_params, planner=planner, on_step=on_step,
        )
        row = CurveRow(
            episode=episode,
            env_id=env.id,
            total_reward=trace.total_reward,
            success=trace.success,
            steps=trace.n_steps,
            demo_fraction=fraction,
            alpha=agent.alpha,
            critic_loss=_mean([l.critic for l in losses]),
            actor_loss=_mean([l.actor for l in losses]),
            outcome=trace.outcome,
        )
        result.rows.append(row)
        if on_episode is not None:
            on_episode(row)

        done = episode + 1
        if done % train_cfg.log_every == 0:
            window = result.rows[-train_cfg.log_every:]
            logger.info(
                "episode {}: mean return {:.2f}, success {:.0f}%, alpha {:.4f}, demo fraction {:.2f}",
                done,
                float(np.mean([r.total_reward for r in window])),
                100.0 * sum(r.success for r in window) / len(window),
                agent.alpha,
                fraction,
            )
        if done % train_cfg.checkpoint_every == 0:
            path = out / f"ckpt_{done:06d}.npz"
            save_checkpoint(agent, path, done, provenance, {"train": rng.bit_generator.state})
            result.checkpoints.append(path)
            save_curves(result.rows, result.curves_path, provenance)

    final = save_checkpoint(agent, out / "final.npz", train_cfg.episodes, provenance, {"train": rng.bit_generator.state})
    result.checkpoints.append(final)
    save_curves(result.rows, result.curves_path, provenance)
    return result


# --- Learning curves ---

_CURVE_FIELDS = ["episode", "env_id", "return", "success", "steps", "demo_fraction", "alpha",
                 "critic_loss", "actor_loss", "outcome"]
_CURVE_TYPES = ["integer", "integer", "number", "boolean", "integer", "number", "number",
                "number", "number", "string"]


def _opt(value: Optional[float]) -> str:
    return "" if value is None else repr(value)


def save_curves(rows: Sequence[CurveRow], path: Union[str, Path], metadata: Optional[dict] = None) -> Path:
    data = (
        [str(r.episode), str(r.env_id), repr(r.total_reward), "true" if r.success else "false", str(r.steps),
         repr(r.demo_fraction), repr(r.alpha), _opt(r.critic_loss), _opt(r.actor_loss), r.outcome.value]
        for r in rows
    )
    return write_artifact(path, "curves", dict(metadata or {}), _CURVE_FIELDS, _CURVE_TYPES, data)


def load_curves(path: Union[str, Path]) -> list[CurveRow]:
    art = read_artifact(path, expected_kind="curves")
    rows = []
    try:
        for raw in art.rows:
            cells = dict(zip(_CURVE_FIELDS, raw))
            rows.append(CurveRow(
                episode=int(cells["episode"]),
                env_id=int(cells["env_id"]),
                total_reward=float(cells["return"]),
                success=cells["success"] == "true",
                steps=int(cells["steps"]),
                demo_fraction=float(cells["demo_fraction"]),
                alpha=float(cells["alpha"]),
                critic_loss=float(cells["critic_loss"]) if cells["critic_loss"] else None,
                actor_loss=float(cells["actor_loss"]) if cells["actor_loss"] else None,
                outcome=Outcome(cells["outcome"]),
            ))
    except (KeyError, ValueError) as e:
        raise ParseError(f"{Path(path).name}: bad curve record: {e}") from e
    return rows
