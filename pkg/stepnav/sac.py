"""Soft Actor-Critic over the subgoal action space, with demonstration replay.

Public API:
    SacConfig, SacAgent, PolicyOutput, SacLosses
    Transition, Batch, ReplayBuffer, demo_fraction
    squash, normalize_action, squashed_log_prob
    save_checkpoint, load_checkpoint

Actions are sampled as u ~ N(μ, σ), squashed with tanh and rescaled to
d_c ∈ [0, 3], φ_c ∈ [−π/4, π/4]. Critics consume the squashed action in its
normalised form t = tanh(u) ∈ [−1, 1]², concatenated with the encoded state.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from loguru import logger

from ._nn import Adam, ConvEncoder, Mlp
from .exceptions import ParseError, TrainingError
from .features import FEATURE_SIZE, POOLED_SIZE, RawState, encode, pack_grid, unpack_grid

ACTION_CENTER = np.array([1.5, 0.0])
ACTION_SCALE = np.array([1.5, math.pi / 4])
LOG_SIGMA_MIN = -5.0
LOG_SIGMA_MAX = 2.0

CHECKPOINT_MAGIC = "stepnav-checkpoint"
CHECKPOINT_VERSION = "1.0"

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SacConfig:
    hidden: tuple[int, ...] = (256, 256, 128, 64)
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 5e-4
    critic_lr: float = 1e-3
    alpha_lr: float = 5e-4
    init_alpha: float = 0.2
    target_entropy: float = -0.5
    batch_size: int = 64
    buffer_capacity: int = 100_000
    twin_critics: bool = True
    encoder: str = "pool"  # "pool" or "cnn"
    demo_start: float = 0.8
    demo_hold: float = 0.1
    demo_end: float = 0.5

    def __post_init__(self):
        if self.encoder not in ("pool", "cnn"):
            raise ValueError(f"encoder must be 'pool' or 'cnn', got {self.encoder!r}")
        if not 0.0 <= self.demo_start <= 1.0:
            raise ValueError(f"demo_start must be in [0, 1], got {self.demo_start}")
        if not 0.0 <= self.demo_hold <= self.demo_end <= 1.0:
            raise ValueError("need 0 ≤ demo_hold ≤ demo_end ≤ 1")


# --- Action squashing ---

def squash(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(t, action) with t = tanh(u) and action = center + scale·t."""
    t = np.tanh(u)
    return t, ACTION_CENTER + ACTION_SCALE * t


def normalize_action(action) -> np.ndarray:
    return np.clip((np.asarray(action, dtype=float) - ACTION_CENTER) / ACTION_SCALE, -1.0, 1.0)


def _log1m_tanh2(u: np.ndarray) -> np.ndarray:
    """log(1 − tanh²u) without cancellation."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squashed_log_prob(u: np.ndarray, mu: np.ndarray, log_sigma: np.ndarray) -> np.ndarray:
    """log π(action) for pre-squash samples u, summed over the two action dimensions."""
    z = (u - mu) / np.exp(log_sigma)
    log_normal = -0.5 * z * z - log_sigma - _HALF_LOG_2PI
    return np.sum(log_normal - _log1m_tanh2(u) - np.log(ACTION_SCALE), axis=-1)


@dataclass(frozen=True)
class PolicyOutput:
    mu: np.ndarray
    log_sigma: np.ndarray
    u: np.ndarray
    action: np.ndarray

    @property
    def normalized(self) -> np.ndarray:
        return np.tanh(self.u)


# --- Replay ---

@dataclass(frozen=True)
class Transition:
    features: np.ndarray
    action: np.ndarray  # (d_c, φ_c)
    reward: float
    next_features: np.ndarray
    done: bool
    demo: bool = False
    grid: Optional[str] = None  # packed grids, kept for the CNN encoder only
    next_grid: Optional[str] = None

    @classmethod
    def from_states(
        cls,
        state: RawState,
        action,
        reward: float,
        next_state: RawState,
        done: bool,
        demo: bool = False,
        keep_grids: bool = False,
    ) -> "Transition":
        return cls(
            features=encode(state),
            action=np.asarray(action, dtype=float),
            reward=float(reward),
            next_features=encode(next_state),
            done=bool(done),
            demo=demo,
            grid=pack_grid(state.grid) if keep_grids else None,
            next_grid=pack_grid(next_state.grid) if keep_grids else None,
        )


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_features: np.ndarray
    dones: np.ndarray
    demo: np.ndarray
    grids: Optional[np.ndarray] = None
    next_grids: Optional[np.ndarray] = None

    @classmethod
    def stack(cls, items: Sequence[Transition]) -> "Batch":
        with_grids = all(tr.grid is not None for tr in items)
        return cls(
            features=np.stack([tr.features for tr in items]),
            actions=np.stack([tr.action for tr in items]),
            rewards=np.array([tr.reward for tr in items]),
            next_features=np.stack([tr.next_features for tr in items]),
            dones=np.array([float(tr.done) for tr in items]),
            demo=np.array([tr.demo for tr in items]),
            grids=np.stack([unpack_grid(tr.grid) for tr in items]) if with_grids else None,
            next_grids=np.stack([unpack_grid(tr.next_grid) for tr in items]) if with_grids else None,
        )

    def __len__(self) -> int:
        return self.rewards.shape[0]


def demo_fraction(
    episode: int,
    total: int,
    start: float = 0.8,
    hold: float = 0.1,
    end: float = 0.5,
) -> float:
    """start until hold·total episodes, linear to 0 at end·total, 0 afterwards."""
    if total <= 0:
        return 0.0
    if episode < hold * total:
        return start
    if episode >= end * total:
        return 0.0
    return start * (end * total - episode) / ((end - hold) * total)


class ReplayBuffer:
    """
    FIFO ring of online transitions plus an immutable demonstration store.
    Appends are totally ordered by arrival; the oldest online entry is evicted first.
    """

    def __init__(self, capacity: int = 100_000, demos: Sequence[Transition] = ()):
        if capacity < 1:
            raise ValueError(f"capacity must be ≥ 1, got {capacity}")
        self.capacity = capacity
        self.demos: tuple[Transition, ...] = tuple(demos)
        self._online: list[Transition] = []
        self._next = 0

    def append(self, tr: Transition) -> None:
        if len(self._online) < self.capacity:
            self._online.append(tr)
        else:
            self._online[self._next] = tr
        self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self.demos) + len(self._online)

    @property
    def online_size(self) -> int:
        return len(self._online)

    def online(self) -> list[Transition]:
        """Online transitions, oldest first."""
        if len(self._online) < self.capacity:
            return list(self._online)
        return self._online[self._next:] + self._online[:self._next]

    def split(self, batch_size: int, fraction: float) -> int:
        """Demo share of a batch: ⌊fraction·batch + ½⌉, redirected when a partition is empty."""
        if not self.demos:
            return 0
        if not self._online:
            return batch_size
        return int(math.floor(fraction * batch_size + 0.5))

    def sample(self, batch_size: int, fraction: float, rng: np.random.Generator) -> Batch:
        if not self.demos and not self._online:
            raise TrainingError("cannot sample from an empty replay buffer")
        n_demo = self.split(batch_size, fraction)
        demo_idx = rng.integers(len(self.demos), size=n_demo) if n_demo else []
        online_idx = rng.integers(len(self._online), size=batch_size - n_demo) if batch_size > n_demo else []
        items = [self.demos[i] for i in demo_idx] + [self._online[i] for i in online_idx]
        return Batch.stack(items)


# --- Networks ---

class _Head:
    """Optional CNN over the grid, then an MLP over [grid features, proprio block, extra]."""

    def __init__(self, n_extra: int, n_out: int, cfg: SacConfig, rng: np.random.Generator):
        self.encoder = ConvEncoder(rng) if cfg.encoder == "cnn" else None
        self.mlp = Mlp([FEATURE_SIZE + n_extra, *cfg.hidden, n_out], rng)

    def forward(self, features: np.ndarray, grids: Optional[np.ndarray], extra: Optional[np.ndarray] = None) -> np.ndarray:
        x = features
        if self.encoder is not None:
            if grids is None:
                raise TrainingError("CNN encoder needs occupancy grids in the batch")
            x = np.concatenate([self.encoder.forward(grids), features[:, POOLED_SIZE:]], axis=1)
        if extra is not None:
            x = np.concatenate([x, extra], axis=1)
        return self.mlp.forward(x)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        """Propagate to parameters; returns the gradient w.r.t. the extra inputs."""
        gx = self.mlp.backward(grad)
        if self.encoder is not None:
            self.encoder.backward(gx[:, :POOLED_SIZE])
        return gx[:, FEATURE_SIZE:]

    def parameters(self) -> list[np.ndarray]:
        enc = self.encoder.parameters() if self.encoder is not None else []
        return enc + self.mlp.parameters()

    def gradients(self) -> list[np.ndarray]:
        enc = self.encoder.gradients() if self.encoder is not None else []
        return enc + self.mlp.gradients()

    def load(self, values: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(values)}")
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise ValueError(f"parameter shape {p.shape} does not match {np.shape(v)}")
            p[...] = v


class Actor(_Head):
    def __init__(self, cfg: SacConfig, rng: np.random.Generator):
        super().__init__(0, 4, cfg, rng)
        self._raw_log_sigma: Optional[np.ndarray] = None

    def distribution(self, features, grids=None) -> tuple[np.ndarray, np.ndarray]:
        out = self.forward(features, grids)
        self._raw_log_sigma = out[:, 2:]
        return out[:, :2], np.clip(out[:, 2:], LOG_SIGMA_MIN, LOG_SIGMA_MAX)

    def backward_distribution(self, d_mu: np.ndarray, d_log_sigma: np.ndarray) -> None:
        raw = self._raw_log_sigma
        inside = (raw >= LOG_SIGMA_MIN) & (raw <= LOG_SIGMA_MAX)
        self.backward(np.concatenate([d_mu, np.where(inside, d_log_sigma, 0.0)], axis=1))


class Critic(_Head):
    def __init__(self, cfg: SacConfig, rng: np.random.Generator):
        super().__init__(2, 1, cfg, rng)

    def q(self, features, grids, t: np.ndarray) -> np.ndarray:
        return self.forward(features, grids, t)[:, 0]

    def backward_q(self, d_q: np.ndarray) -> np.ndarray:
        return self.backward(d_q[:, None])


@dataclass(frozen=True)
class SacLosses:
    critic: float
    actor: float
    alpha_loss: float
    alpha: float
    entropy: float


@dataclass
class SacAgent:
    cfg: SacConfig = field(default_factory=SacConfig)
    seed: int = 0
    dump_path: Optional[Path] = None

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        n_critics = 2 if self.cfg.twin_critics else 1
        self.actor = Actor(self.cfg, self.rng)
        self.critics = [Critic(self.cfg, self.rng) for _ in range(n_critics)]
        self.targets = [Critic(self.cfg, self.rng) for _ in range(n_critics)]
        for critic, target in zip(self.critics, self.targets):
            target.load(critic.parameters())
        self.log_alpha = np.array([math.log(self.cfg.init_alpha)])
        self.actor_opt = Adam(self.actor.parameters(), self.cfg.actor_lr)
        self.critic_opts = [Adam(c.parameters(), self.cfg.critic_lr) for c in self.critics]
        self.alpha_opt = Adam([self.log_alpha], self.cfg.alpha_lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(math.exp(self.log_alpha[0]))

    # --- Acting ---

    def policy(self, features, grids=None, rng: Optional[np.random.Generator] = None) -> PolicyOutput:
        """Sample actions for a batch of states (reparameterised)."""
        rng = self.rng if rng is None else rng
        mu, log_sigma = self.actor.distribution(features, grids)
        u = mu + np.exp(log_sigma) * rng.standard_normal(mu.shape)
        _, action = squash(u)
        return PolicyOutput(mu=mu, log_sigma=log_sigma, u=u, action=action)

    def act(self, state: RawState, deterministic: bool = False, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """One action (d_c, φ_c); deterministic uses the squashed mean."""
        features = encode(state)[None, :]
        grids = np.asarray(state.grid)[None] if self.cfg.encoder == "cnn" else None
        if deterministic:
            mu, _ = self.actor.distribution(features, grids)
            return squash(mu)[1][0]
        return self.policy(features, grids, rng).action[0]

    # --- Learning ---

    def _min_q(self, critics, features, grids, t) -> tuple[np.ndarray, np.ndarray]:
        qs = np.stack([c.q(features, grids, t) for c in critics])
        return qs.min(axis=0), np.argmin(qs, axis=0)

    def critic_targets(self, batch: Batch) -> np.ndarray:
        nxt = self.policy(batch.next_features, batch.next_grids)
        logp = squashed_log_prob(nxt.u, nxt.mu, nxt.log_sigma)
        q_next, _ = self._min_q(self.targets, batch.next_features, batch.next_grids, nxt.normalized)
        return batch.rewards + self.cfg.gamma * (1.0 - batch.dones) * (q_next - self.alpha * logp)

    def sac_update(self, batch: Batch) -> SacLosses:
        cfg = self.cfg
        B = len(batch)
        alpha = self.alpha
        t_batch = normalize_action(batch.actions)

        # critics
        y = self.critic_targets(batch)
        critic_loss = 0.0
        for critic, opt in zip(self.critics, self.critic_opts):
            diff = critic.q(batch.features, batch.grids, t_batch) - y
            critic_loss += float(np.mean(diff * diff))
            critic.backward_q(2.0 * diff / B)
            opt.step(critic.gradients())

        # actor
        mu, log_sigma = self.actor.distribution(batch.features, batch.grids)
        sigma = np.exp(log_sigma)
        eps = self.rng.standard_normal(mu.shape)
        u = mu + sigma * eps
        t = np.tanh(u)
        logp = squashed_log_prob(u, mu, log_sigma)
        qs = np.stack([c.q(batch.features, batch.grids, t) for c in self.critics])
        chosen = np.argmin(qs, axis=0)
        q_min = qs[chosen, np.arange(B)]
        actor_loss = float(np.mean(alpha * logp - q_min))

        dq_dt = np.zeros_like(t)
        for i, critic in enumerate(self.critics):
            dq_dt += critic.backward_q((chosen == i).astype(float))
        g_u = (alpha * 2.0 * t - dq_dt * (1.0 - t * t)) / B
        self.actor.backward_distribution(g_u, -alpha / B + g_u * sigma * eps)
        self.actor_opt.step(self.actor.gradients())

        # temperature
        gap = float(np.mean(logp + cfg.target_entropy))
        alpha_loss = -float(self.log_alpha[0]) * gap
        self.alpha_opt.step([np.array([-gap])])

        # targets
        for critic, target in zip(self.critics, self.targets):
            for p, tp in zip(critic.parameters(), target.parameters()):
                tp *= 1.0 - cfg.tau
                tp += cfg.tau * p

        self.updates += 1
        losses = SacLosses(
            critic=critic_loss,
            actor=actor_loss,
            alpha_loss=alpha_loss,
            alpha=self.alpha,
            entropy=float(-np.mean(logp)),
        )
        self._check_finite(losses)
        return losses

    def _check_finite(self, losses: SacLosses) -> None:
        values = (losses.critic, losses.actor, losses.alpha_loss)
        bad_loss = not all(math.isfinite(v) for v in values)
        bad_param = not all(np.all(np.isfinite(p)) for p in self.named_parameters().values())
        if not (bad_loss or bad_param):
            return
        where = "loss" if bad_loss else "parameters"
        message = f"non-finite {where} after update {self.updates}: {losses}"
        if self.dump_path is not None:
            _savez_atomic(self.dump_path, self.named_parameters())
            message += f"; state dumped to {self.dump_path}"
        logger.error(message)
        raise TrainingError(message)

    # --- State ---

    def named_parameters(self) -> dict[str, np.ndarray]:
        named = {"log_alpha": self.log_alpha}
        groups = [("actor", self.actor)]
        groups += [(f"critic{i}", c) for i, c in enumerate(self.critics)]
        groups += [(f"target{i}", c) for i, c in enumerate(self.targets)]
        for prefix, net in groups:
            for j, p in enumerate(net.parameters()):
                named[f"{prefix}.{j}"] = p
        return named

    def optimizer_state(self) -> dict[str, np.ndarray]:
        named = {}
        opts = [("actor", self.actor_opt), ("alpha", self.alpha_opt)]
        opts += [(f"critic{i}", o) for i, o in enumerate(self.critic_opts)]
        for prefix, opt in opts:
            for j, arr in enumerate(opt.state()):
                named[f"opt.{prefix}.{j}"] = arr
        return named

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters().items():
            if name not in arrays:
                raise ParseError(f"checkpoint lacks parameter {name!r}")
            if arrays[name].shape != p.shape:
                raise ParseError(f"checkpoint parameter {name!r} has shape {arrays[name].shape}, expected {p.shape}")
            p[...] = arrays[name]
        opts = [("actor", self.actor_opt), ("alpha", self.alpha_opt)]
        opts += [(f"critic{i}", o) for i, o in enumerate(self.critic_opts)]
        for prefix, opt in opts:
            keys = sorted((k for k in arrays if k.startswith(f"opt.{prefix}.")), key=lambda k: int(k.rsplit(".", 1)[1]))
            if keys:
                opt.load_state([arrays[k] for k in keys])


# --- Checkpoints ---

def _savez_atomic(path: Path, arrays: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".npz", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def save_checkpoint(
    agent: SacAgent,
    path: Union[str, Path],
    episode: int,
    provenance: dict[str, str],
    rng_state: Optional[dict] = None,
) -> Path:
    """All parameters, optimizer moments, provenance and RNG state in one .npz archive."""
    states = {"agent": agent.rng.bit_generator.state, **(rng_state or {})}
    arrays = {
        "magic": np.array(CHECKPOINT_MAGIC),
        "format_version": np.array(CHECKPOINT_VERSION),
        "config_hash": np.array(provenance.get("config_hash", "")),
        "seed": np.array(provenance.get("seed", "")),
        "code_version": np.array(provenance.get("code_version", "")),
        "episode": np.array(episode),
        "rng_state": np.array(json.dumps(states, sort_keys=True)),
        "updates": np.array(agent.updates),
        **agent.named_parameters(),
        **agent.optimizer_state(),
    }
    path = _savez_atomic(Path(path), arrays)
    logger.info("checkpoint written: {} (episode {})", path, episode)
    return path


def load_checkpoint(path: Union[str, Path], agent: SacAgent) -> dict:
    """
    Restore parameters into `agent` and return the checkpoint metadata
    {config_hash, seed, code_version, episode, rng_state}.
    Raises ParseError for foreign, outdated or mismatched archives.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as e:
        raise ParseError(f"{path.name}: not a readable checkpoint: {e}") from e
    if str(arrays.get("magic", "")) != CHECKPOINT_MAGIC:
        raise ParseError(f"{path.name}: not a stepnav checkpoint")
    if str(arrays["format_version"]) != CHECKPOINT_VERSION:
        raise ParseError(f"{path.name}: unsupported checkpoint version {arrays['format_version']}")
    agent.load_state(arrays)
    states = json.loads(str(arrays["rng_state"]))
    agent.rng.bit_generator.state = states.pop("agent")
    agent.updates = int(arrays.get("updates", 0))
    return {
        "config_hash": str(arrays["config_hash"]),
        "seed": str(arrays["seed"]),
        "code_version": str(arrays["code_version"]),
        "episode": int(arrays["episode"]),
        "rng_state": states,
    }
