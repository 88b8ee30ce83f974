"""Run configuration: every tunable of every module plus the master seed.

File format, one setting per line:

    # comment
    run.seed = 7
    mpc.N = 3
    sac.hidden = 256, 256, 128, 64
    sac.twin_critics = true

Keys not given keep their defaults. Unknown sections or keys, values that do not
parse as the default's type, and settings rejected by a module's own checks
raise ConfigError.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Union

from . import __version__
from .exceptions import ConfigError, StepnavError
from .expert import ExpertConfig
from .lip import LipParams
from .lmpc import MpcConfig
from .reward import RewardParams
from .sac import SacConfig
from .sim import EpisodeConfig
from .train import TrainConfig


@dataclass(frozen=True)
class WorldConfig:
    """Suite composition for gen-envs."""

    per_count: int = 10  # training suite: environments per obstacle count
    unseen_count: int = 25
    traps: int = 0  # long-wall layouts appended to the generated suite

    def __post_init__(self):
        if self.per_count < 1 or self.unseen_count < 1 or self.traps < 0:
            raise ValueError("suite sizes must be positive")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    lip: LipParams = field(default_factory=LipParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if abs(self.mpc.T - self.lip.T) > 1e-12:
            raise ConfigError(f"mpc.T = {self.mpc.T} must equal lip.T = {self.lip.T}")
        if self.reward.n_max != self.episode.n_max:
            raise ConfigError(f"reward.n_max = {self.reward.n_max} must equal episode.n_max = {self.episode.n_max}")
        if self.reward.goal_radius != self.episode.goal_radius:
            raise ConfigError("reward.goal_radius must equal episode.goal_radius")


SECTIONS: tuple[str, ...] = tuple(f.name for f in fields(RunConfig) if f.name != "seed")


# --- Value codecs ---

def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _parse(text: str, default: Any, key: str) -> Any:
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(f"expected true or false, got {text!r}")
            return text.lower() == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t for t in text.replace(",", " ").split() if t]
            kind = type(default[0]) if default else float
            return tuple(kind(t) for t in items)
        return text
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {text!r}: {e}") from e


# --- Public API ---

def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
    seed = None
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'section.key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        section, _, name = key.partition(".")
        if key == "run.seed":
            seed = value
        elif section in values and name:
            values[section][name] = value
        else:
            raise ConfigError(f"{source}:{n}: unknown setting {key!r}")

    base = RunConfig()
    sections = {}
    for section, overrides in values.items():
        current = getattr(base, section)
        known = {f.name: getattr(current, f.name) for f in fields(current)}
        updates = {}
        for name, text in overrides.items():
            if name not in known:
                raise ConfigError(f"{source}: unknown setting '{section}.{name}'")
            updates[name] = _parse(text, known[name], f"{section}.{name}")
        try:
            sections[section] = replace(current, **updates)
        except (ValueError, TypeError, StepnavError) as e:
            raise ConfigError(f"{source}: invalid [{section}] settings: {e}") from e
    run_seed = _parse(seed, 0, "run.seed") if seed is not None else base.seed
    return RunConfig(seed=run_seed, **sections)


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Read a config file; None gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"), source=path.name)


def dump_config(cfg: RunConfig) -> str:
    """Every setting, one per line, in declaration order."""
    lines = [f"run.seed = {cfg.seed}"]
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:16]


def provenance(cfg: RunConfig) -> dict[str, str]:
    """Header metadata every artifact carries."""
    return {"config_hash": config_hash(cfg), "seed": str(cfg.seed), "code_version": __version__}
