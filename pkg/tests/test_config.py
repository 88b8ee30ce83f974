"""Tests for config.py: parsing, cross-checks and provenance."""
import pytest
from stepnav import __version__
from stepnav.config import RunConfig, config_hash, dump_config, load_config, parse_config, provenance
from stepnav.exceptions import ConfigError


def test_defaults():
    cfg = load_config(None)
    assert cfg == RunConfig()
    assert cfg.seed == 0
    assert cfg.mpc.N == 3
    assert cfg.lip.T == pytest.approx(0.4)
    assert cfg.sac.hidden == (256, 256, 128, 64)

def test_overrides():
    cfg = parse_config(
        "# comment\n"
        "run.seed = 7\n"
        "\n"
        "mpc.N = 4\n"
        "sac.hidden = 32, 32\n"
        "sac.twin_critics = false\n"
        "sac.encoder = cnn\n"
    )
    assert cfg.seed == 7
    assert cfg.mpc.N == 4
    assert cfg.sac.hidden == (32, 32)
    assert cfg.sac.twin_critics is False
    assert cfg.sac.encoder == "cnn"
    assert cfg.mpc.T == RunConfig().mpc.T

def test_step_duration_changes_together():
    cfg = parse_config("mpc.T = 0.5\nlip.T = 0.5\n")
    assert cfg.mpc.T == cfg.lip.T == 0.5

def test_load_from_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("run.seed = 3\n", encoding="utf-8")
    assert load_config(p).seed == 3

@pytest.mark.parametrize("text", [
    "mpc.horizon = 4\n",
    "planner.N = 4\n",
    "seed = 4\n",
    "mpc.N 4\n",
    "mpc.N = 3.5\n",
    "sac.twin_critics = maybe\n",
    "run.seed = x\n",
])
def test_bad_settings(text):
    with pytest.raises(ConfigError):
        parse_config(text)

def test_module_checks_become_config_errors():
    with pytest.raises(ConfigError):
        parse_config("mpc.N = 0\n")
    with pytest.raises(ConfigError):
        parse_config("lip.H = -1.0\n")
    with pytest.raises(ConfigError):
        parse_config("sac.encoder = lstm\n")

def test_step_duration_mismatch():
    with pytest.raises(ConfigError, match="mpc.T"):
        parse_config("mpc.T = 0.5\n")

def test_step_budget_mismatch():
    with pytest.raises(ConfigError):
        parse_config("episode.n_max = 50\n")

def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")

def test_dump_parses_back():
    cfg = parse_config("run.seed = 9\nmpc.N = 5\nsac.hidden = 64, 32\n")
    assert parse_config(dump_config(cfg)) == cfg

def test_hash_tracks_settings():
    assert len(config_hash(RunConfig())) == 16
    assert config_hash(RunConfig()) == config_hash(parse_config(""))
    assert config_hash(parse_config("mpc.N = 4\n")) != config_hash(RunConfig())

def test_provenance_keys():
    meta = provenance(RunConfig(seed=4))
    assert meta == {"config_hash": config_hash(RunConfig(seed=4)), "seed": "4", "code_version": __version__}
