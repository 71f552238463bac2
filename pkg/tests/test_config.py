import pytest

from sigil.config import config_as_dict, read_config_file, resolve_config
from sigil.training import ConfigError, TrainConfig


def test_defaults_match_reference_setup():
    cfg = resolve_config()
    assert cfg.learning_rate == pytest.approx(1e-3)
    assert cfg.hidden == 100
    assert cfg.tau == pytest.approx(1.0)
    assert cfg.weight_decay == pytest.approx(5e-4)
    assert cfg.iterations == 10_000


def test_file_overrides_defaults(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text(
        "# comment\n"
        "iterations = 500\n"
        "lambda = 1.0\n"
        "clusters = 20\n"
        "augment = false\n"
    )
    cfg = resolve_config(path)
    assert cfg.iterations == 500
    assert cfg.lambda_ == 1.0
    assert cfg.clusters == (20,)
    assert cfg.augment is False


def test_env_overrides_file(tmp_path, monkeypatch):
    path = tmp_path / "train.cfg"
    path.write_text("alpha = 0.5\nbeta = 0.25\n")
    monkeypatch.setenv("SIGIL_ALPHA", "0.9")
    cfg = resolve_config(path)
    assert cfg.alpha == pytest.approx(0.9)
    assert cfg.beta == pytest.approx(0.25)


def test_flags_override_env(monkeypatch):
    monkeypatch.setenv("SIGIL_LAMBDA", "3.0")
    cfg = resolve_config(None, {"lambda": 7.0})
    assert cfg.lambda_ == pytest.approx(7.0)


def test_every_key_has_an_env_override(monkeypatch):
    from sigil.config import CONFIG_KEYS, ENV_PREFIX

    samples = {
        "iterations": "7", "learning_rate": "0.01", "weight_decay": "0.001",
        "hidden": "8", "clusters": "5,2", "lambda": "2.5", "alpha": "0.4",
        "beta": "0.6", "tau": "0.9", "pair_sample": "16", "seed": "99",
        "loss_variant": "plain_l2", "normalization": "row",
        "log_interval": "5", "checkpoint_interval": "3",
        "augment": "false", "detach_similarity": "false",
        "mixture_decode": "true", "tied_unpooling": "true",
    }
    assert set(samples) == set(CONFIG_KEYS)
    for key, value in samples.items():
        monkeypatch.setenv(ENV_PREFIX + key.upper(), value)
    cfg = resolve_config()
    assert cfg.iterations == 7
    assert cfg.clusters == (5, 2)
    assert cfg.loss_variant == "plain_l2"
    assert cfg.mixture_decode is True
    assert cfg.detach_similarity is False


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("warp_factor = 9\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        read_config_file(path)


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("iterations = soon\n")
    with pytest.raises(ConfigError, match="bad value"):
        read_config_file(path)


def test_out_of_range_value_rejected():
    with pytest.raises(ConfigError):
        resolve_config(None, {"alpha": 2.0})


def test_round_trip_through_dict():
    cfg = TrainConfig(clusters=(8, 3), lambda_=2.0, seed=5)
    flat = config_as_dict(cfg)
    again = resolve_config(None, {k: v for k, v in flat.items() if not isinstance(v, list)})
    assert again.lambda_ == 2.0 and again.seed == 5
    assert flat["clusters"] == [8, 3]
