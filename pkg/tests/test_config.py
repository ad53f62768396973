import pytest

from topshift.config import (
    PRESETS,
    TrainConfig,
    default_seed,
    load_config,
    make_config,
    parse_config_text,
    with_updates,
)
from topshift.errors import ConfigError


def test_parse_text():
    text = "# comment\nlr = 5e-4  # peak\n\nsystem=topdown\n"
    assert parse_config_text(text) == {"lr": "5e-4", "system": "topdown"}
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("no equals sign")


def test_defaults_and_presets(monkeypatch):
    monkeypatch.delenv("TOPSHIFT_SEED", raising=False)
    cfg = make_config()
    assert cfg == TrainConfig()
    assert (cfg.adam_beta1, cfg.adam_beta2, cfg.label_smoothing, cfg.average_best) == (0.9, 0.98, 0.01, 3)
    full = make_config(preset="full")
    assert (full.d_model, full.encoder_layers, full.warmup_updates, full.max_tokens) == (256, 6, 4000, 3584)
    assert make_config({"preset": "full", "lr": "1e-4"}).lr == 1e-4
    assert set(PRESETS) == {"desk", "full"}
    with pytest.raises(ConfigError):
        make_config(preset="huge")


def test_typed_overrides():
    cfg = make_config({"d_model": "32", "dropout": "0.1", "system": "bottomup", "heads": 4})
    assert (cfg.d_model, cfg.dropout, cfg.system) == (32, 0.1, "bottomup")
    with pytest.raises(ConfigError, match="unknown"):
        make_config({"learning_rate": "1"})
    with pytest.raises(ConfigError, match="cannot parse"):
        make_config({"d_model": "wide"})
    with pytest.raises(ConfigError):
        make_config({"dtype": "float16"})
    with pytest.raises(ConfigError):
        make_config({"d_model": "30", "heads": "4"})


def test_seed_environment(monkeypatch):
    monkeypatch.setenv("TOPSHIFT_SEED", "17")
    assert make_config().seed == 17
    assert make_config({"seed": "2"}).seed == 2
    assert default_seed() == 17
    monkeypatch.delenv("TOPSHIFT_SEED")
    assert default_seed() == 1


def test_dump_and_reload(tmp_path, monkeypatch):
    monkeypatch.delenv("TOPSHIFT_SEED", raising=False)
    cfg = with_updates(make_config(), lr=3e-3, system="topdown")
    p = tmp_path / "c.txt"
    p.write_text(cfg.dumps())
    assert load_config(p) == cfg
    assert load_config(p, max_epochs="5").max_epochs == 5
