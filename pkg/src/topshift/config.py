"""Flat ``key = value`` training configuration with desk and full-scale presets."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig

SEED_ENV = "TOPSHIFT_SEED"


@dataclass
class TrainConfig:
    system: str = "inorder"
    seed: int = 1
    # model
    d_model: int = 64
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.3
    label_smoothing: float = 0.01
    max_positions: int = 512
    dtype: str = "float64"
    # optimisation
    lr: float = 2e-3                 # peak learning rate
    warmup_updates: int = 100
    warmup_init_lr: float = 1e-7
    min_lr: float = 1e-9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    clip_norm: float = 0.0           # 0 disables clipping
    max_tokens: int = 512            # per batch, counted on the action sequence
    max_epochs: int = 90
    # model selection / inference
    average_best: int = 3
    valid_every: int = 1
    stop_at_em: float = 1.01         # >1 never stops early
    beam: int = 10

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.max_tokens < 1 or self.max_epochs < 1 or self.average_best < 1:
            raise ConfigError("max_tokens, max_epochs and average_best must be positive")
        if self.warmup_updates < 0:
            raise ConfigError("warmup_updates must be >= 0")
        self.model_config()      # validates heads / d_model

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.d_model, self.encoder_layers, self.decoder_layers, self.heads,
                           self.ffn_dim, self.dropout, self.label_smoothing, self.max_positions)

    def to_dict(self):
        return asdict(self)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


# Full-scale hyperparameters; too slow for a CPU desk run, kept for reference.
FULL = dict(
    d_model=256, encoder_layers=6, decoder_layers=6, heads=4, ffn_dim=512,
    dropout=0.3, label_smoothing=0.01, lr=5e-4, warmup_updates=4000,
    warmup_init_lr=1e-7, min_lr=1e-9, adam_beta1=0.9, adam_beta2=0.98,
    max_tokens=3584, max_epochs=90, average_best=3, beam=10, dtype="float32",
)

PRESETS = {"desk": {}, "full": FULL}


def _coerce(name, raw, typ):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def make_config(overrides: dict | None = None, preset: str = "desk") -> TrainConfig:
    """Build a config from a preset plus string/typed overrides.

    ``preset`` may also be given as an override key. ``TOPSHIFT_SEED``
    replaces the default seed unless ``seed`` is set explicitly.
    """
    overrides = dict(overrides or {})
    preset = overrides.pop("preset", preset)
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    types = {f.name: f.type for f in fields(TrainConfig)}
    kw = dict(PRESETS[preset])
    env = os.environ.get(SEED_ENV)
    if env is not None and "seed" not in overrides:
        kw["seed"] = _coerce(SEED_ENV, env, int)
    for k, v in overrides.items():
        if k not in types:
            raise ConfigError(f"unknown config key {k!r}")
        typ = {"int": int, "float": float, "str": str}.get(types[k], types[k])
        kw[k] = _coerce(k, v, typ) if isinstance(v, str) else v
    return TrainConfig(**kw)


def load_config(path=None, **overrides) -> TrainConfig:
    data = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    data.update(overrides)
    return make_config(data)


def with_updates(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)


def default_seed(fallback: int = 1) -> int:
    env = os.environ.get(SEED_ENV)
    return _coerce(SEED_ENV, env, int) if env is not None else fallback
