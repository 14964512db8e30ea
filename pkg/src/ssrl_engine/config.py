"""Engine configuration shared by the CLI and the replay pipeline."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields

from .policy import CONDITIONS

ENV_CONFIG_VAR = "SSRL_CONFIG"

MODES = ("reactive", "proactive")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    mode: str = "reactive"
    condition: str = "combined"
    jva_window_ms: int = 30_000
    jme_window_ms: int = 10_000
    sd_k: float = 2.0
    horizon_ms: int = 30_000
    persistence_ticks: int = 3
    cooldown_ticks: int = 1
    cols: int = 10
    forecaster: str = "persistence"
    forecast_lags: int = 6
    jme_mode: str = "crqa"
    jme_trailing: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.condition not in CONDITIONS:
            raise ConfigError(f"condition must be one of {CONDITIONS}")
        if self.jva_window_ms <= 0 or self.jme_window_ms <= 0:
            raise ConfigError("window sizes must be > 0")
        if self.sd_k <= 0:
            raise ConfigError("sd_k must be > 0")
        if self.horizon_ms <= 0 or self.horizon_ms % self.jva_window_ms != 0:
            raise ConfigError("horizon must be a positive multiple of the tick")
        if self.persistence_ticks < 1:
            raise ConfigError("persistence_ticks must be >= 1")
        if self.cooldown_ticks < 1:
            raise ConfigError("cooldown_ticks must be >= 1")
        if self.cols < 1:
            raise ConfigError("cols must be >= 1")
        if self.jme_mode not in ("crqa", "cosine"):
            raise ConfigError("jme_mode must be crqa or cosine")
        if self.jme_trailing < 1:
            raise ConfigError("jme_trailing must be >= 1")


_FIELD_TYPES = {f.name: f.type for f in fields(EngineConfig)}


def config_from_sources(flag_values: dict, config_path: str | None = None) -> EngineConfig:
    """Precedence: explicit flags > config file (or SSRL_CONFIG) > defaults."""
    merged: dict = {}
    path = config_path or os.environ.get(ENV_CONFIG_VAR)
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        unknown = set(file_obj) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_obj)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    try:
        return EngineConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
