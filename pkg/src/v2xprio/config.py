"""Scenario configuration and its JSON file form.

Unknown keys are rejected at every nesting level so a typo in a config file
fails loudly instead of silently using a default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .channel import ChannelConfig
from .mac import MacConfig


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field path, message)``."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in errors))


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sigma: float = Field(2.0, gt=0, allow_inf_nan=False)
    theta: float = Field(4.0, ge=0, allow_inf_nan=False)
    vehicle_count: int = Field(100, ge=2)
    map_bounds_m: float = Field(1000.0, gt=0)
    junction_count: int = Field(2, ge=1, le=4)
    bsm_rate_hz: float = Field(10.0, gt=0)
    bsm_size_bytes: int = Field(300, ge=1)
    sim_duration_s: float = Field(30.0, gt=0)
    warmup_s: float = Field(2.0, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    awareness_range_m: float = Field(150.0, gt=0)
    mobility_step_s: float = Field(0.1, gt=0)
    static: bool = False
    speed_min_ms: float = Field(8.3, ge=0)
    speed_max_ms: float = Field(13.9, ge=0)
    channel: ChannelConfig = ChannelConfig()
    mac: MacConfig = MacConfig()

    @model_validator(mode="after")
    def _consistent(self):
        if self.speed_min_ms > self.speed_max_ms:
            raise ValueError("speed_min_ms must not exceed speed_max_ms")
        interval = 1000.0 / self.bsm_rate_hz / self.mac.slot_duration_ms
        if abs(interval - round(interval)) > 1e-9:
            raise ValueError("BSM interval must be a whole number of slots")
        if self.warmup_s >= self.sim_duration_s:
            raise ValueError("warmup_s must be shorter than sim_duration_s")
        return self

    @property
    def bsm_interval_slots(self) -> int:
        return int(round(1000.0 / self.bsm_rate_hz / self.mac.slot_duration_ms))

    @property
    def total_slots(self) -> int:
        return int(round(self.sim_duration_s * 1000.0 / self.mac.slot_duration_ms))

    def with_updates(self, **changes: Any) -> "ScenarioConfig":
        return build_config(self.model_dump(), changes)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def build_config(*layers: dict | None) -> ScenarioConfig:
    """Validate the merge of ``layers`` (later layers win) over the defaults."""
    merged: dict = {}
    for layer in layers:
        if layer:
            merged = _merge(merged, layer)
    try:
        return ScenarioConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(
            [(".".join(str(p) for p in e["loc"]) or "<root>", e["msg"]) for e in exc.errors()]
        ) from None


def load_config_file(path: str | Path) -> dict:
    """Read a JSON config file into a plain dict (validated later)."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(str(path), f"invalid JSON: {exc}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([(str(path), "top level must be a JSON object")])
    return doc


def config_schema() -> dict:
    return ScenarioConfig.model_json_schema()
