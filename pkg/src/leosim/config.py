"""Scenario configuration: dataclasses, JSON loading, and dotted-path
overrides.

Defaults mirror the reference simulation setup: 30 users inside a 10 km
disc in the Creuse department of France, 30 satellites with 3 beams
each, 1 kW per satellite, 20 degree visibility threshold, 20 GHz
carrier, 200 MHz bandwidth, N0 = 1e-20 W/Hz, Rician K = 10 dB,
handover penalty 0.5, 20 time slots, and a 0.1 Mbps per-user rate floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from typing import Any

from .channel import LossTable

BUDGET_MODES = ("per_beam", "per_satellite_total")
SOLVERS = ("exact", "heuristic", "bruteforce")
POLICIES = ("optimized", "min_distance")


class ConfigError(ValueError):
    """Raised for malformed configuration files or overrides."""


@dataclass
class WalkerConfig:
    """Synthetic Walker-delta constellation source.  ``total_sats`` may
    exceed the scenario's ``n_sats``; the best-placed subset is selected
    by initial elevation at the user center."""

    total_sats: int = 1296
    planes: int = 36
    inclination_deg: float = 53.0
    altitude_km: float = 550.0
    phasing: int = 1


@dataclass
class ScenarioConfig:
    # Constellation source: a TLE file or synthetic Walker parameters.
    tle_path: str | None = None
    walker: WalkerConfig = field(default_factory=WalkerConfig)

    n_users: int = 30
    n_sats: int = 30
    n_beams: int = 3

    user_center_lat_deg: float = 46.1703   # Gueret, Creuse
    user_center_lon_deg: float = 1.8717
    user_radius_km: float = 10.0

    start_time: datetime = field(
        default_factory=lambda: datetime(2025, 1, 1, 0, 0, tzinfo=timezone.utc)
    )
    n_slots: int = 20
    slot_seconds: float = 60.0

    f_c_ghz: float = 20.0
    bandwidth_hz: float = 200e6
    n0_w_per_hz: float = 1e-20
    k_factor_db: float = 10.0

    p_max_w: float = 1000.0
    budget_mode: str = "per_satellite_total"
    elevation_threshold_deg: float = 20.0
    a_zenith_db: float = 0.5
    iono_table_path: str | None = None
    rain_override_db: float | None = None

    alpha: float = 0.5
    rate_min_bps: float = 0.1e6

    solver: str = "heuristic"
    solver_timeout_s: float = 30.0
    master_seed: int = 2025
    reshuffle_users_per_replicate: bool = False

    def __post_init__(self):
        for name in ("n_users", "n_sats", "n_beams", "n_slots"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.user_radius_km < 0:
            raise ConfigError("user_radius_km must be non-negative")
        if self.budget_mode not in BUDGET_MODES:
            raise ConfigError(f"budget_mode must be one of {BUDGET_MODES}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.p_max_w <= 0:
            raise ConfigError("p_max_w must be positive")

    @property
    def iono_table(self) -> LossTable:
        if self.iono_table_path is None:
            return LossTable.zero(self.f_c_ghz)
        return LossTable.from_csv(self.iono_table_path)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, datetime):
                value = value.isoformat().replace("+00:00", "Z")
            elif isinstance(value, WalkerConfig):
                value = {wf.name: getattr(value, wf.name) for wf in fields(WalkerConfig)}
            d[f.name] = value
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "start_time" in kwargs and isinstance(kwargs["start_time"], str):
            kwargs["start_time"] = _parse_time(kwargs["start_time"])
        if "walker" in kwargs and isinstance(kwargs["walker"], dict):
            wk = {f.name for f in fields(WalkerConfig)}
            bad = set(kwargs["walker"]) - wk
            if bad:
                raise ConfigError(f"unknown config keys: {sorted('walker.' + k for k in bad)}")
            kwargs["walker"] = WalkerConfig(**kwargs["walker"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path: str) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level JSON value must be an object")
        return cls.from_dict(data)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _parse_time(text: str) -> datetime:
    try:
        t = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ConfigError(f"invalid timestamp {text!r}") from None
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t


def _coerce(current: Any, raw: str, path: str) -> Any:
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{path}: expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{path}: expected an integer, got {raw!r}") from None
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {raw!r}") from None
    if isinstance(current, datetime):
        return _parse_time(raw)
    # str-valued or currently-None fields pass through as text.
    return None if raw.lower() == "null" else raw


def apply_overrides(cfg: ScenarioConfig, overrides: list[str]) -> ScenarioConfig:
    """Apply ``key=value`` overrides with dotted paths (``walker.planes=6``).

    Unknown keys are rejected; values are coerced to the field's current
    type.  Returns a new config built through the same validation path
    as JSON loading.
    """
    data = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node: Any = data
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown override key {key!r}")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"unknown override key {key!r}")
        current = node[leaf]
        if isinstance(current, dict):
            raise ConfigError(f"{key!r} is a section, not a value")
        if isinstance(current, str) and leaf == "start_time":
            node[leaf] = _parse_time(raw).isoformat()
        else:
            node[leaf] = _coerce(current, raw.strip(), key)
    return ScenarioConfig.from_dict(data)
