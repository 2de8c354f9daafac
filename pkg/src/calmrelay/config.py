"""Server and room configuration: TOML file, environment, CLI layering."""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gaze import GridSpec
from .nod import TrailParams

GAZE_DISPLAYS = ("heat", "dots", "mask")

ENV_PREFIX = "CALMRELAY_"


@dataclass
class RoomConfig:
    tick_hz: float = 15.0
    # gaze pipeline
    smooth_window: int = 6
    grid_w: int = 64
    grid_h: int = 36
    kernel_bandwidth: float = 0.03
    heat_half_life_s: float = 2.0
    gaze_display: str = "heat"
    mask_theta: float = 0.5
    # nod pipeline
    trail_len: int = 24
    trail_recenter: float = 0.90
    trail_gain_x: float = 1.0
    trail_gain_y: float = 2.5
    trail_spacing: float = 0.02
    u_clamp: float = 0.5
    v_clamp: float = 0.5
    v_max: float = 5.0
    # membership
    audience_cap: int = 256
    liveness_timeout_s: float = 5.0
    room_grace_s: float = 60.0
    # None: each room draws a fresh session seed
    seed: int | None = None

    def validate(self) -> None:
        if not (1.0 <= self.tick_hz <= 60.0):
            raise ValueError(f"tick_hz must be in [1, 60], got {self.tick_hz}")
        if self.smooth_window < 1:
            raise ValueError("smooth_window must be >= 1")
        if self.grid_w < 1 or self.grid_h < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.kernel_bandwidth <= 0:
            raise ValueError("kernel_bandwidth must be > 0")
        if self.gaze_display not in GAZE_DISPLAYS:
            raise ValueError(f"gaze_display must be one of {GAZE_DISPLAYS}")
        if not (0.0 < self.mask_theta <= 1.0):
            raise ValueError("mask_theta must be in (0, 1]")
        if not (0.0 <= self.trail_recenter < 1.0):
            raise ValueError("trail_recenter must be in [0, 1)")
        if self.trail_len < 1:
            raise ValueError("trail_len must be >= 1")
        if self.audience_cap < 1:
            raise ValueError("audience_cap must be >= 1")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.grid_w, self.grid_h)

    @property
    def trail_params(self) -> TrailParams:
        return TrailParams(
            history_len=self.trail_len,
            recenter=self.trail_recenter,
            gain_x=self.trail_gain_x,
            gain_y=self.trail_gain_y,
            u_clamp=self.u_clamp,
            v_clamp=self.v_clamp,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RoomConfig":
        known = {f.name for f in fields(cls)}
        cfg = cls(**{k: v for k, v in d.items() if k in known})
        cfg.validate()
        return cfg


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    log_level: str = "info"
    static_dir: str | None = None
    record_dir: str | None = None
    room: RoomConfig = field(default_factory=RoomConfig)


# Field name -> python type, for env-var coercion (seed's default is None).
_ROOM_FIELD_TYPES = {
    f.name: (int if f.name == "seed" else type(getattr(RoomConfig(), f.name)))
    for f in fields(RoomConfig)
}


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"listen address must be host:port, got {value!r}")
    return (host or "127.0.0.1"), int(port)


def _coerce(raw: str, target_type):
    if target_type is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def load_server_config(path: str | None = None, env=None) -> ServerConfig:
    """Build a ServerConfig from an optional TOML file plus env overrides.

    Env vars: CALMRELAY_LISTEN, CALMRELAY_LOG_LEVEL, CALMRELAY_STATIC_DIR,
    CALMRELAY_RECORD_DIR, CALMRELAY_TICK_HZ, and CALMRELAY_ROOM_<FIELD> for
    any RoomConfig field.
    """
    env = os.environ if env is None else env
    cfg = ServerConfig()

    if path:
        with open(path, "rb") as f:
            data = tomllib.load(f)
        if "listen" in data:
            cfg.host, cfg.port = parse_listen(str(data["listen"]))
        for key in ("log_level", "static_dir", "record_dir"):
            if key in data:
                setattr(cfg, key, data[key])
        room_fields = {f.name: f for f in fields(RoomConfig)}
        for key, value in data.get("room", {}).items():
            if key not in room_fields:
                raise ValueError(f"unknown room config key {key!r}")
            setattr(cfg.room, key, value)

    if env.get(ENV_PREFIX + "LISTEN"):
        cfg.host, cfg.port = parse_listen(env[ENV_PREFIX + "LISTEN"])
    if env.get(ENV_PREFIX + "LOG_LEVEL"):
        cfg.log_level = env[ENV_PREFIX + "LOG_LEVEL"]
    if env.get(ENV_PREFIX + "STATIC_DIR"):
        cfg.static_dir = env[ENV_PREFIX + "STATIC_DIR"]
    if env.get(ENV_PREFIX + "RECORD_DIR"):
        cfg.record_dir = env[ENV_PREFIX + "RECORD_DIR"]
    if env.get(ENV_PREFIX + "TICK_HZ"):
        cfg.room.tick_hz = float(env[ENV_PREFIX + "TICK_HZ"])
    for f in fields(RoomConfig):
        raw = env.get(ENV_PREFIX + "ROOM_" + f.name.upper())
        if raw is not None:
            setattr(cfg.room, f.name, _coerce(raw, _ROOM_FIELD_TYPES[f.name]))

    cfg.room.validate()
    return cfg
