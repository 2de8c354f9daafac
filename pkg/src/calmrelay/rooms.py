"""Room state machines: membership, sample ingestion, tick-time frames.

Rooms are transport-free and wall-clock-free. The relay server (or the
session replayer) drives a room with explicit room-time stamps, so the same
inputs always rebuild bit-identical frames. Each room is mutated only by
its owning task; nothing here blocks or awaits.
"""

from __future__ import annotations

import random
import secrets

from . import protocol
from .config import RoomConfig
from .gaze import HeatAccumulator, Smoother, dense_area_mask, dots_frame
from .model import (
    GAZE,
    NOD,
    ClockRebase,
    GazeSample,
    NodSample,
    SampleRejected,
    mix_seed,
    validate_sample,
)
from .nod import TrailState, compose_trails


class RoomFull(Exception):
    code = protocol.ERR_ROOM_FULL


class TickResult:
    """One broadcast frame: the message and its single serialization.

    Every subscriber receives `text` verbatim, so all members of a room see
    byte-identical frame payloads.
    """

    __slots__ = ("seq", "t", "msg", "text", "data")

    def __init__(self, seq: int, t: float, msg: dict):
        self.seq = seq
        self.t = t
        self.msg = msg
        self.text = protocol.encode(msg)
        self.data = self.text.encode("utf-8")


class AudienceState:
    __slots__ = (
        "id",
        "slot_key",
        "clock",
        "last_t",
        "last_seen",
        "samples_admitted",
        "smoother",
        "latest",
        "trail",
        "tick_vel",
    )

    def __init__(self, audience_id: str, mode: str, config: RoomConfig,
                 slot_key: float, now: float):
        self.id = audience_id
        self.slot_key = slot_key
        self.clock = ClockRebase()
        self.last_t: int | None = None
        self.last_seen = now
        self.samples_admitted = 0
        self.smoother = Smoother(config.smooth_window) if mode == GAZE else None
        self.latest: tuple[float, float] | None = None
        self.trail = TrailState(config.trail_params) if mode == NOD else None
        self.tick_vel: tuple[float, float] | None = None


class Room:
    """State for one room; mode is fixed at creation and never changes."""

    def __init__(self, room_id: str, mode: str, config: RoomConfig,
                 seed: int | None = None, t0: float = 0.0):
        if mode not in (GAZE, NOD):
            raise ValueError(f"unknown room mode {mode!r}")
        config.validate()
        self.room_id = room_id
        self.mode = mode
        self.config = config
        if seed is None:
            seed = config.seed
        if seed is None:
            seed = secrets.randbits(63)
        self.seed = seed
        self.t0 = t0
        self.tick_seq = 0
        self.audiences: dict[str, AudienceState] = {}
        self.speakers: set[str] = set()
        self.drops = 0  # samples dropped at ingestion (wrong kind, stale, ...)
        self._id_rng = random.Random(mix_seed(seed, 1))
        self._slot_rng = random.Random(mix_seed(seed, 2))
        self._dots_salt = mix_seed(seed, 3)
        self._last_tick_t = t0
        self._heat = None
        if mode == GAZE and config.gaze_display in ("heat", "mask"):
            self._heat = HeatAccumulator(
                config.grid, config.kernel_bandwidth, config.heat_half_life_s, t0
            )

    # -- membership ---------------------------------------------------

    @property
    def n_audiences(self) -> int:
        return len(self.audiences)

    @property
    def n_members(self) -> int:
        return len(self.audiences) + len(self.speakers)

    def _new_id(self, prefix: str) -> str:
        return f"{prefix}{self._id_rng.getrandbits(64):016x}"

    def join(self, role: str, member_id: str | None = None,
             now: float = 0.0) -> str:
        if role == protocol.ROLE_AUDIENCE:
            if len(self.audiences) >= self.config.audience_cap:
                raise RoomFull(self.room_id)
            aid = member_id if member_id is not None else self._new_id("a")
            self.audiences[aid] = AudienceState(
                aid, self.mode, self.config, self._slot_rng.random(), now
            )
            return aid
        if role == protocol.ROLE_SPEAKER:
            sid = member_id if member_id is not None else self._new_id("s")
            self.speakers.add(sid)
            return sid
        raise ValueError(f"unknown role {role!r}")

    def leave(self, member_id: str) -> bool:
        if member_id in self.audiences:
            del self.audiences[member_id]
            return True
        if member_id in self.speakers:
            self.speakers.discard(member_id)
            return True
        return False

    def room_info(self) -> dict:
        return protocol.room_info(self.mode, len(self.audiences))

    def silent_audiences(self, now: float, timeout_ms: float) -> list[str]:
        return [
            a.id for a in self.audiences.values() if now - a.last_seen > timeout_ms
        ]

    # -- ingestion ----------------------------------------------------

    def ingest(self, audience_id: str, msg: dict, arrival_t: float):
        """Validate and apply one audience sample; returns the admitted
        sample (for the session log). Raises SampleRejected on drop."""
        aud = self.audiences[audience_id]
        try:
            kind, t_raw, a, b = protocol.parse_sample(msg)
        except protocol.ProtocolError as exc:
            self.drops += 1
            raise SampleRejected("REJECT_MALFORMED", str(exc)) from exc
        t = aud.clock.rebase(t_raw, arrival_t)
        if kind == GAZE:
            sample = GazeSample(audience_id, t, a, b)
        else:
            sample = NodSample(audience_id, t, a, b)
        try:
            sample = validate_sample(sample, self.mode, aud.last_t,
                                     self.config.v_max)
        except SampleRejected:
            self.drops += 1
            raise
        self._apply(aud, sample)
        aud.last_seen = arrival_t
        return sample

    def apply_admitted(self, audience_id: str, sample) -> None:
        """Replay path: apply a previously admitted sample as-is."""
        self._apply(self.audiences[audience_id], sample)

    def _apply(self, aud: AudienceState, sample) -> None:
        if self.mode == GAZE:
            sx, sy = aud.smoother.push(sample.x, sample.y)
            aud.latest = (sx, sy)
            if self._heat is not None:
                self._heat.add(sample.t, sx, sy)
        else:
            aud.tick_vel = (sample.vx, sample.vy)
        aud.last_t = sample.t
        aud.samples_admitted += 1

    # -- tick ---------------------------------------------------------

    def tick(self, t: float) -> TickResult:
        """Advance pipelines to room time t and build the broadcast frame."""
        self.tick_seq += 1
        seq = self.tick_seq
        cfg = self.config
        if self.mode == GAZE:
            display = cfg.gaze_display
            if display == "dots":
                rng = random.Random(mix_seed(self._dots_salt, seq))
                positions = [a.latest for a in self.audiences.values()
                             if a.latest is not None]
                fr = dots_frame(positions, seq, rng, len(self.audiences))
                mode, payload = "dots", fr.payload()
            else:
                self._heat.advance(t)
                fr = self._heat.frame(seq, len(self.audiences))
                if display == "mask":
                    mask = dense_area_mask(fr, cfg.mask_theta)
                    payload = {
                        "w": fr.grid.w,
                        "h": fr.grid.h,
                        "cells": [1.0 if m else 0.0 for m in mask],
                        "max": 1.0 if mask.any() else 0.0,
                    }
                    mode = "mask"
                else:
                    mode, payload = "heat", fr.payload()
        else:
            dt_s = max(t - self._last_tick_t, 0.0) / 1000.0
            for aud in self.audiences.values():
                vx, vy = aud.tick_vel if aud.tick_vel is not None else (0.0, 0.0)
                aud.trail.advance(vx, vy, dt_s)
                aud.tick_vel = None
            ordered = sorted(self.audiences.values(), key=lambda a: a.slot_key)
            fr = compose_trails([a.trail for a in ordered], cfg.trail_spacing, seq)
            mode, payload = "trails", fr.payload()
        self._last_tick_t = max(self._last_tick_t, t)
        return TickResult(seq, t, protocol.frame(mode, seq, payload))
