"""Shared domain types, sample admission rules, and the room timebase."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

GAZE = "gaze"
NOD = "nod"
MODES = (GAZE, NOD)

# Max plausible nose-tip speed in normalized screen units/s; faster samples
# are clamped so a single bad landmark cannot fling a trail off screen.
V_MAX = 5.0

# Client clock drift tolerated before admission re-anchors on arrival time.
SKEW_LIMIT_MS = 2000.0

REJECT_NONFINITE = "REJECT_NONFINITE"
REJECT_STALE_TIMESTAMP = "REJECT_STALE_TIMESTAMP"
REJECT_WRONG_KIND = "REJECT_WRONG_KIND"

_MASK64 = 0xFFFFFFFFFFFFFFFF


class SampleRejected(ValueError):
    """Raised when a raw sample fails admission; .code names the reason."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True, slots=True)
class GazeSample:
    audience: str
    t: int  # ms since room epoch
    x: float  # normalized, 0 = left edge
    y: float  # normalized, 0 = top edge


@dataclass(frozen=True, slots=True)
class NodSample:
    audience: str
    t: int  # ms since room epoch
    vx: float  # screen-widths/s, positive rightward
    vy: float  # screen-heights/s, positive downward


def _clamp(value: float, lo: float, hi: float) -> float:
    if value < lo:
        return lo
    if value > hi:
        return hi
    return value


def validate_sample(sample, kind: str, last_t: int | None = None, v_max: float = V_MAX):
    """Admit one sample for a room of the given kind.

    Clamps coordinates into range, rejects non-finite fields and timestamps
    at or before the audience's last admitted one. Idempotent: an already
    admitted sample passes through unchanged.
    """
    if kind == GAZE:
        if not isinstance(sample, GazeSample):
            raise SampleRejected(REJECT_WRONG_KIND, "nod sample in gaze room")
        if not (math.isfinite(sample.x) and math.isfinite(sample.y)):
            raise SampleRejected(REJECT_NONFINITE)
        if last_t is not None and sample.t <= last_t:
            raise SampleRejected(REJECT_STALE_TIMESTAMP, f"t={sample.t} last={last_t}")
        x = _clamp(sample.x, 0.0, 1.0)
        y = _clamp(sample.y, 0.0, 1.0)
        if x != sample.x or y != sample.y:
            return replace(sample, x=x, y=y)
        return sample
    if kind == NOD:
        if not isinstance(sample, NodSample):
            raise SampleRejected(REJECT_WRONG_KIND, "gaze sample in nod room")
        if not (math.isfinite(sample.vx) and math.isfinite(sample.vy)):
            raise SampleRejected(REJECT_NONFINITE)
        if last_t is not None and sample.t <= last_t:
            raise SampleRejected(REJECT_STALE_TIMESTAMP, f"t={sample.t} last={last_t}")
        vx = _clamp(sample.vx, -v_max, v_max)
        vy = _clamp(sample.vy, -v_max, v_max)
        if vx != sample.vx or vy != sample.vy:
            return replace(sample, vx=vx, vy=vy)
        return sample
    raise ValueError(f"unknown sample kind {kind!r}")


class ClockRebase:
    """Maps one client's relative timestamps onto room time.

    The first sample anchors the offset at its arrival time; afterwards the
    client clock is trusted until it drifts more than `skew_limit_ms` from
    arrival, at which point the offset is re-anchored.
    """

    def __init__(self, skew_limit_ms: float = SKEW_LIMIT_MS):
        self.skew_limit_ms = skew_limit_ms
        self._offset: float | None = None

    def rebase(self, client_t: float, arrival_t: float) -> int:
        if self._offset is None:
            self._offset = arrival_t - client_t
        t = client_t + self._offset
        if abs(t - arrival_t) > self.skew_limit_ms:
            self._offset = arrival_t - client_t
            t = arrival_t
        return int(round(t))


class EventClock:
    """Issues strictly increasing room-time stamps (float ms).

    Ties are bumped by 1 microsecond so session-log records stay strictly
    ordered even when two events land on the same clock reading.
    """

    def __init__(self, start: float = 0.0):
        self._last = start

    def stamp(self, raw_ms: float) -> float:
        t = raw_ms if raw_ms > self._last else self._last + 1e-3
        self._last = t
        return t


def mix_seed(seed: int, k: int) -> int:
    """Derive an independent 64-bit seed for substream k."""
    return (seed * 0x9E3779B97F4A7C15 + k) & _MASK64
