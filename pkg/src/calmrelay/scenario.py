"""Scripted synthetic-audience behaviors and scenario files.

A scenario fully determines every audience's sample stream from its seed:
two runs of the same config produce byte-identical streams. Files are JSON
or TOML (same keys either way).
"""

from __future__ import annotations

import json
import math
import random
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import GAZE, NOD, mix_seed


def _clamp01(v: float) -> float:
    return min(max(v, 0.0), 1.0)


def cos_cycles(phase: float) -> float:
    """cos(2*pi*phase) with exact zeros at quarter phases."""
    frac = phase % 1.0
    if frac == 0.25 or frac == 0.75:
        return 0.0
    return math.cos(math.tau * frac)


# -- gaze behaviors ---------------------------------------------------------


@dataclass(frozen=True)
class Fixate:
    x: float
    y: float
    sigma: float = 0.0


@dataclass(frozen=True)
class SaccadeScript:
    waypoints: tuple  # ((t_s, x, y), ...) sorted by t
    sigma: float = 0.0


@dataclass(frozen=True)
class RandomWalk:
    sigma_step: float
    x0: float = 0.5
    y0: float = 0.5


# -- nod behaviors ----------------------------------------------------------


@dataclass(frozen=True)
class NodOsc:
    """Vertical nose-tip oscillation: vy is the derivative of a sine of
    positional amplitude `amp` at `freq_hz`."""

    freq_hz: float
    amp: float


@dataclass(frozen=True)
class ShakeOsc:
    freq_hz: float
    amp: float


@dataclass(frozen=True)
class Still:
    sigma: float = 0.0


@dataclass(frozen=True)
class VelScript:
    points: tuple  # ((t_s, vx, vy), ...) sorted by t; linear interpolation


GAZE_KINDS = {"fixate", "saccade", "random_walk"}
NOD_KINDS = {"nod", "shake", "still", "script"}


def parse_behavior(spec: dict, mode: str):
    kind = spec.get("kind")
    if mode == GAZE:
        if kind == "fixate":
            return Fixate(spec["x"], spec["y"], spec.get("sigma", 0.0))
        if kind == "saccade":
            wps = tuple(tuple(p) for p in spec["waypoints"])
            if not wps:
                raise ValueError("saccade needs at least one waypoint")
            return SaccadeScript(wps, spec.get("sigma", 0.0))
        if kind == "random_walk":
            return RandomWalk(spec["sigma_step"], spec.get("x0", 0.5),
                              spec.get("y0", 0.5))
        raise ValueError(f"unknown gaze behavior {kind!r} (want {GAZE_KINDS})")
    if kind == "nod":
        return NodOsc(spec["freq_hz"], spec["amp"])
    if kind == "shake":
        return ShakeOsc(spec["freq_hz"], spec["amp"])
    if kind == "still":
        return Still(spec.get("sigma", 0.0))
    if kind == "script":
        pts = tuple(tuple(p) for p in spec["points"])
        if not pts:
            raise ValueError("script needs at least one point")
        return VelScript(pts)
    raise ValueError(f"unknown nod behavior {kind!r} (want {NOD_KINDS})")


class GazeGen:
    def __init__(self, behavior, rng: random.Random):
        self.behavior = behavior
        self.rng = rng
        if isinstance(behavior, RandomWalk):
            self._x = behavior.x0
            self._y = behavior.y0

    def at(self, t_s: float) -> tuple[float, float]:
        b = self.behavior
        if isinstance(b, Fixate):
            return (
                _clamp01(b.x + self.rng.gauss(0.0, b.sigma)),
                _clamp01(b.y + self.rng.gauss(0.0, b.sigma)),
            )
        if isinstance(b, SaccadeScript):
            x, y = b.waypoints[0][1], b.waypoints[0][2]
            for wt, wx, wy in b.waypoints:
                if wt <= t_s:
                    x, y = wx, wy
                else:
                    break
            return (
                _clamp01(x + self.rng.gauss(0.0, b.sigma)),
                _clamp01(y + self.rng.gauss(0.0, b.sigma)),
            )
        # random walk
        self._x = _clamp01(self._x + self.rng.gauss(0.0, b.sigma_step))
        self._y = _clamp01(self._y + self.rng.gauss(0.0, b.sigma_step))
        return self._x, self._y


class NodGen:
    def __init__(self, behavior, rng: random.Random):
        self.behavior = behavior
        self.rng = rng

    def at(self, t_s: float) -> tuple[float, float]:
        b = self.behavior
        if isinstance(b, NodOsc):
            return 0.0, b.amp * math.tau * b.freq_hz * cos_cycles(b.freq_hz * t_s)
        if isinstance(b, ShakeOsc):
            return b.amp * math.tau * b.freq_hz * cos_cycles(b.freq_hz * t_s), 0.0
        if isinstance(b, Still):
            return self.rng.gauss(0.0, b.sigma), self.rng.gauss(0.0, b.sigma)
        # velocity script: piecewise-linear interpolation, clamped ends
        pts = b.points
        if t_s <= pts[0][0]:
            return pts[0][1], pts[0][2]
        for (t0, vx0, vy0), (t1, vx1, vy1) in zip(pts, pts[1:]):
            if t0 <= t_s <= t1:
                if t1 == t0:
                    return vx1, vy1
                f = (t_s - t0) / (t1 - t0)
                return vx0 + f * (vx1 - vx0), vy0 + f * (vy1 - vy0)
        return pts[-1][1], pts[-1][2]


@dataclass
class ScenarioConfig:
    room: str
    mode: str
    n_audiences: int
    duration_s: float
    sample_hz: float = 30.0
    seed: int = 0
    behaviors: list = field(default_factory=list)  # one per audience
    assertions: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        mode = d["mode"]
        if mode not in (GAZE, NOD):
            raise ValueError(f"scenario mode must be gaze or nod, got {mode!r}")
        n = int(d["n_audiences"])
        if "behaviors" in d:
            specs = list(d["behaviors"])
            if len(specs) != n:
                raise ValueError(
                    f"behaviors has {len(specs)} entries for {n} audiences"
                )
        elif "behavior" in d:
            specs = [d["behavior"]] * n
        else:
            raise ValueError("scenario needs 'behavior' or 'behaviors'")
        return cls(
            room=d["room"],
            mode=mode,
            n_audiences=n,
            duration_s=float(d["duration_s"]),
            sample_hz=float(d.get("sample_hz", 30.0)),
            seed=int(d.get("seed", 0)),
            behaviors=[parse_behavior(s, mode) for s in specs],
            assertions=list(d.get("assertions", [])),
        )

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        if str(path).endswith(".toml"):
            with open(path, "rb") as f:
                return cls.from_dict(tomllib.load(f))
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def generator(self, idx: int):
        rng = random.Random(mix_seed(self.seed, 100 + idx))
        behavior = self.behaviors[idx]
        if self.mode == GAZE:
            return GazeGen(behavior, rng)
        return NodGen(behavior, rng)

    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_hz))

    def sample_stream(self, idx: int):
        """Yield (t_ms, a, b) for one audience; deterministic in seed."""
        gen = self.generator(idx)
        for k in range(self.n_samples()):
            t_s = k / self.sample_hz
            a, b = gen.at(t_s)
            yield int(round(t_s * 1000.0)), a, b
