"""Per-audience gaze smoothing and the collective gaze displays.

Three aggregate views are built from smoothed positions: a decayed
kernel-density heat map, raw dots (one per audience, shuffled per frame),
and a thresholded dense-area mask over the heat map.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from ._kernels import deposit_gaussian


class InvalidThreshold(ValueError):
    code = "INVALID_THRESHOLD"


@dataclass(frozen=True)
class GridSpec:
    """Cell counts of the density grid (default 64x36, 16:9)."""

    w: int = 64
    h: int = 36

    @property
    def size(self) -> int:
        return self.w * self.h

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Column/row of the cell containing a normalized position."""
        i = min(int(x * self.w), self.w - 1)
        j = min(int(y * self.h), self.h - 1)
        return max(i, 0), max(j, 0)


class Smoother:
    """Running mean over the last `window` admitted gaze positions.

    Defined as soon as one sample is present; the mean runs over however
    many samples have arrived until the window fills.
    """

    def __init__(self, window: int = 6):
        if window < 1:
            raise ValueError("window must be >= 1")
        self._buf: deque[tuple[float, float]] = deque(maxlen=window)

    def __len__(self) -> int:
        return len(self._buf)

    @property
    def window(self) -> int:
        return self._buf.maxlen

    def push(self, x: float, y: float) -> tuple[float, float]:
        self._buf.append((float(x), float(y)))
        # mean anchored at the first entry: constant input has an exact
        # fixed point (the deltas cancel to 0.0 instead of accumulating
        # rounding from repeated summation)
        bx0, by0 = self._buf[0]
        dx = 0.0
        dy = 0.0
        for bx, by in self._buf:
            dx += bx - bx0
            dy += by - by0
        n = len(self._buf)
        return bx0 + dx / n, by0 + dy / n


def decay_weight(age_ms: float, half_life_s: float) -> float:
    """Exponential-decay weight: halves every half_life_s; inf disables."""
    if age_ms <= 0.0:
        return 1.0
    if half_life_s is None or math.isinf(half_life_s):
        return 1.0
    return 0.5 ** (age_ms / (half_life_s * 1000.0))


@dataclass
class HeatMapFrame:
    grid: GridSpec
    cells: np.ndarray  # flat float64, row-major, length grid.size
    max_density: float
    tick_seq: int = 0
    n_audiences: int = 0

    def payload(self) -> dict:
        return {
            "w": self.grid.w,
            "h": self.grid.h,
            "cells": [float(c) for c in self.cells],
            "max": self.max_density,
        }


@dataclass
class DotsFrame:
    points: list[tuple[float, float]]
    tick_seq: int = 0
    n_audiences: int = 0

    def payload(self) -> dict:
        return {"points": [[x, y] for x, y in self.points]}


def accumulate_heatmap(points, t_now: float, grid: GridSpec, bandwidth: float,
                       half_life_s: float = math.inf, tick_seq: int = 0,
                       n_audiences: int = 0) -> HeatMapFrame:
    """Build a heat-map frame from (t_ms, x, y) smoothed positions.

    Each position deposits unit mass (normalized truncated Gaussian) scaled
    by its age weight at t_now. Empty input yields a valid all-zero frame.
    """
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be > 0")
    cells = np.zeros(grid.size, dtype=np.float64)
    pts = list(points)
    if pts:
        xs = np.array([p[1] for p in pts], dtype=np.float64)
        ys = np.array([p[2] for p in pts], dtype=np.float64)
        ws = np.array(
            [decay_weight(t_now - p[0], half_life_s) for p in pts], dtype=np.float64
        )
        deposit_gaussian(cells, grid.w, grid.h, xs, ys, ws, bandwidth)
    max_density = float(cells.max()) if pts else 0.0
    return HeatMapFrame(grid, cells, max_density, tick_seq, n_audiences)


class HeatAccumulator:
    """Exponentially decayed density grid advanced tick by tick.

    Samples buffered between ticks are deposited at tick time with their own
    age weights, and the standing grid is decayed by the tick interval, so
    at any tick the grid equals accumulate_heatmap over the entire sample
    history (up to float rounding) without rescanning it.
    """

    def __init__(self, grid: GridSpec, bandwidth: float, half_life_s: float,
                 t0: float = 0.0):
        if bandwidth <= 0.0:
            raise ValueError("bandwidth must be > 0")
        self.grid = grid
        self.bandwidth = bandwidth
        self.half_life_s = half_life_s
        self.cells = np.zeros(grid.size, dtype=np.float64)
        self._pending: list[tuple[float, float, float]] = []
        self._last_t = t0

    def add(self, t_ms: float, x: float, y: float) -> None:
        self._pending.append((t_ms, x, y))

    def advance(self, t_now: float) -> None:
        if t_now > self._last_t:
            factor = decay_weight(t_now - self._last_t, self.half_life_s)
            if factor != 1.0:
                self.cells *= factor
            self._last_t = t_now
        if self._pending:
            xs = np.array([p[1] for p in self._pending], dtype=np.float64)
            ys = np.array([p[2] for p in self._pending], dtype=np.float64)
            ws = np.array(
                [decay_weight(t_now - p[0], self.half_life_s) for p in self._pending],
                dtype=np.float64,
            )
            deposit_gaussian(self.cells, self.grid.w, self.grid.h, xs, ys, ws,
                             self.bandwidth)
            self._pending.clear()

    def frame(self, tick_seq: int = 0, n_audiences: int = 0) -> HeatMapFrame:
        cells = self.cells.copy()
        return HeatMapFrame(self.grid, cells, float(cells.max()), tick_seq,
                            n_audiences)


def dense_area_mask(frame: HeatMapFrame, theta: float) -> np.ndarray:
    """Boolean grid of cells whose density reaches theta * max_density."""
    if not (0.0 < theta <= 1.0) or math.isnan(theta):
        raise InvalidThreshold(f"theta must be in (0, 1], got {theta}")
    if frame.max_density <= 0.0:
        return np.zeros(frame.grid.size, dtype=bool)
    return frame.cells >= theta * frame.max_density


def dots_frame(positions, tick_seq: int, rng: random.Random,
               n_audiences: int | None = None) -> DotsFrame:
    """One dot per active audience, order freshly shuffled per frame."""
    points = [(float(x), float(y)) for x, y in positions]
    rng.shuffle(points)
    n = len(points) if n_audiences is None else n_audiences
    return DotsFrame(points, tick_seq, n)
