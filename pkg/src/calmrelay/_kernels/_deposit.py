"""Reference deposit kernel in pure python.

The compiled twin in _deposit_cy.pyx mirrors this loop op for op (same
arithmetic, same order, libm exp) so both backends produce bit-identical
grids; keep them in lockstep when editing.
"""

from __future__ import annotations

import math


def deposit_gaussian(cells, grid_w, grid_h, xs, ys, ws, bandwidth):
    """Splat per-point-normalized truncated Gaussians onto a row-major grid.

    cells is a writable flat float64 buffer of length grid_w*grid_h; each
    point (xs[k], ys[k]) adds total mass ws[k], normalized over the cell
    centers inside its truncation disk (radius 3*bandwidth) that are in
    bounds, so border points are not under-weighted.
    """
    radius = 3.0 * bandwidth
    r2 = radius * radius
    inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth)
    px = 1.0 / grid_w
    py = 1.0 / grid_h
    for k in range(len(xs)):
        x = xs[k]
        y = ys[k]
        w = ws[k]
        i0 = math.ceil((x - radius) / px - 0.5)
        i1 = math.floor((x + radius) / px - 0.5)
        j0 = math.ceil((y - radius) / py - 0.5)
        j1 = math.floor((y + radius) / py - 0.5)
        if i0 < 0:
            i0 = 0
        if j0 < 0:
            j0 = 0
        if i1 > grid_w - 1:
            i1 = grid_w - 1
        if j1 > grid_h - 1:
            j1 = grid_h - 1
        s = 0.0
        for j in range(j0, j1 + 1):
            dy = (j + 0.5) * py - y
            dy2 = dy * dy
            for i in range(i0, i1 + 1):
                dx = (i + 0.5) * px - x
                d2 = dx * dx + dy2
                if d2 <= r2:
                    s += math.exp(-d2 * inv2h2)
        if s <= 0.0:
            # Truncation disk missed every cell center (tiny bandwidth):
            # give the full mass to the containing cell instead of losing it.
            ci = int(x * grid_w)
            cj = int(y * grid_h)
            if ci < 0:
                ci = 0
            elif ci > grid_w - 1:
                ci = grid_w - 1
            if cj < 0:
                cj = 0
            elif cj > grid_h - 1:
                cj = grid_h - 1
            cells[cj * grid_w + ci] += w
            continue
        scale = w / s
        for j in range(j0, j1 + 1):
            dy = (j + 0.5) * py - y
            dy2 = dy * dy
            for i in range(i0, i1 + 1):
                dx = (i + 0.5) * px - x
                d2 = dx * dx + dy2
                if d2 <= r2:
                    cells[j * grid_w + i] += math.exp(-d2 * inv2h2) * scale
