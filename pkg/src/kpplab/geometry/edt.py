"""Exact Euclidean distance transform (lower envelope of parabolas, one pass per axis).

Distances are between cell centres.  ``edt(mask)`` returns, for every cell,
the distance to the nearest ``True`` cell; ``inf`` when the mask is empty.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _dt_lines(f, h, out, v, z):
    # f, out: (lines, n) squared distances; inf marks "no feature yet"
    lines, n = f.shape
    for line in range(lines):
        row = f[line]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == np.inf:
                continue
            pq = q * h
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            while True:
                r = v[k]
                pr = r * h
                s = ((fq + pq * pq) - (row[r] + pr * pr)) / (2.0 * (pq - pr))
                if s <= z[k]:
                    k -= 1
                    if k < 0:
                        break
                else:
                    break
            k += 1
            v[k] = q
            if k == 0:
                z[0] = -np.inf
            else:
                z[k] = s
            z[k + 1] = np.inf
        o = out[line]
        if k < 0:
            for q in range(n):
                o[q] = np.inf
            continue
        j = 0
        for q in range(n):
            pq = q * h
            while z[j + 1] < pq:
                j += 1
            r = v[j]
            d = pq - r * h
            o[q] = d * d + row[r]


def squared_edt(mask: np.ndarray, spacing=None) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    nd = mask.ndim
    spacing = (1.0,) * nd if spacing is None else tuple(np.broadcast_to(spacing, (nd,)))
    g = np.where(mask, 0.0, np.inf)
    for axis in range(nd):
        moved = np.moveaxis(g, axis, -1)
        shape = moved.shape
        lines = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
        out = np.empty_like(lines)
        n = shape[-1]
        _dt_lines(lines, float(spacing[axis]), out, np.empty(n, np.int64), np.empty(n + 1))
        g = np.moveaxis(out.reshape(shape), -1, axis)
    return np.ascontiguousarray(g)


def edt(mask: np.ndarray, spacing=None) -> np.ndarray:
    """Distance from each cell centre to the nearest set cell centre."""
    return np.sqrt(squared_edt(mask, spacing))


def edt_brute_force(mask: np.ndarray, spacing=None) -> np.ndarray:
    """O(n^2) reference: explicit minimum over all set cells."""
    mask = np.asarray(mask, dtype=bool)
    nd = mask.ndim
    spacing = np.broadcast_to(np.asarray(1.0 if spacing is None else spacing, float), (nd,))
    pts = np.argwhere(np.ones_like(mask)) * spacing
    feats = np.argwhere(mask) * spacing
    if feats.shape[0] == 0:
        return np.full(mask.shape, np.inf)
    best = np.full(pts.shape[0], np.inf)
    for chunk in range(0, feats.shape[0], 512):
        fb = feats[chunk:chunk + 512]
        d2 = ((pts[:, None, :] - fb[None, :, :]) ** 2).sum(-1)
        best = np.minimum(best, d2.min(axis=1))
    return np.sqrt(best).reshape(mask.shape)
