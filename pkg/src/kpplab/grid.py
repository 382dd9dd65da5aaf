"""Rectangular cell-centred lattices: :class:`GridSpec`, :class:`GridMask`, :class:`GridField`.

``origin`` is the lower corner of the box, so cell ``i`` along an axis is
centred at ``origin + (i + 1/2) * spacing``.  A box ``[0, L]`` with an even
number of cells is therefore symmetric under reflection about ``L / 2``, and
a grid whose lower face sits on a symmetry plane reproduces the mirrored
problem exactly under zero-flux boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import GridMismatchError


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.dims) == len(self.spacing) == len(self.origin)):
            raise ValueError("dims, spacing and origin must have equal length")
        if any(d < 1 for d in self.dims):
            raise ValueError("dims must be >= 1 per axis")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("spacing must be positive")

    @classmethod
    def from_box(cls, lower, upper, h) -> "GridSpec":
        """Grid covering ``[lower, upper]`` with (approximately) spacing ``h``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        hs = np.broadcast_to(np.asarray(h, dtype=float), lower.shape)
        dims = tuple(int(round((u - l) / hh)) for l, u, hh in zip(lower, upper, hs))
        spacing = tuple(float((u - l) / d) for l, u, d in zip(lower, upper, dims))
        return cls(dims, spacing, tuple(float(v) for v in lower))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + np.asarray(self.dims) * np.asarray(self.spacing)

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing[axis]

    def centers(self) -> np.ndarray:
        """All cell centres, shape ``dims + (N,)``."""
        axes = [self.axis_coords(a) for a in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def index_of(self, x) -> np.ndarray:
        """Fractional index of point(s) ``x`` (cell centre of cell i maps to i)."""
        x = np.asarray(x, dtype=float)
        return (x - self.lower) / np.asarray(self.spacing) - 0.5

    def window_slices(self, lower, upper) -> tuple[slice, ...]:
        """Cells whose centres lie in the closed box ``[lower, upper]``."""
        out = []
        for a in range(self.ndim):
            c = self.axis_coords(a)
            idx = np.nonzero((c >= lower[a] - 1e-12) & (c <= upper[a] + 1e-12))[0]
            if idx.size == 0:
                out.append(slice(0, 0))
            else:
                out.append(slice(int(idx[0]), int(idx[-1]) + 1))
        return tuple(out)

    def same_as(self, other: "GridSpec", rtol: float = 1e-12) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0)
            and np.allclose(self.origin, other.origin, rtol=rtol, atol=1e-12)
        )

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing), "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        if "lower" in d:
            return cls.from_box(d["lower"], d["upper"], d["h"])
        return cls(tuple(int(v) for v in d["dims"]), tuple(float(v) for v in d["spacing"]),
                   tuple(float(v) for v in d["origin"]))


@dataclass(frozen=True, eq=False)
class GridMask:
    grid: GridSpec
    bits: np.ndarray

    def __post_init__(self):
        if tuple(self.bits.shape) != self.grid.dims:
            raise ValueError("bits shape does not match grid dims")

    @property
    def dims(self):
        return self.grid.dims

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def origin(self):
        return self.grid.origin


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar field ``u(t, .)`` on a grid (solver state and snapshot)."""

    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if tuple(self.values.shape) != self.grid.dims:
            raise ValueError("values shape does not match grid dims")
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    @property
    def ndim(self) -> int:
        return self.grid.ndim

    @property
    def spacing(self):
        return self.grid.spacing

    def with_values(self, values: np.ndarray, time: float | None = None) -> "GridField":
        return replace(self, values=values, time=self.time if time is None else time)

    def sample(self, points, order: int = 1) -> np.ndarray:
        """Interpolate at arbitrary points (shape ``(M, N)``); edge values are held."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self.grid.index_of(pts).T
        return map_coordinates(self.values, idx, order=order, mode="nearest")

    def gradient(self) -> list[np.ndarray]:
        if self.ndim == 1:
            return [np.gradient(self.values, self.spacing[0])]
        return list(np.gradient(self.values, *self.spacing))

    def mirrored(self, axis: int = 0) -> "GridField":
        """Reflect across the lower face of ``axis`` and return the doubled field."""
        vals = np.concatenate([np.flip(self.values, axis=axis), self.values], axis=axis)
        dims = list(self.grid.dims)
        dims[axis] *= 2
        origin = list(self.grid.origin)
        origin[axis] = self.grid.origin[axis] - self.grid.dims[axis] * self.grid.spacing[axis]
        return GridField(GridSpec(tuple(dims), self.grid.spacing, tuple(origin)), vals, self.time)


def check_same_grid(a: GridField, b: GridField) -> None:
    if not a.grid.same_as(b.grid):
        raise GridMismatchError("fields live on different grids")
