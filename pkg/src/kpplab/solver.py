"""Finite-difference integration of ``u_t = lap u + f(u)`` on cell-centred grids.

Two schemes: forward Euler on the 2N+1 stencil, and an IMEX variant
(explicit reaction, then one implicit-Euler tridiagonal solve per axis).
Boundaries are either zero-flux (mirror ghost cells) or frozen, in which case
the outermost layer of cells keeps its initial values.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numba
import numpy as np

from .errors import ConfigError, DivergenceError, GridMismatchError
from .geometry.sets import SetDescriptor, rasterize_mask
from .grid import GridField, GridSpec
from .reaction import ReactionFn

SLACK = 1e-9
SCHEMES = ("explicit-euler", "imex")
BOUNDARIES = ("neumann-zero", "dirichlet-frozen")


def configure_threads() -> int:
    """Apply ``KPPLAB_THREADS`` (if set) as a cap on numba's thread pool."""
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
    cap = os.environ.get("KPPLAB_THREADS")
    if cap:
        try:
            n = max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS))
        except ValueError as exc:
            raise ConfigError(f"KPPLAB_THREADS must be an integer, got {cap!r}") from exc
        numba.set_num_threads(n)
    return numba.get_num_threads()


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    horizon: float
    snapshot_every: float
    scheme: str = "explicit-euler"
    boundary: str = "neumann-zero"
    sequential: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not self.snapshot_every > 0:
            raise ConfigError("snapshot_every must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}")

    def check(self, grid: GridSpec, f: ReactionFn) -> None:
        if self.scheme == "explicit-euler":
            # h^2/(2N) alone lets u overshoot 1 next to saturated cells; the
            # reaction slope must fit in the same budget to keep values in [0, 1]
            lap = sum(2.0 / h ** 2 for h in grid.spacing)
            limit = 1.0 / (lap + f.lipschitz())
            if self.dt > limit * (1 + 1e-12):
                raise ConfigError(f"dt={self.dt} violates the explicit bound 1/(sum 2/h^2 + |f'|max)={limit:.6g}")
        else:
            limit = 0.5 / f.lipschitz()
            if self.dt > limit * (1 + 1e-12):
                raise ConfigError(f"dt={self.dt} exceeds the reaction bound 0.5/|f'|max={limit}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        keys = {"dt", "horizon", "snapshot_every", "scheme", "boundary", "sequential"}
        alias = {"T": "horizon", "snapshotEvery": "snapshot_every"}
        clean = {}
        for k, v in d.items():
            k = alias.get(k, k)
            if k not in keys:
                raise ConfigError(f"solver: unknown field {k!r}")
            clean[k] = v
        try:
            return cls(**clean)
        except TypeError as exc:
            raise ConfigError(f"solver: {exc}") from exc


def rasterize(U: SetDescriptor, grid: GridSpec) -> GridField:
    """Indicator of U sampled at cell centres, at time 0."""
    return GridField(grid, rasterize_mask(U, grid).mask.bits.astype(float), 0.0)


# -- stencil kernels ----------------------------------------------------------------
# Each kernel writes ``out`` and flags rows holding values outside [-SLACK, 1+SLACK].


def _explicit_1d(u, out, dt, c0, kern, frozen, bad):
    n = u.shape[0]
    bad[0] = 0
    for i in range(n):
        if frozen and (i == 0 or i == n - 1):
            out[i] = u[i]
            continue
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < n - 1 else n - 1
        c = u[i]
        v = c + dt * ((u[im] - 2.0 * c + u[ip]) * c0 + kern(c))
        out[i] = v
        if not (v >= -1e-9 and v <= 1.0 + 1e-9):
            bad[0] = 1


def _explicit_2d(u, out, dt, c0, c1, kern, frozen, bad):
    nx, ny = u.shape
    for i in numba.prange(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        edge_i = i == 0 or i == nx - 1
        flag = 0
        for j in range(ny):
            if frozen and (edge_i or j == 0 or j == ny - 1):
                out[i, j] = u[i, j]
                continue
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            c = u[i, j]
            lap = (u[im, j] - 2.0 * c + u[ip, j]) * c0 + (u[i, jm] - 2.0 * c + u[i, jp]) * c1
            v = c + dt * (lap + kern(c))
            out[i, j] = v
            if not (v >= -1e-9 and v <= 1.0 + 1e-9):
                flag = 1
        bad[i] = flag


def _explicit_3d(u, out, dt, c0, c1, c2, kern, frozen, bad):
    nx, ny, nz = u.shape
    for i in numba.prange(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        flag = 0
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            edge = i == 0 or i == nx - 1 or j == 0 or j == ny - 1
            for k in range(nz):
                if frozen and (edge or k == 0 or k == nz - 1):
                    out[i, j, k] = u[i, j, k]
                    continue
                km = k - 1 if k > 0 else 0
                kp = k + 1 if k < nz - 1 else nz - 1
                c = u[i, j, k]
                lap = ((u[im, j, k] - 2.0 * c + u[ip, j, k]) * c0
                       + (u[i, jm, k] - 2.0 * c + u[i, jp, k]) * c1
                       + (u[i, j, km] - 2.0 * c + u[i, j, kp]) * c2)
                v = c + dt * (lap + kern(c))
                out[i, j, k] = v
                if not (v >= -1e-9 and v <= 1.0 + 1e-9):
                    flag = 1
        bad[i] = flag


def _reaction(u, out, dt, kern, frozen_mask):
    flat_u = u.reshape(-1)
    flat_o = out.reshape(-1)
    fm = frozen_mask.reshape(-1)
    for i in numba.prange(flat_u.shape[0]):
        c = flat_u[i]
        flat_o[i] = c if fm[i] else c + dt * kern(c)


def _thomas_lines(d, sub, cp, m, r, fz, out, bad):
    # increment form: (I - r D2) w = r D2 d, out = d + w, so constants are exact
    lines, n = d.shape
    for line in numba.prange(lines):
        row = d[line]
        o = out[line]
        _line_increment(row, sub, cp, m, r, fz, o)
        flag = 0
        for i in range(n):
            v = row[i] + o[i]
            o[i] = v
            if not (v >= -1e-9 and v <= 1.0 + 1e-9):
                flag = 1
        bad[line] = flag


@numba.njit(cache=True)
def _line_increment(x, sub, cp, m, r, fz, w):
    n = x.shape[0]
    if n == 1:
        w[0] = 0.0
        return
    for i in range(1, n - 1):
        w[i] = r * (x[i - 1] - 2.0 * x[i] + x[i + 1])
    if fz:
        w[0] = 0.0
        w[n - 1] = 0.0
    else:
        w[0] = r * (x[1] - x[0])
        w[n - 1] = r * (x[n - 2] - x[n - 1])
    w[0] = w[0] * m[0]
    for i in range(1, n):
        w[i] = (w[i] - sub[i] * w[i - 1]) * m[i]
    for i in range(n - 2, -1, -1):
        w[i] = w[i] - cp[i] * w[i + 1]


def _imex_2d(u, out, dt, kern, fm, sub0, cp0, m0, r0, sub1, cp1, m1, r1, fz, col, bad):
    # reaction, then rows (axis 1), then columns (axis 0); col is scratch for the columns
    nx, ny = u.shape
    for i in numba.prange(nx):
        o = out[i]
        for j in range(ny):
            c = u[i, j]
            o[j] = c if fm[i, j] else c + dt * kern(c)
        w = np.empty(ny)
        _line_increment(o, sub1, cp1, m1, r1, fz, w)
        for j in range(ny):
            o[j] += w[j]
    for j in numba.prange(ny):
        x = np.empty(nx)
        for i in range(nx):
            x[i] = out[i, j]
        c = col[j]
        _line_increment(x, sub0, cp0, m0, r0, fz, c)
        flag = 0
        for i in range(nx):
            v = x[i] + c[i]
            out[i, j] = u[i, j] if fm[i, j] else v
            if not (v >= -1e-9 and v <= 1.0 + 1e-9):
                flag = 1
        bad[j] = flag


_KERNELS = {}


def _kernel(name: str, parallel: bool):
    key = (name, parallel)
    if key not in _KERNELS:
        py = globals()[name]
        # the on-disk cache is keyed by function, not by flags: cache one variant only
        _KERNELS[key] = numba.njit(py, parallel=parallel, cache=not parallel)
    return _KERNELS[key]


def _factor(n: int, r: float, frozen: bool):
    """Thomas factorisation of ``I - r D2`` with zero-flux or frozen ends."""
    sub = np.full(n, -r)
    diag = np.full(n, 1.0 + 2.0 * r)
    sup = np.full(n, -r)
    sub[0] = 0.0
    sup[-1] = 0.0
    if n == 1:
        diag[0] = 1.0
    elif frozen:
        diag[0] = diag[-1] = 1.0
        sup[0] = 0.0
        sub[-1] = 0.0
    else:
        diag[0] = diag[-1] = 1.0 + r
    cp = np.zeros(n)
    m = np.zeros(n)
    m[0] = 1.0 / diag[0]
    cp[0] = sup[0] * m[0]
    for i in range(1, n):
        m[i] = 1.0 / (diag[i] - sub[i] * cp[i - 1])
        cp[i] = sup[i] * m[i]
    return sub, cp, m


def _frozen_mask(dims) -> np.ndarray:
    fm = np.zeros(dims, dtype=bool)
    for a in range(len(dims)):
        idx = [slice(None)] * len(dims)
        idx[a] = 0
        fm[tuple(idx)] = True
        idx[a] = -1
        fm[tuple(idx)] = True
    return fm


class Stepper:
    """Reusable single-step operator for a fixed grid, reaction and config."""

    def __init__(self, grid: GridSpec, f: ReactionFn, cfg: SolverConfig):
        cfg.check(grid, f)
        configure_threads()
        self.grid, self.f, self.cfg = grid, f, cfg
        self.frozen = cfg.boundary == "dirichlet-frozen"
        # a one-thread pool only adds launch overhead
        self.parallel = not cfg.sequential and numba.get_num_threads() > 1
        self.native = f.kernel is not None
        self._fm = _frozen_mask(grid.dims) if self.frozen else np.zeros(grid.dims, dtype=bool)
        self._factors = {}
        self._col = None

    def _check(self, bad: np.ndarray, values: np.ndarray) -> None:
        if bad.any():
            lo, hi = float(np.nanmin(values)), float(np.nanmax(values))
            raise DivergenceError(f"values left [0, 1]: min={lo:.3e}, max={hi:.3e}"
                                  + ("" if np.all(np.isfinite(values)) else " (non-finite)"))

    def _laplacian_numpy(self, u: np.ndarray) -> np.ndarray:
        lap = np.zeros_like(u)
        for a, h in enumerate(self.grid.spacing):
            p = np.concatenate([np.take(u, [0], axis=a), u, np.take(u, [-1], axis=a)], axis=a)
            n = u.shape[a]
            lap += (np.take(p, range(0, n), axis=a) - 2 * u + np.take(p, range(2, n + 2), axis=a)) / (h * h)
        return lap

    def _explicit(self, u: np.ndarray, dt: float) -> np.ndarray:
        out = np.empty_like(u)
        coef = [1.0 / (h * h) for h in self.grid.spacing]
        nd = u.ndim
        if self.native:
            bad = np.zeros(u.shape[0], dtype=np.int64)
            if nd == 1:
                _kernel("_explicit_1d", False)(u, out, dt, coef[0], self.f.kernel, self.frozen, bad)
            elif nd == 2:
                _kernel("_explicit_2d", self.parallel)(u, out, dt, coef[0], coef[1], self.f.kernel,
                                                       self.frozen, bad)
            else:
                _kernel("_explicit_3d", self.parallel)(u, out, dt, coef[0], coef[1], coef[2],
                                                       self.f.kernel, self.frozen, bad)
        else:
            out = u + dt * (self._laplacian_numpy(u) + self.f(u))
            if self.frozen:
                fm = _frozen_mask(u.shape)
                out[fm] = u[fm]
            bad = np.array([not np.all((out >= -SLACK) & (out <= 1 + SLACK))])
        self._check(bad, out)
        return out

    def _imex(self, u: np.ndarray, dt: float) -> np.ndarray:
        fm = self._fm
        if self.native and u.ndim == 2:
            f0 = self._factor(0, dt)
            f1 = self._factor(1, dt)
            out = np.empty_like(u)
            if self._col is None:
                self._col = np.empty((u.shape[1], u.shape[0]))
            bad = np.zeros(u.shape[1], dtype=np.int64)
            r0, r1 = (dt / (h * h) for h in self.grid.spacing)
            _kernel("_imex_2d", self.parallel)(u, out, dt, self.f.kernel, fm, *f0, r0, *f1, r1,
                                               self.frozen, self._col, bad)
            self._check(bad, out)
            return out
        if self.native:
            star = np.empty_like(u)
            _kernel("_reaction", self.parallel)(u, star, dt, self.f.kernel, fm)
        else:
            star = np.where(fm, u, u + dt * self.f(u))
        cur = star
        for a, h in enumerate(self.grid.spacing):
            n = u.shape[a]
            sub, cp, m = self._factor(a, dt)
            moved = np.moveaxis(cur, a, -1)
            shape = moved.shape
            lines = np.ascontiguousarray(moved.reshape(-1, n))
            out = np.empty_like(lines)
            bad = np.zeros(lines.shape[0], dtype=np.int64)
            _kernel("_thomas_lines", self.parallel)(lines, sub, cp, m, dt / (h * h), self.frozen, out, bad)
            cur = np.moveaxis(out.reshape(shape), -1, a)
            self._check(bad, out)
        if self.frozen:
            # frozen cells on other axes' faces must not drift through the sweeps
            cur = np.where(fm, u, cur)
        return np.ascontiguousarray(cur)

    def _factor(self, axis: int, dt: float):
        key = (axis, dt)
        if key not in self._factors:
            h = self.grid.spacing[axis]
            self._factors[key] = _factor(self.grid.dims[axis], dt / (h * h), self.frozen)
        return self._factors[key]

    def advance(self, u: np.ndarray, dt: float) -> np.ndarray:
        """Raw-array step; the kernels flag NaN as out of range."""
        if not self.native and not np.all(np.isfinite(u)):
            raise DivergenceError("state holds non-finite values")
        return self._explicit(u, dt) if self.cfg.scheme == "explicit-euler" else self._imex(u, dt)

    def __call__(self, state: GridField, dt: float | None = None) -> GridField:
        dt = self.cfg.dt if dt is None else dt
        u = np.ascontiguousarray(state.values, dtype=float)
        if not np.all(np.isfinite(u)):
            raise DivergenceError("state holds non-finite values")
        return state.with_values(self.advance(u, dt), state.time + dt)


def step(state: GridField, f: ReactionFn, cfg: SolverConfig) -> GridField:
    """One time step of length ``cfg.dt``."""
    return Stepper(state.grid, f, cfg)(state)


def run(u0: GridField, f: ReactionFn, cfg: SolverConfig,
        sink: Callable[[GridField], None] | None = None) -> GridField:
    """Advance to ``cfg.horizon``; ``sink`` receives the initial field and one
    snapshot every ``cfg.snapshot_every`` (snapshot times are rounded to steps)."""
    stepper = Stepper(u0.grid, f, cfg)
    n_steps = max(1, int(round(cfg.horizon / cfg.dt)))
    if abs(n_steps * cfg.dt - cfg.horizon) > 1e-9 * cfg.horizon:
        raise ConfigError("horizon must be an integer multiple of dt")
    every = max(1, int(round(cfg.snapshot_every / cfg.dt)))
    t0 = u0.time
    u = np.ascontiguousarray(u0.values, dtype=float)
    if not np.all(np.isfinite(u)):
        raise DivergenceError("initial field holds non-finite values")
    if sink is not None:
        sink(u0)
    for k in range(1, n_steps + 1):
        u = stepper.advance(u, cfg.dt)
        if sink is not None and (k % every == 0 or k == n_steps):
            sink(u0.with_values(u, t0 + k * cfg.dt))
    return u0.with_values(u, t0 + n_steps * cfg.dt)


class SnapshotList(list):
    """In-memory sink: ``run(..., sink=snaps := SnapshotList())``."""

    def __call__(self, field: GridField) -> None:
        self.append(field)

    def at(self, t: float, tol: float = 1e-9) -> GridField:
        for s in self:
            if abs(s.time - t) <= tol:
                return s
        raise KeyError(f"no snapshot at t={t}")


def compare_runs(a: Sequence[GridField], b: Sequence[GridField]) -> float:
    """Most negative value of ``uB - uA`` over all snapshots and cells."""
    if len(a) != len(b):
        raise GridMismatchError("runs hold different numbers of snapshots")
    worst = math.inf
    for sa, sb in zip(a, b):
        if not sa.grid.same_as(sb.grid):
            raise GridMismatchError("snapshots live on different grids")
        if abs(sa.time - sb.time) > 1e-9 * max(1.0, sa.time):
            raise GridMismatchError(f"snapshot times differ: {sa.time} vs {sb.time}")
        worst = min(worst, float(np.min(sb.values - sa.values)))
    return worst


def mass(field: GridField) -> float:
    return float(field.values.sum() * np.prod(field.grid.spacing))


def times(snaps: Iterable[GridField]) -> list[float]:
    return [s.time for s in snaps]
