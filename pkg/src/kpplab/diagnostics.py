"""Quantities measured on solver snapshots: k-Hessians, local planarity,
front profiles, invasion reach, PDE-side direction clouds, truncation errors."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import minimize_scalar

from .errors import DomainError, EmptyLevelError, ParameterError, ScenarioError
from .fronts import FrontFit, FrontProfile
from .geometry.metrics import DirectionSetEstimate
from .geometry.sets import SetDescriptor
from .grid import GridField, GridSpec
from .reaction import ReactionFn, minimal_speed

FLAT_CUTOFF = 1e-3


# -- k-Hessians ----------------------------------------------------------------------


def sigma_k(A: np.ndarray, k: int) -> np.ndarray:
    """Elementary symmetric polynomial of the eigenvalues of ``A[..., N, N]``.

    Read off the characteristic polynomial: Newton's identities on power
    traces for ``k < N``, the determinant for ``k = N``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}]")
    if k == n:
        if n == 1:
            return A[..., 0, 0]
        if n == 2:
            return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        return np.linalg.det(A)
    p = [None]
    P = A
    for j in range(1, k + 1):
        p.append(np.trace(P, axis1=-2, axis2=-1))
        P = P @ A
    e = [np.ones(A.shape[:-2])]
    for j in range(1, k + 1):
        acc = np.zeros(A.shape[:-2])
        for i in range(1, j + 1):
            acc = acc + (-1) ** (i - 1) * e[j - i] * p[i]
        e.append(acc / j)
    return e[k]


def hessian(field: GridField) -> np.ndarray:
    """Centred second differences; shape ``dims + (N, N)`` (edges left at 0)."""
    u = field.values
    n = u.ndim
    H = np.zeros(u.shape + (n, n))
    core = tuple(slice(1, -1) for _ in range(n))

    def shifted(offsets):
        return u[tuple(slice(1 + o, u.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    for a in range(n):
        ha = field.spacing[a]
        e = [0] * n
        e[a] = 1
        m = [-v for v in e]
        H[core + (a, a)] = (shifted(e) - 2 * u[core] + shifted(m)) / (ha * ha)
        for b in range(a + 1, n):
            hb = field.spacing[b]
            pp, pm, mp, mm = ([0] * n for _ in range(4))
            pp[a], pp[b] = 1, 1
            pm[a], pm[b] = 1, -1
            mp[a], mp[b] = -1, 1
            mm[a], mm[b] = -1, -1
            v = (shifted(pp) - shifted(pm) - shifted(mp) + shifted(mm)) / (4 * ha * hb)
            H[core + (a, b)] = v
            H[core + (b, a)] = v
    return H


class SigmaStat(NamedTuple):
    sup_abs: float
    argmax: tuple


def _window_slices(grid: GridSpec, window, margin: int) -> tuple[slice, ...]:
    sl = grid.window_slices(np.asarray(window[0], float), np.asarray(window[1], float))
    for a, s in enumerate(sl):
        if s.stop - s.start <= 0:
            raise ParameterError("window holds no cells")
        if s.start < margin or s.stop > grid.dims[a] - margin:
            raise ParameterError(f"window lies within {margin} cells of the grid boundary")
    return sl


def hessian_sigma(field: GridField, k: int, window, level_band: tuple[float, float] | None = None,
                  min_time: float = 1.0) -> SigmaStat:
    """Sup of ``|sigma_k(D^2 u)|`` over the window (optionally only over cells
    with ``u`` inside ``level_band``) and the cell where it is attained."""
    n = field.ndim
    if not 2 <= k <= n:
        raise ParameterError(f"k must lie in [2, {n}]")
    if field.time < min_time:
        raise ParameterError("second derivatives of the indicator are meaningless before t = 1")
    sl = _window_slices(field.grid, window, 2)
    H = hessian(field)[sl]
    s = np.abs(sigma_k(H, k))
    if level_band is not None:
        u = field.values[sl]
        s = np.where((u >= level_band[0]) & (u <= level_band[1]), s, -np.inf)
    if not np.isfinite(s).any():
        return SigmaStat(0.0, tuple([math.nan] * n))
    idx = np.unravel_index(int(np.argmax(s)), s.shape)
    full = tuple(int(i + w.start) for i, w in zip(idx, sl))
    x = tuple(float(field.grid.axis_coords(a)[full[a]]) for a in range(n))
    return SigmaStat(float(s[idx]), x)


# -- local planarity --------------------------------------------------------------------


class Planarity(NamedTuple):
    defect: float
    direction: np.ndarray
    oscillation: float
    flat: bool


def _ball_cells(grid: GridSpec, x: np.ndarray, radius: float):
    lo, hi = x - radius, x + radius
    if np.any(lo < grid.lower - 1e-12) or np.any(hi > grid.upper + 1e-12):
        raise DomainError("planarity ball leaves the grid")
    sl = grid.window_slices(lo, hi)
    axes = [grid.axis_coords(a)[s] for a, s in enumerate(sl)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    inside = np.linalg.norm(P - x, axis=-1) <= radius + 1e-12
    return sl, P, inside


def planarity_defect(field: GridField, x, radius: float | None = None, degree: int = 14,
                     grads: list[np.ndarray] | None = None) -> Planarity:
    """Distance of ``u`` from a one-dimensional function on the ball ``B(x, radius)``.

    The direction is the principal axis of the structure tensor (mean of
    ``grad u (x) grad u``); ``u`` is then fitted by a Legendre series in
    ``s = (y - x).e`` and the RMS residual is divided by the oscillation of u.
    """
    x = np.asarray(x, dtype=float)
    radius = 10 * min(field.spacing) if radius is None else float(radius)
    sl, P, inside = _ball_cells(field.grid, x, radius)
    if inside.sum() < 2 * degree:
        raise ParameterError("planarity ball holds too few cells")
    u = field.values[sl][inside]
    osc = float(u.max() - u.min())
    n = field.ndim
    if osc < FLAT_CUTOFF:
        return Planarity(0.0, np.full(n, np.nan), osc, True)
    grads = field.gradient() if grads is None else grads
    G = np.stack([g[sl][inside] for g in grads], axis=1)
    J = G.T @ G / len(G)
    w, V = np.linalg.eigh(J)
    e = V[:, -1]
    mean_g = G.mean(axis=0)
    if mean_g @ e > 0:
        e = -e  # point along the direction in which u decreases
    s = (P[inside] - x) @ e / radius
    deg = min(degree, np.unique(np.round(s, 12)).size - 1)  # grid-aligned e gives few distinct s
    coef = legendre.legfit(s, u, deg)
    r = u - legendre.legval(s, coef)
    defect = float(np.sqrt(np.mean(r * r)) / osc)
    return Planarity(min(defect, 1.0), e, osc, False)


# -- profiles along lines -----------------------------------------------------------------


@dataclass
class LineProfile:
    s: np.ndarray
    values: np.ndarray
    origin: np.ndarray
    direction: np.ndarray

    def compare(self, front: FrontProfile) -> "ProfileMatch":
        """Sup distance to ``front(s - a)`` minimised over shifts ``a`` that keep
        the half level inside the segment."""
        L = float(self.s.max())
        osc = float(self.values.max() - self.values.min())

        def err(a):
            return float(np.max(np.abs(self.values - front(self.s - a))))

        grid = np.linspace(-L, L, 401)
        e = [err(a) for a in grid]
        i = int(np.argmin(e))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        res = minimize_scalar(err, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
        shift, dist = (float(res.x), float(res.fun)) if res.fun < e[i] else (float(grid[i]), e[i])
        return ProfileMatch(dist, shift, osc >= FLAT_CUTOFF and dist <= 0.1)


class ProfileMatch(NamedTuple):
    distance: float
    shift: float
    is_front: bool


def extract_profile(field: GridField, x, e, half_length: float, step: float | None = None) -> LineProfile:
    """Values of ``u`` on ``x + s e``, ``|s| <= half_length`` (linear interpolation)."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    step = 0.5 * min(field.spacing) if step is None else step
    m = int(round(half_length / step))
    s = np.linspace(-half_length, half_length, 2 * m + 1)
    pts = x + s[:, None] * e
    g = field.grid
    lo = g.lower + 0.5 * np.asarray(g.spacing)
    hi = g.upper - 0.5 * np.asarray(g.spacing)
    if np.any(pts < lo - 1e-9) or np.any(pts > hi + 1e-9):
        raise DomainError("profile segment leaves the grid")
    return LineProfile(s, field.sample(pts), x, e)


# -- invasion reach -------------------------------------------------------------------------


def level_set_radius(field: GridField, level: float, anchor: SetDescriptor) -> float:
    """Largest ``dist(x, anchor)`` over cells with ``u >= level``."""
    if not 0 < level < 1:
        raise ParameterError("level must lie in (0, 1)")
    sel = field.values >= level
    if not sel.any():
        raise EmptyLevelError(f"no cell reaches level {level}")
    pts = field.grid.centers()[sel]
    return float(np.max(anchor.dist(pts)))


def front_position_1d(field: GridField, level: float = 0.5) -> float:
    """Largest x where a 1D field crosses ``level`` downward (linear interpolation)."""
    if field.ndim != 1:
        raise ParameterError("front_position_1d needs a one-dimensional field")
    u = field.values
    x = field.grid.axis_coords(0)
    above = np.nonzero(u >= level)[0]
    if above.size == 0:
        raise EmptyLevelError(f"no cell reaches level {level}")
    i = int(above[-1])
    if i == len(u) - 1:
        return float(x[-1])
    t = (u[i] - level) / (u[i] - u[i + 1])
    return float(x[i] + t * (x[i + 1] - x[i]))


# -- direction clouds from the PDE -----------------------------------------------------------------


def estimate_E_from_run(snapshots: Sequence[GridField], gradient_threshold: float,
                        window=None, defect_max: float = 0.1, radius: float | None = None,
                        max_points: int = 400, seed: int = 42, min_time: float = 1.0) -> DirectionSetEstimate:
    """Normalised ``-grad u`` at cells where ``|grad u|`` passes the threshold
    and ``u`` is locally planar, weighted by ``|grad u|``, over all snapshots."""
    snaps = [s for s in snapshots if s.time >= min_time]
    if not snaps:
        return DirectionSetEstimate(np.empty((0, snapshots[0].ndim if snapshots else 0)), np.empty(0),
                                    source="pde")
    n = snaps[0].ndim
    rng = np.random.default_rng(seed)
    dirs, weights = [], []
    for snap in snaps:
        grads = snap.gradient()
        G = np.stack(grads, axis=-1)
        mag = np.linalg.norm(G, axis=-1)
        sel = mag >= gradient_threshold
        r = 10 * min(snap.spacing) if radius is None else radius
        # planarity balls must fit in the grid
        C = snap.grid.centers()
        inner = np.all((C - r >= snap.grid.lower) & (C + r <= snap.grid.upper), axis=-1)
        sel &= inner
        if window is not None:
            lo, hi = np.asarray(window[0], float), np.asarray(window[1], float)
            sel &= np.all((C >= lo) & (C <= hi), axis=-1)
        idx = np.argwhere(sel)
        if len(idx) == 0:
            continue
        if len(idx) > max_points:
            idx = idx[np.sort(rng.choice(len(idx), max_points, replace=False))]
        for ii in map(tuple, idx):
            p = planarity_defect(snap, C[ii], r, grads=grads)
            if p.flat or p.defect > defect_max:
                continue
            g = G[ii]
            dirs.append(-g / mag[ii])
            weights.append(mag[ii])
    D = np.array(dirs) if dirs else np.empty((0, n))
    return DirectionSetEstimate(D, np.array(weights), source="pde",
                                meta={"snapshots": len(snaps), "threshold": gradient_threshold})


# -- truncation ------------------------------------------------------------------------------------


class TruncationReport(NamedTuple):
    error: float
    gradient_error: float
    truncation_radius: float
    window_radius: float
    tau: float


def _check_cone_condition(U: SetDescriptor, sigma: float, cstar: float, L: float, grid: GridSpec) -> None:
    slope = sigma / (2 * cstar)
    pts = grid.centers().reshape(-1, grid.ndim)
    xp = np.linalg.norm(pts[:, :-1], axis=1)
    far = xp > L
    inside = np.asarray(U.contains(pts[far]), dtype=bool)
    bad = pts[far][inside][:, -1] > slope * xp[far][inside] + 1e-9
    if np.any(bad):
        raise ScenarioError("U leaves the cone {x_N <= sigma/(2c*)|x'|} outside the cylinder "
                            f"of radius {L}: {int(bad.sum())} sampled violations")


def truncation_error(U: SetDescriptor, sigma: float, tau: float, grid: GridSpec, f: ReactionFn,
                     cfg, L: float = 0.0, truncation_radius: float | None = None) -> TruncationReport:
    """Sup of ``|u - u'|`` at time ``tau`` over ``{|x'| <= sigma tau, x_N >= 0}``,
    where ``u'`` starts from U cut to the cylinder ``|x'| <= 3 sigma tau``."""
    from .solver import SolverConfig, rasterize, run

    if tau < 1:
        raise ParameterError("tau must be >= 1")
    cstar = minimal_speed(f)
    _check_cone_condition(U, sigma, cstar, L, grid)
    R = 3 * sigma * tau if truncation_radius is None else truncation_radius
    u0 = rasterize(U, grid)
    xp = np.linalg.norm(grid.centers()[..., :-1], axis=-1)
    cut = u0.with_values(np.where(xp <= R, u0.values, 0.0))
    run_cfg = replace(cfg, horizon=tau, snapshot_every=tau) if isinstance(cfg, SolverConfig) else cfg
    a = run(u0, f, run_cfg)
    b = run(cut, f, run_cfg)
    xn = grid.centers()[..., -1]
    sel = (xp <= sigma * tau) & (xn >= 0)
    if not sel.any():
        raise ParameterError("half-cylinder holds no cells")
    err = float(np.max(np.abs(a.values - b.values)[sel]))
    ga, gb = np.stack(a.gradient(), -1), np.stack(b.gradient(), -1)
    gerr = float(np.max(np.linalg.norm(ga - gb, axis=-1)[sel]))
    return TruncationReport(err, gerr, float(R), float(sigma * tau), float(tau))


# -- report ----------------------------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    speed_fit: FrontFit | None = None
    sigma_stats: dict[int, list[tuple[float, float, tuple]]] = field(default_factory=dict)
    planarity: list[tuple[float, tuple, float]] = field(default_factory=list)
    direction_cloud: DirectionSetEstimate | None = None
    series: dict[str, list[tuple[float, float, tuple]]] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)

    def add_series(self, name: str, t: float, value: float, where=()) -> None:
        self.series.setdefault(name, []).append((float(t), float(value), tuple(float(v) for v in where)))

    def validate(self) -> None:
        def finite(v):
            return v is None or math.isfinite(v)

        for k, rows in self.sigma_stats.items():
            if k < 2:
                raise ParameterError("sigma statistics hold k >= 2 only")
            if not all(finite(v) for _, v, _ in rows):
                raise ParameterError(f"non-finite sigma_{k} entry")
        if not all(finite(d) for _, _, d in self.planarity):
            raise ParameterError("non-finite planarity entry")
        if self.speed_fit is not None and not all(math.isfinite(v) for v in self.speed_fit):
            raise ParameterError("non-finite speed fit")

    def to_dict(self) -> dict:
        d = {
            "speed_fit": self.speed_fit._asdict() if self.speed_fit else None,
            "sigma_stats": {str(k): [{"t": t, "value": v, "argmax": list(x)} for t, v, x in rows]
                            for k, rows in self.sigma_stats.items()},
            "planarity": [{"t": t, "point": list(p), "defect": d} for t, p, d in self.planarity],
            "direction_cloud": None,
            "series": {k: [{"t": t, "value": v, "argmax": list(x)} for t, v, x in rows]
                       for k, rows in self.series.items()},
            "values": self.values,
        }
        if self.direction_cloud is not None:
            d["direction_cloud"] = {
                "directions": self.direction_cloud.directions.tolist(),
                "weights": self.direction_cloud.weights.tolist(),
                "summary": self.direction_cloud.summary(),
            }
        return d

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_jsonable))
        return path

    def to_csv(self, directory) -> list[Path]:
        """One CSV per time series: columns t, value, argmax coordinates."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tables = {f"sigma{k}": rows for k, rows in self.sigma_stats.items()}
        tables.update(self.series)
        if self.planarity:
            tables["planarity"] = [(t, d, p) for t, p, d in self.planarity]
        out = []
        for name, rows in tables.items():
            dim = max((len(x) for _, _, x in rows), default=0)
            p = directory / f"{name}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "value"] + [f"x{i + 1}" for i in range(dim)])
                for t, v, x in rows:
                    w.writerow([t, v] + list(x))
            out.append(p)
        return out


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")
