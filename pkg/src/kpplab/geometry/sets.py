"""Set descriptors for the initial support U and their pointwise queries.

Every descriptor answers ``contains``, ``dist`` (vectorised over rows of an
``(M, N)`` array) and ``projections`` (all nearest points of the closure).
Sets are closed: boundary points belong to U.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial import cKDTree

from ..errors import DomainError, ParameterError
from ..grid import GridMask, GridSpec
from .edt import edt

_EPS = 1e-12


def _rows(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _out(v: np.ndarray, single: bool):
    return float(v[0]) if single else v


def _dedupe(points: list[np.ndarray], tol: float) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > tol for q in out):
            out.append(p)
    return out


@dataclass(frozen=True)
class ProjectionSet:
    points: np.ndarray  # (K, N)
    distance: float
    tolerance: float

    def __len__(self):
        return len(self.points)

    def directions(self, x) -> np.ndarray:
        """Unit vectors ``(x - xi)/|x - xi|`` for every projection ``xi``."""
        d = np.asarray(x, float)[None, :] - self.points
        return d / np.linalg.norm(d, axis=1, keepdims=True)


class SetDescriptor:
    kind: str = "abstract"
    dim: int

    # -- queries -------------------------------------------------------------
    def contains(self, x):
        raise NotImplementedError

    def dist(self, x):
        raise NotImplementedError

    def _project(self, x: np.ndarray, tol: float) -> list[np.ndarray]:
        raise NotImplementedError

    def projections(self, x, tol: float = 1e-9) -> ProjectionSet:
        x = np.asarray(x, dtype=float)
        if self.is_empty:
            raise DomainError("projection onto an empty set")
        d = self.dist(x)
        if d <= 0.0:
            raise DomainError("point lies in the closure of U")
        pts = _dedupe(self._project(x, tol), max(tol, 1e-9 * max(1.0, d)))
        return ProjectionSet(np.array(pts), float(d), tol)

    @property
    def is_empty(self) -> bool:
        return False

    @property
    def is_singleton(self) -> bool:
        return False

    def erode(self, delta: float, window=None, h: float | None = None) -> "SetDescriptor":
        if delta <= 0:
            raise ParameterError("erosion radius must be positive")
        if window is None:
            raise ParameterError(f"erosion of a {self.kind} descriptor needs a raster window")
        grid = GridSpec.from_box(window[0], window[1], h if h is not None else _default_h(window))
        return rasterize_mask(self, grid).erode(delta)

    def boundary_samples(self, window, h: float) -> np.ndarray:
        """Boundary points inside ``window``: projections of exterior lattice points."""
        pts = lattice_points(window, h)
        d = self.dist(pts)
        ext = pts[d > 0]
        if ext.shape[0] == 0:
            return np.empty((0, self.dim))
        b = self._nearest_rows(ext)
        lo, hi = np.asarray(window[0], float), np.asarray(window[1], float)
        keep = np.all((b >= lo - _EPS) & (b <= hi + _EPS), axis=1)
        return b[keep]

    def _nearest_rows(self, X: np.ndarray) -> np.ndarray:
        """One nearest point of U per row of ``X`` (rows outside U)."""
        out = []
        for x in X:
            out.extend(self._project(x, 1e-9))
        return np.array(out).reshape(-1, self.dim)

    def sample_points(self, window, h: float) -> np.ndarray:
        """Lattice points of ``window`` inside U plus boundary samples."""
        pts = lattice_points(window, h)
        inside = pts[self.contains(pts)]
        return np.concatenate([inside, self.boundary_samples(window, h)], axis=0)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _default_h(window) -> float:
    lo, hi = np.asarray(window[0], float), np.asarray(window[1], float)
    return float(np.max(hi - lo) / 400.0)


def lattice_points(window, h: float) -> np.ndarray:
    lo, hi = np.asarray(window[0], float), np.asarray(window[1], float)
    axes = [np.linspace(l, u, max(2, int(round((u - l) / h)) + 1)) for l, u in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


# ---------------------------------------------------------------------------


class EmptySet(SetDescriptor):
    kind = "empty"

    def __init__(self, dim: int):
        self.dim = int(dim)

    @property
    def is_empty(self) -> bool:
        return True

    def contains(self, x):
        x, single = _rows(x)
        r = np.zeros(len(x), dtype=bool)
        return bool(r[0]) if single else r

    def dist(self, x):
        x, single = _rows(x)
        return _out(np.full(len(x), np.inf), single)

    def erode(self, delta, window=None, h=None):
        return self

    def sample_points(self, window, h):
        return np.empty((0, self.dim))

    def to_dict(self):
        return {"kind": "empty", "dim": self.dim}


class HalfSpace(SetDescriptor):
    """``{x : normal . x <= offset}`` with the normal stored at unit length."""

    kind = "half-space"

    def __init__(self, normal, offset: float = 0.0):
        n = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ParameterError("half-space normal must be nonzero")
        self.normal = n / norm
        self.offset = float(offset) / norm
        self.dim = n.size

    def signed(self, x):
        x, _ = _rows(x)
        return x @ self.normal - self.offset

    def contains(self, x):
        x, single = _rows(x)
        r = x @ self.normal - self.offset <= _EPS
        return bool(r[0]) if single else r

    def dist(self, x):
        x, single = _rows(x)
        return _out(np.maximum(x @ self.normal - self.offset, 0.0), single)

    def _project(self, x, tol):
        return [x - (x @ self.normal - self.offset) * self.normal]

    def _nearest_rows(self, X):
        return X - (X @ self.normal - self.offset)[:, None] * self.normal

    def erode(self, delta, window=None, h=None):
        if delta <= 0:
            raise ParameterError("erosion radius must be positive")
        return HalfSpace(self.normal, self.offset - delta)

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "normal": self.normal.tolist(), "offset": self.offset}


class Ball(SetDescriptor):
    kind = "ball"

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius < 0:
            raise ParameterError("radius must be nonnegative")
        self.dim = self.center.size

    @property
    def is_singleton(self):
        return self.radius == 0.0

    def contains(self, x):
        x, single = _rows(x)
        r = np.linalg.norm(x - self.center, axis=1) <= self.radius + _EPS
        return bool(r[0]) if single else r

    def dist(self, x):
        x, single = _rows(x)
        return _out(np.maximum(np.linalg.norm(x - self.center, axis=1) - self.radius, 0.0), single)

    def _project(self, x, tol):
        d = x - self.center
        return [self.center + self.radius * d / np.linalg.norm(d)]

    def _nearest_rows(self, X):
        d = X - self.center
        return self.center + self.radius * d / np.linalg.norm(d, axis=1, keepdims=True)

    def erode(self, delta, window=None, h=None):
        if delta <= 0:
            raise ParameterError("erosion radius must be positive")
        if self.radius < delta:
            return EmptySet(self.dim)
        return Ball(self.center, self.radius - delta)

    def boundary_samples(self, window, h):
        n = max(16, int(math.ceil(2 * math.pi * self.radius / h)))
        if self.dim == 1:
            dirs = np.array([[-1.0], [1.0]])
        elif self.dim == 2:
            a = np.linspace(0, 2 * math.pi, n, endpoint=False)
            dirs = np.stack([np.cos(a), np.sin(a)], axis=1)
        else:
            dirs = fibonacci_sphere(max(64, n * n // 4), self.dim)
        b = self.center + self.radius * dirs
        lo, hi = np.asarray(window[0], float), np.asarray(window[1], float)
        return b[np.all((b >= lo - _EPS) & (b <= hi + _EPS), axis=1)]

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "center": self.center.tolist(), "radius": self.radius}


class ConvexPolytope(SetDescriptor):
    """Intersection of half-spaces; exact projection by active-set enumeration."""

    kind = "convex-polytope"

    def __init__(self, halfspaces: Sequence[HalfSpace]):
        if not halfspaces:
            raise ParameterError("polytope needs at least one half-space")
        self.halfspaces = list(halfspaces)
        self.dim = self.halfspaces[0].dim
        self.A = np.array([hs.normal for hs in self.halfspaces])
        self.b = np.array([hs.offset for hs in self.halfspaces])
        self._ops = self._active_set_operators()
        self._empty = None

    @classmethod
    def box(cls, lower, upper) -> "ConvexPolytope":
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        hs = []
        for a in range(lower.size):
            e = np.zeros(lower.size)
            e[a] = 1.0
            hs.append(HalfSpace(e, upper[a]))
            hs.append(HalfSpace(-e, -lower[a]))
        return cls(hs)

    def _active_set_operators(self):
        ops = []
        m = len(self.halfspaces)
        for k in range(1, min(self.dim, m) + 1):
            for S in itertools.combinations(range(m), k):
                As = self.A[list(S)]
                G = As @ As.T
                if np.linalg.matrix_rank(G) < k:
                    continue
                Ginv = np.linalg.inv(G)
                ops.append((As, self.b[list(S)], Ginv))
        return ops

    @property
    def is_empty(self) -> bool:
        if self._empty is None:
            from scipy.optimize import linprog

            res = linprog(np.zeros(self.dim), A_ub=self.A, b_ub=self.b,
                          bounds=[(None, None)] * self.dim, method="highs")
            self._empty = res.status == 2
        return self._empty

    def contains(self, x):
        x, single = _rows(x)
        r = np.all(x @ self.A.T - self.b <= _EPS * (1 + np.abs(self.b)), axis=1)
        return bool(r[0]) if single else r

    def _candidates(self, x: np.ndarray):
        for As, bs, Ginv in self._ops:
            lam = (x @ As.T - bs) @ Ginv
            yield x - lam @ As

    def _feasible(self, y):
        return np.all(y @ self.A.T - self.b <= 1e-9 * (1 + np.abs(self.b)), axis=1)

    def dist(self, x):
        x, single = _rows(x)
        best = np.where(self.contains(x), 0.0, np.inf)
        for y in self._candidates(x):
            d = np.linalg.norm(x - y, axis=1)
            best = np.where(self._feasible(y), np.minimum(best, d), best)
        return _out(best, single)

    def _nearest_rows(self, X):
        best = np.full(len(X), np.inf)
        out = np.array(X, dtype=float)
        for y in self._candidates(X):
            d = np.where(self._feasible(y), np.linalg.norm(X - y, axis=1), np.inf)
            better = d < best
            best[better] = d[better]
            out[better] = y[better]
        return out

    def _project(self, x, tol):
        x2 = x[None, :]
        cands = []
        for y in self._candidates(x2):
            if self._feasible(y)[0]:
                cands.append(y[0])
        d = np.array([np.linalg.norm(x - c) for c in cands])
        return [c for c, di in zip(cands, d) if di <= d.min() + tol]

    def erode(self, delta, window=None, h=None):
        if delta <= 0:
            raise ParameterError("erosion radius must be positive")
        return ConvexPolytope([HalfSpace(hs.normal, hs.offset - delta) for hs in self.halfspaces])

    def to_dict(self):
        return {
            "kind": self.kind,
            "dim": self.dim,
            "halfspaces": [{"normal": hs.normal.tolist(), "offset": hs.offset} for hs in self.halfspaces],
        }


class Union(SetDescriptor):
    kind = "union"

    def __init__(self, parts: Sequence[SetDescriptor]):
        parts = [p for p in parts if not p.is_empty]
        if not parts:
            raise ParameterError("union of empty sets; use EmptySet")
        self.parts = list(parts)
        self.dim = self.parts[0].dim

    def contains(self, x):
        x, single = _rows(x)
        r = np.zeros(len(x), dtype=bool)
        for p in self.parts:
            r |= p.contains(x)
        return bool(r[0]) if single else r

    def dist(self, x):
        x, single = _rows(x)
        d = np.full(len(x), np.inf)
        for p in self.parts:
            d = np.minimum(d, p.dist(x))
        return _out(d, single)

    def _project(self, x, tol):
        dists = [p.dist(x) for p in self.parts]
        dmin = min(dists)
        out = []
        for p, d in zip(self.parts, dists):
            if d <= dmin + tol:
                out.extend(q for q in p._project(x, tol) if abs(np.linalg.norm(x - q) - dmin) <= tol)
        return out

    def _nearest_rows(self, X):
        best = np.full(len(X), np.inf)
        out = np.array(X, dtype=float)
        for p in self.parts:
            d = p.dist(X)
            better = d < best
            if better.any():
                out[better] = p._nearest_rows(X[better])
                best[better] = d[better]
        return out

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "parts": [p.to_dict() for p in self.parts]}


class VShape(Union):
    """``{x : x_2 <= beta |x_1|}``, constant in the remaining coordinates."""

    kind = "v-shape"

    def __init__(self, beta: float, dim: int = 2):
        if beta < 0:
            raise ParameterError("beta must be >= 0")
        if dim < 2:
            raise ParameterError("v-shape needs dim >= 2")
        self.beta = float(beta)
        nr = np.zeros(dim)
        nr[0], nr[1] = -beta, 1.0
        nl = np.zeros(dim)
        nl[0], nl[1] = beta, 1.0
        super().__init__([HalfSpace(nr, 0.0), HalfSpace(nl, 0.0)])

    @property
    def alpha(self) -> float:
        return math.atan(self.beta)

    def contains(self, x):
        x, single = _rows(x)
        r = x[:, 1] <= self.beta * np.abs(x[:, 0]) + _EPS
        return bool(r[0]) if single else r

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "beta": self.beta}


class Subgraph(SetDescriptor):
    """``{(x', x_N) : x_N <= gamma(x')}``.

    ``gamma`` maps an ``(M, N-1)`` array (``(M,)`` when N = 2) to ``(M,)``.
    Distances minimise ``|x'-y'|^2 + (x_N - gamma(y'))_+^2`` over
    ``|y' - x'| <= (x_N - gamma(x')) (1 + M)``, which contains every minimiser.
    """

    kind = "subgraph"

    def __init__(self, gamma: Callable, dim: int = 2, expr: str | None = None,
                 lipschitz_like: float = 0.0, samples: int = 4001):
        self.gamma = gamma
        self.dim = int(dim)
        self.expr = expr
        self.M = float(lipschitz_like)
        self.samples = int(samples)

    @classmethod
    def from_expr(cls, expr: str, dim: int = 2, **kw) -> "Subgraph":
        return cls(compile_gamma(expr, dim), dim=dim, expr=expr, **kw)

    def g(self, xp):
        xp = np.asarray(xp, dtype=float)
        if self.dim == 2:
            return np.asarray(self.gamma(xp.reshape(-1)), dtype=float)
        return np.asarray(self.gamma(xp.reshape(-1, self.dim - 1)), dtype=float)

    def contains(self, x):
        x, single = _rows(x)
        xp = x[:, 0] if self.dim == 2 else x[:, :-1]
        r = x[:, -1] <= self.g(xp) + _EPS
        return bool(r[0]) if single else r

    def _objective(self, x: np.ndarray):
        xp, xn = x[:-1], x[-1]

        def obj(yp):
            yp = np.atleast_2d(yp)
            h = np.maximum(xn - self.g(yp), 0.0)
            return ((yp - xp) ** 2).sum(axis=1) + h * h

        return obj

    def _local_minima(self, x: np.ndarray):
        """(value, y') pairs of refined local minima of the squared distance."""
        xp, xn = x[:-1], x[-1]
        d0 = xn - float(self.g(xp)[0])
        if d0 <= 0:
            return [(0.0, xp.copy())], 0.0
        radius = d0 * (1.0 + self.M)
        obj = self._objective(x)
        if self.dim == 2:
            ys = np.linspace(xp[0] - radius, xp[0] + radius, self.samples)
            vals = obj(ys[:, None])
            step = ys[1] - ys[0]
            idx = [i for i in range(len(ys))
                   if (i == 0 or vals[i] <= vals[i - 1]) and (i == len(ys) - 1 or vals[i] <= vals[i + 1])]
            vmin = vals.min()
            idx = [i for i in idx if vals[i] <= vmin + 4 * step * (radius + step) + 1e-9]
            out = []
            for i in idx:
                lo, hi = ys[i] - step, ys[i] + step
                res = minimize_scalar(lambda t: float(obj(np.array([[t]]))[0]), bounds=(lo, hi),
                                      method="bounded", options={"xatol": 1e-10 * max(1.0, radius)})
                cand = (float(res.fun), np.array([res.x])) if res.fun <= vals[i] else (float(vals[i]), np.array([ys[i]]))
                out.append(cand)
            return out, d0
        # N >= 3: polar sampling of the (N-1)-disc, Nelder-Mead refinement
        k = self.dim - 1
        n = int(max(41, math.sqrt(self.samples) * 2))
        axes = [np.linspace(-radius, radius, n)] * k
        Y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k) + xp
        keep = np.linalg.norm(Y - xp, axis=1) <= radius + 1e-12
        Y = Y[keep]
        vals = obj(Y)
        order = np.argsort(vals)[:8]
        out = []
        for i in order:
            res = minimize(lambda y: float(obj(y[None, :])[0]), Y[i], method="Nelder-Mead",
                           options={"xatol": 1e-9 * max(1.0, radius), "fatol": 1e-14, "maxiter": 4000})
            out.append((float(res.fun), np.asarray(res.x)))
        return out, d0

    def dist(self, x):
        x, single = _rows(x)
        out = np.empty(len(x))
        for i, xi in enumerate(x):
            mins, d0 = self._local_minima(xi)
            out[i] = 0.0 if d0 <= 0 else math.sqrt(max(min(v for v, _ in mins), 0.0))
        return _out(out, single)

    def _point(self, x, yp):
        gy = float(self.g(yp)[0])
        return np.concatenate([yp, [min(x[-1], gy)]])

    def _project(self, x, tol):
        mins, d0 = self._local_minima(x)
        best = math.sqrt(max(min(v for v, _ in mins), 0.0))
        out = []
        for v, yp in mins:
            if abs(math.sqrt(max(v, 0.0)) - best) <= tol:
                out.append(self._point(x, yp))
        return out

    def to_dict(self):
        if self.expr is None:
            raise ParameterError("subgraph built from a Python callable cannot be serialised")
        d = {"kind": self.kind, "dim": self.dim, "gamma": self.expr}
        if self.M:
            d["M"] = self.M
        return d


class Raster(SetDescriptor):
    """Set of cell centres of a :class:`GridMask`."""

    kind = "raster"

    def __init__(self, mask: GridMask, source: str | None = None):
        self.mask = mask
        self.dim = mask.grid.ndim
        self.source = source
        self._tree = None

    @property
    def grid(self) -> GridSpec:
        return self.mask.grid

    @property
    def is_empty(self):
        return not bool(self.mask.bits.any())

    @property
    def is_singleton(self):
        return int(self.mask.bits.sum()) == 1

    @property
    def tolerance(self) -> float:
        return float(max(self.grid.spacing) * math.sqrt(self.dim))

    def set_centers(self) -> np.ndarray:
        return self.grid.centers()[self.mask.bits]

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.set_centers())
        return self._tree

    def contains(self, x):
        x, single = _rows(x)
        idx = np.floor((x - self.grid.lower) / np.asarray(self.grid.spacing)).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < np.asarray(self.grid.dims)), axis=1)
        r = np.zeros(len(x), dtype=bool)
        if ok.any():
            r[ok] = self.mask.bits[tuple(idx[ok].T)]
        return bool(r[0]) if single else r

    def dist(self, x):
        x, single = _rows(x)
        if self.is_empty:
            return _out(np.full(len(x), np.inf), single)
        d, _ = self.tree.query(x)
        return _out(np.where(self.contains(x), 0.0, d), single)

    def grid_dist(self) -> np.ndarray:
        """Exact EDT of the mask evaluated at every cell centre."""
        return edt(self.mask.bits, self.grid.spacing)

    def _nearest_rows(self, X):
        _, i = self.tree.query(X)
        return self.tree.data[i]

    def _project(self, x, tol):
        d, _ = self.tree.query(x)
        idx = self.tree.query_ball_point(x, d + tol)
        c = self.tree.data[idx]
        return [p for p in c if np.linalg.norm(x - p) <= d + tol]

    def erode(self, delta, window=None, h=None):
        if delta <= 0:
            raise ParameterError("erosion radius must be positive")
        comp = ~self.mask.bits
        half = 0.5 * min(self.grid.spacing)
        # boundary sits half a cell beyond the nearest complement centre
        dcomp = edt(comp, self.grid.spacing) - half
        bits = self.mask.bits & (dcomp >= delta - 1e-12)
        return Raster(GridMask(self.grid, bits))

    def sample_points(self, window, h=None):
        c = self.set_centers()
        lo, hi = np.asarray(window[0], float), np.asarray(window[1], float)
        return c[np.all((c >= lo) & (c <= hi), axis=1)]

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.source is not None:
            d["path"] = self.source
        return d


# ---------------------------------------------------------------------------


def rasterize_mask(U: SetDescriptor, grid: GridSpec) -> Raster:
    """Raster of ``U``: a cell is set iff its centre belongs to U."""
    pts = grid.centers().reshape(-1, grid.ndim)
    bits = np.asarray(U.contains(pts), dtype=bool).reshape(grid.dims)
    return Raster(GridMask(grid, bits))


def fibonacci_sphere(n: int, dim: int = 3) -> np.ndarray:
    if dim != 3:
        raise ParameterError("fibonacci net is defined for the 2-sphere")
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = math.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


_GAMMA_NAMESPACE = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "arctan", "minimum",
                 "maximum", "where", "pi", "power", "sign", "floor")
}


def compile_gamma(expr: str, dim: int = 2) -> Callable:
    """Turn an expression in ``x`` (N=2) or ``x1..x{N-1}``/``r`` into a vectorised map."""
    code = compile(expr, "<gamma>", "eval")
    for name in code.co_names:
        if name not in _GAMMA_NAMESPACE and name not in {"x", "r"} and not name.startswith("x"):
            raise ParameterError(f"gamma expression uses unknown name {name!r}")

    def gamma(xp):
        xp = np.asarray(xp, dtype=float)
        env = dict(_GAMMA_NAMESPACE)
        if dim == 2:
            env["x"] = xp
            env["r"] = np.abs(xp)
        else:
            for k in range(dim - 1):
                env[f"x{k + 1}"] = xp[:, k]
            env["r"] = np.linalg.norm(xp, axis=1)
        val = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(val, dtype=float), xp.shape[:1]).copy()

    return gamma


def box_window(lower, upper):
    return (np.asarray(lower, float), np.asarray(upper, float))
