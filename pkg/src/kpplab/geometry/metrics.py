"""Geometric functionals of a set U: Hausdorff distance, opening function,
distance level sets, direction clouds, vanishing-global-mean diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from ..errors import DomainError, ParameterError
from .edt import edt
from .sets import (
    Ball,
    ConvexPolytope,
    Raster,
    SetDescriptor,
    Union,
    _default_h,
    fibonacci_sphere,
)


def dist(U: SetDescriptor, x):
    """Euclidean distance to U (``inf`` for the empty set)."""
    return U.dist(x)


def projections(U: SetDescriptor, x, tol: float = 1e-9):
    return U.projections(x, tol)


def erode(U: SetDescriptor, delta: float, window=None, h: float | None = None) -> SetDescriptor:
    """Positive-distance interior ``{x in U : dist(x, boundary) >= delta}``."""
    return U.erode(delta, window=window, h=h)


# -- Hausdorff ----------------------------------------------------------------


class HausdorffEstimate(NamedTuple):
    value: float
    window: tuple
    method: str

    def __float__(self):
        return float(self.value)


def _directed(A: SetDescriptor, B: SetDescriptor, window, h) -> float:
    pts = A.sample_points(window, h)
    if pts.shape[0] == 0:
        return 0.0
    return float(np.max(B.dist(pts)))


def _same_set(A: SetDescriptor, B: SetDescriptor) -> bool:
    if A is B:
        return True
    if isinstance(A, Raster) or isinstance(B, Raster):
        return False
    try:
        return A.to_dict() == B.to_dict()
    except NotImplementedError:
        return False


def hausdorff(A: SetDescriptor, B: SetDescriptor, window, h: float | None = None) -> HausdorffEstimate:
    """Hausdorff distance restricted to ``window = (lower, upper)``.

    Rasters on a shared grid use distance transforms; otherwise both sets are
    densely sampled (lattice plus boundary points) and exact distances are used.
    """
    window = (np.asarray(window[0], float), np.asarray(window[1], float))
    if A.is_empty and B.is_empty:
        return HausdorffEstimate(0.0, window, "convention")
    if A.is_empty or B.is_empty:
        return HausdorffEstimate(math.inf, window, "convention")
    if _same_set(A, B):
        return HausdorffEstimate(0.0, window, "identity")
    if isinstance(A, Raster) and isinstance(B, Raster) and A.grid.same_as(B.grid):
        sl = A.grid.window_slices(*window)
        da = edt(A.mask.bits, A.grid.spacing)[sl]
        db = edt(B.mask.bits, B.grid.spacing)[sl]
        a_bits, b_bits = A.mask.bits[sl], B.mask.bits[sl]
        ab = float(db[a_bits].max()) if a_bits.any() else 0.0
        ba = float(da[b_bits].max()) if b_bits.any() else 0.0
        return HausdorffEstimate(max(ab, ba), window, "edt")
    h = _default_h(window) if h is None else h
    val = max(_directed(A, B, window, h), _directed(B, A, window, h))
    return HausdorffEstimate(val, window, "sampling")


# -- opening function ----------------------------------------------------------


@dataclass(frozen=True)
class OpeningSampler:
    """Sampling plan for the opening supremum.

    Directions from each projection ``xi`` are tested with rays ``xi + r d``
    over log-spaced radii ``r in [r_min, r_max] * scale``; the cosine only
    depends on ``d`` so a direction counts once any radius lands in U.
    """

    angles: int = 720
    shells: int = 96
    r_min: float = 1e-4
    r_max: float = 1e7
    refine_iters: int = 20
    seed: int = 42


def _sphere_dirs(n: int, dim: int, rng) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        a = (np.arange(n) + rng.uniform(0, 1, n)) * (2 * math.pi / n)
        a = np.concatenate([a, np.arange(n) * (2 * math.pi / n)])
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    return fibonacci_sphere(max(n * n // 16, 256))


def _tangent_basis(e: np.ndarray) -> np.ndarray:
    # orthonormal basis of e-perp
    q, _ = np.linalg.qr(np.column_stack([e, np.eye(e.size)]))
    return q[:, 1:e.size].T


class _RayOracle:
    def __init__(self, U: SetDescriptor, xi: np.ndarray, radii: np.ndarray):
        self.U, self.xi, self.radii = U, xi, radii

    def feasible(self, dirs: np.ndarray) -> np.ndarray:
        y = self.xi[None, None, :] + self.radii[None, :, None] * dirs[:, None, :]
        inside = np.asarray(self.U.contains(y.reshape(-1, self.xi.size))).reshape(len(dirs), len(self.radii))
        return inside.any(axis=1)


def _opening_at_projection(U, x, xi, sampler: OpeningSampler, extra_targets, rng) -> float:
    e = (x - xi) / np.linalg.norm(x - xi)
    scale = max(1.0, float(np.linalg.norm(x - xi)))
    radii = np.geomspace(sampler.r_min * scale, sampler.r_max * scale, sampler.shells)
    oracle = _RayOracle(U, xi, radii)
    dim = xi.size
    dirs = [_sphere_dirs(sampler.angles, dim, rng)]
    T = _tangent_basis(e) if dim > 1 else np.empty((0, dim))
    dirs.append(T)
    dirs.append(-T)
    for y in extra_targets:
        v = y - xi
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            dirs.append((v / nv)[None, :])
    D = np.concatenate(dirs, axis=0)
    best = -math.inf
    ok = oracle.feasible(D)
    # direct candidates: the targets themselves are points of U
    for y in extra_targets:
        v = y - xi
        nv = np.linalg.norm(v)
        if nv > 1e-12 and U.contains(y):
            best = max(best, float(e @ v / nv))
    if ok.any():
        cos = D[ok] @ e
        k = int(np.argmax(cos))
        best = max(best, float(cos[k]))
        d_best = D[ok][k]
    else:
        return best
    if dim == 1:
        return best
    # local hill climbing on the sphere around the best direction
    step = 2 * math.pi / sampler.angles
    for _ in range(sampler.refine_iters):
        Tb = _tangent_basis(d_best)
        cand = []
        for t in Tb:
            for s in (step, -step):
                c = math.cos(s) * d_best + math.sin(s) * t
                cand.append(c / np.linalg.norm(c))
        C = np.array(cand)
        fe = oracle.feasible(C)
        if fe.any():
            cc = C[fe] @ e
            j = int(np.argmax(cc))
            if cc[j] > best:
                best = float(cc[j])
                d_best = C[fe][j]
                continue
        step *= 0.5
    return best


def opening(U: SetDescriptor, x, sampler: OpeningSampler | None = None) -> float:
    """Sampled supremum over projections xi and points y of U of the cosine
    between ``x - xi`` and ``y - xi``; ``-inf`` for empty or singleton U."""
    sampler = sampler or OpeningSampler()
    if U.is_empty or U.is_singleton:
        return -math.inf
    x = np.asarray(x, dtype=float)
    P = U.projections(x)
    rng = np.random.default_rng(sampler.seed)
    targets = list(P.points)
    if isinstance(U, Union):
        for part in U.parts:
            try:
                targets.extend(part.projections(x).points)
            except DomainError:
                pass
    best = -math.inf
    for xi in P.points:
        others = [t for t in targets if np.linalg.norm(t - xi) > 1e-9]
        best = max(best, _opening_at_projection(U, x, xi, sampler, others, rng))
    return best


# -- distance level sets ---------------------------------------------------------


def _reference(U: SetDescriptor) -> tuple[np.ndarray, float]:
    if isinstance(U, Ball):
        return U.center, U.radius
    if isinstance(U, ConvexPolytope):
        from scipy.optimize import linprog

        # Chebyshev-like centre: maximise the inscribed radius (bounded by 1e3)
        A, b = U.A, U.b
        c = np.zeros(U.dim + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.column_stack([A, np.ones(len(b))]), b_ub=b,
                      bounds=[(None, None)] * U.dim + [(0, 1e3)], method="highs")
        if res.status == 0:
            return res.x[:-1], float(res.x[-1])
    if isinstance(U, Raster):
        c = U.set_centers()
        return c.mean(axis=0), float(np.max(np.linalg.norm(c - c.mean(axis=0), axis=1)))
    return np.zeros(U.dim), 0.0


def _seed_points(U, n, center, radius, rng) -> np.ndarray:
    dim = U.dim
    if dim == 1:
        return center + radius * np.array([[-1.0], [1.0]])
    if dim == 2:
        a = (np.arange(n) + 0.5 * rng.uniform(0, 1)) * (2 * math.pi / n)
        a = np.concatenate([a, np.arange(n) * (2 * math.pi / n)])
        dirs = np.stack([np.cos(a), np.sin(a)], axis=1)
    else:
        dirs = fibonacci_sphere(n)
    return center + radius * dirs


def _point_at_distance(U, xi, e, s0, R, rtol=1e-6) -> np.ndarray | None:
    """Point on the ray ``xi + s e`` at distance R from U (bisection on dist)."""
    if s0 >= R:
        return xi + R * e
    x = xi + R * e
    if abs(U.dist(x) - R) <= rtol * R:
        return x
    lo, hi = s0, 2.0 * R
    for _ in range(40):
        if U.dist(xi + hi * e) >= R:
            break
        lo, hi = hi, 2 * hi
    else:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if U.dist(xi + mid * e) < R:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * R * 1e-2:
            break
    x = xi + hi * e
    return x if abs(U.dist(x) - R) <= rtol * R else None


def level_points(U: SetDescriptor, R: float, n: int = 64, seed: int = 42,
                 center=None, spread: float | None = None) -> np.ndarray:
    """Points x with ``dist(x, U) = R`` (within ``1e-6 R``).

    Seeds on a sphere around ``center`` are projected onto U; each point is
    moved along its outward projection ray and bisected onto the level set.
    """
    if R <= 0:
        raise ParameterError("R must be positive")
    if U.is_empty:
        return np.empty((0, U.dim))
    rng = np.random.default_rng(seed)
    c0, scale = _reference(U)
    center = c0 if center is None else np.asarray(center, float)
    spread = (R + scale + 1.0) if spread is None else spread
    seeds = _seed_points(U, n, center, spread, rng)
    d = np.asarray(U.dist(seeds))
    out = []
    for x0, dx in zip(seeds, d):
        if not dx > 0:
            continue
        xi = U.projections(x0).points[0]
        nv = np.linalg.norm(x0 - xi)
        if nv <= 1e-12:
            continue
        e = (x0 - xi) / nv
        x = _point_at_distance(U, xi, e, float(dx), R)
        if x is not None:
            out.append(x)
    return np.array(out) if out else np.empty((0, U.dim))


def opening_profile(U: SetDescriptor, radii: Sequence[float], directions: int = 64,
                    sampler: OpeningSampler | None = None, seed: int = 42,
                    center=None) -> list[tuple[float, float]]:
    """``(R, sup O)`` over sampled points of each distance level set.

    Level points found at a radius R are also pulled back to every smaller
    radius ``R'`` along their projection rays, which keeps the same projection.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ParameterError("radii must be strictly increasing")
    if directions < 1:
        raise ParameterError("need at least one direction")
    if U.is_empty or U.is_singleton:
        return [(R, -math.inf) for R in radii]
    sampler = sampler or OpeningSampler()
    pts = {R: list(level_points(U, R, directions, seed=seed, center=center)) for R in radii}
    for j, R in enumerate(radii):
        for x in list(pts[R]):
            P = U.projections(x)
            for xi in P.points:
                e = (x - xi) / np.linalg.norm(x - xi)
                for Rp in radii[:j]:
                    pts[Rp].append(xi + Rp * e)
    out = []
    for R in radii:
        vals = [opening(U, x, sampler) for x in pts[R]]
        out.append((R, max(vals) if vals else -math.inf))
    return out


def profile_is_monotone(profile, tol: float) -> bool:
    vals = [v for _, v in profile]
    return all(b <= a + tol for a, b in zip(vals, vals[1:]))


# -- direction sets ----------------------------------------------------------------


@dataclass
class DirectionSetEstimate:
    directions: np.ndarray  # (K, N) unit vectors
    weights: np.ndarray
    source: str = "geometry"
    meta: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.directions.shape[0] == 0

    def angles_from(self, e) -> np.ndarray:
        e = np.asarray(e, float) / np.linalg.norm(e)
        c = np.clip(self.directions @ e, -1.0, 1.0)
        return np.degrees(np.arccos(c))

    def max_angle_from(self, e) -> float:
        return float(self.angles_from(e).max()) if not self.empty else math.nan

    def max_angular_gap(self) -> float:
        """Largest empty arc (degrees) on the circle; 2D only."""
        if self.empty:
            return 360.0
        if self.directions.shape[1] != 2:
            raise ParameterError("angular gap is defined for planar clouds")
        th = np.sort(np.degrees(np.arctan2(self.directions[:, 1], self.directions[:, 0])))
        gaps = np.diff(np.concatenate([th, [th[0] + 360.0]]))
        return float(gaps.max())

    def mean_direction(self) -> np.ndarray:
        m = (self.weights[:, None] * self.directions).sum(axis=0)
        n = np.linalg.norm(m)
        return m / n if n > 0 else m

    def clusters(self, threshold_deg: float = 5.0) -> list[dict]:
        """Greedy angular clustering, heaviest clusters first."""
        order = np.argsort(-self.weights)
        left = np.ones(len(order), dtype=bool)
        out = []
        for i in order:
            if not left[i]:
                continue
            c = np.degrees(np.arccos(np.clip(self.directions @ self.directions[i], -1, 1)))
            member = left & (c <= threshold_deg)
            left &= ~member
            w = self.weights[member]
            m = (w[:, None] * self.directions[member]).sum(axis=0)
            out.append({"center": (m / np.linalg.norm(m)).tolist(), "weight": float(w.sum()),
                        "count": int(member.sum())})
        return out

    def summary(self) -> dict:
        d = {"count": int(self.directions.shape[0]), "source": self.source, **self.meta}
        if not self.empty:
            d["mean_direction"] = self.mean_direction().tolist()
            d["clusters"] = self.clusters()[:8]
            if self.directions.shape[1] == 2:
                d["max_angular_gap_deg"] = self.max_angular_gap()
        return d


def predict_E(U: SetDescriptor, R: float, samples: int = 256, seed: int = 42,
              center=None, spread: float | None = None) -> DirectionSetEstimate:
    """Outward projection directions ``(x - xi)/|x - xi|`` over the level set
    ``dist(x, U) = R``: a finite-R picture of the asymptotic direction set."""
    if R <= 0:
        raise ParameterError("R must be positive")
    dim = U.dim
    if U.is_empty:
        return DirectionSetEstimate(np.empty((0, dim)), np.empty(0), meta={"R": R})
    pts = level_points(U, R, samples, seed=seed, center=center, spread=spread)
    dirs = []
    for x in pts:
        dirs.extend(U.projections(x).directions(x))
    D = np.array(dirs) if dirs else np.empty((0, dim))
    return DirectionSetEstimate(D, np.ones(len(D)), meta={"R": R, "points": int(len(pts))})


# -- vanishing global mean --------------------------------------------------------------


@dataclass
class VGMReport:
    scales: list[float]
    sup_ratios: list[float]
    M: float
    decaying: bool

    def to_dict(self):
        return {"scales": self.scales, "sup_ratios": self.sup_ratios, "M": self.M, "decaying": self.decaying}


def vgm_check(gamma: Callable, scales: Sequence[float], window: float = 1000.0,
              samples: int = 4001, seed: int = 42, dim: int = 2) -> VGMReport:
    """Sup of ``|gamma(x') - gamma(y')| / |x' - y'|`` over sampled pairs at each
    separation scale, plus the constant ``sup |dgamma| / (|x'-y'| + 1)``."""
    rng = np.random.default_rng(seed)
    k = dim - 1
    scales = [float(s) for s in scales]

    def g(p):
        return np.asarray(gamma(p[:, 0] if k == 1 else p), dtype=float)

    if k == 1:
        base = np.linspace(-window, window, samples)[:, None]
    else:
        base = rng.uniform(-window, window, size=(samples, k))
    base = np.concatenate([base, np.zeros((1, k))])
    ratios = []
    M = 0.0
    gb = g(base)
    for s in scales:
        if k == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            a = rng.normal(size=(16, k))
            dirs = a / np.linalg.norm(a, axis=1, keepdims=True)
        best = 0.0
        for d in dirs:
            other = base + s * d
            diff = np.abs(g(other) - gb)
            best = max(best, float(diff.max()) / s)
            M = max(M, float(diff.max()) / (s + 1.0))
        ratios.append(best)
    a = rng.uniform(-window, window, size=(samples, k))
    b = rng.uniform(-window, window, size=(samples, k))
    M = max(M, float(np.max(np.abs(g(a) - g(b)) / (np.linalg.norm(a - b, axis=1) + 1.0))))
    nonincreasing = all(r2 <= r1 * (1 + 1e-9) + 1e-12 for r1, r2 in zip(ratios, ratios[1:]))
    decaying = nonincreasing and len(ratios) > 1 and ratios[-1] <= 0.5 * ratios[0]
    return VGMReport(scales, ratios, M, decaying)
