"""Travelling fronts ``phi'' + c phi' + f(phi) = 0``, front-position fits and
multi-front supersolutions built from the minimal-speed profile."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .errors import FitError, IntegrationError, ParameterError
from .geometry.sets import fibonacci_sphere
from .reaction import ReactionFn, minimal_speed

ETA = 1e-8          # distance from 1 at the start of the shoot
STOP = 1e-8         # shoot ends once phi drops below this
MAX_STEPS = 4_000_000


@numba.njit(cache=True)
def _rk4(kern, c, p, q, h):
    k1p = q
    k1q = -c * q - kern(p)
    p2 = p + 0.5 * h * k1p
    q2 = q + 0.5 * h * k1q
    k2p = q2
    k2q = -c * q2 - kern(p2)
    p3 = p + 0.5 * h * k2p
    q3 = q + 0.5 * h * k2q
    k3p = q3
    k3q = -c * q3 - kern(p3)
    p4 = p + h * k3p
    q4 = q + h * k3q
    k4p = q4
    k4q = -c * q4 - kern(p4)
    return (p + h * (k1p + 2 * k2p + 2 * k3p + k4p) / 6.0,
            q + h * (k1q + 2 * k2q + 2 * k3q + k4q) / 6.0)


@numba.njit(cache=True)
def _march(kern, rk4, c, p, q, h, first, stop, until_half, out_p, out_q):
    """Fill ``out`` with RK4 nodes; the first step has length ``first``.

    Returns the node count, negated if phi stopped decreasing.
    """
    n = 0
    out_p[0] = p
    out_q[0] = q
    step = first
    while n + 1 < out_p.shape[0]:
        if until_half and p < 0.5:
            return n + 1
        if not until_half and p <= stop:
            return n + 1
        p, q = rk4(kern, c, p, q, step)
        step = h
        n += 1
        out_p[n] = p
        out_q[n] = q
        if q >= 0.0 or p != p:
            return -(n + 1)
    return n + 1


def _scalar_kernel(f: ReactionFn):
    if f.kernel is not None:
        return f.kernel, _rk4, lambda *a: _march(a[0], _rk4, *a[1:])

    def kern(s):
        return float(f(s))

    return kern, _rk4.py_func, lambda *a: _march.py_func(a[0], _rk4.py_func, *a[1:])


@dataclass(frozen=True, eq=False)
class FrontProfile:
    """Tabulated decreasing profile on the uniform grid ``z0 + k dz``.

    Outside the table the profile is 1 on the left and follows the
    linearisation at 0 on the right.
    """

    speed: float
    z0: float
    dz: float
    phi: np.ndarray
    dphi: np.ndarray
    f: ReactionFn = field(repr=False)

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.phi.size)

    @property
    def z_max(self) -> float:
        return self.z0 + self.dz * (self.phi.size - 1)

    @property
    def tail_rate(self) -> float:
        """Slow decay exponent ``(c - sqrt(c^2 - 4 f'(0)))/2`` at +infinity."""
        disc = max(self.speed ** 2 - 4.0 * self.f.deriv_at_0, 0.0)
        return 0.5 * (self.speed - math.sqrt(disc))

    @property
    def critical(self) -> bool:
        return abs(self.speed - minimal_speed(self.f)) <= 1e-9

    def _tail(self, s: np.ndarray, deriv: bool) -> np.ndarray:
        lam = self.tail_rate
        a = float(self.phi[-1])
        b = float(self.dphi[-1]) + lam * a if self.critical else 0.0
        e = np.exp(-lam * s)
        if deriv:
            return (b - lam * (a + b * s)) * e
        return np.maximum(a + b * s, 0.0) * e

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.interp(z, self.z, self.phi, left=1.0, right=float(self.phi[-1]))
        right = z > self.z_max
        if np.any(right):
            out = np.where(right, self._tail(np.where(right, z - self.z_max, 0.0), False), out)
        return float(out) if out.ndim == 0 else out

    evaluate = __call__

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        out = np.interp(z, self.z, self.dphi, left=0.0, right=float(self.dphi[-1]))
        right = z > self.z_max
        if np.any(right):
            out = np.where(right, self._tail(np.where(right, z - self.z_max, 0.0), True), out)
        return float(out) if out.ndim == 0 else out

    def residual(self) -> float:
        """Sup over interior nodes of ``|phi'' + c phi' + f(phi)|``.

        ``phi''`` is the fourth-order centred difference of the tabulated
        ``phi'``, so this measures how well the table satisfies the ODE.
        """
        q, h = self.dphi, self.dz
        d2 = (q[:-4] - 8 * q[1:-3] + 8 * q[3:-1] - q[4:]) / (12 * h)
        r = d2 + self.speed * q[2:-2] + self.f(self.phi[2:-2])
        return float(np.max(np.abs(r)))

    def fd_crosscheck(self) -> float:
        """Sup gap between the second difference of phi and ``-c phi' - f(phi)``."""
        p, h = self.phi, self.dz
        d2 = (p[:-2] - 2 * p[1:-1] + p[2:]) / (h * h)
        ode = -self.speed * self.dphi[1:-1] - self.f(p[1:-1])
        return float(np.max(np.abs(d2 - ode)))

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.phi) < 0))

    def decay_rate(self, lo: float = 1e-7, hi: float = 1e-4) -> float:
        """Least-squares slope of ``ln phi`` over the table where ``lo < phi < hi``."""
        sel = (self.phi > lo) & (self.phi < hi)
        if sel.sum() < 3:
            raise FitError("tail window holds too few nodes")
        return float(np.polyfit(self.z[sel], np.log(self.phi[sel]), 1)[0])

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "phi", "dphi"])
            for row in zip(self.z, self.phi, self.dphi):
                w.writerow([repr(float(v)) for v in row])
        return path

    def to_dict(self) -> dict:
        return {"speed": self.speed, "reaction": self.f.to_dict(), "dz": self.dz, "z0": self.z0,
                "nodes": int(self.phi.size), "residual": self.residual()}


def shoot_profile(f: ReactionFn, c: float, zstep: float = 0.005) -> FrontProfile:
    """Front of speed ``c`` by RK4 shooting from the unstable manifold of 1.

    The trajectory leaves ``phi = 1 - 1e-8`` along the eigendirection
    ``mu = (-c + sqrt(c^2 - 4 f'(1)))/2`` and runs until ``phi <= 1e-8``.
    The half-level crossing is located by Newton on a partial step, and the
    table is rebuilt so that ``z = 0`` is a node with ``phi = 1/2`` exactly.
    """
    cstar = minimal_speed(f)
    if c < cstar - 1e-12:
        raise ParameterError(f"speed {c} is below the minimal speed {cstar}")
    if not 0 < zstep <= 0.01:
        raise ParameterError("zstep must lie in (0, 0.01]")
    # the zero extension makes f'(1) one-sided; use the secant slope over the start gap
    k1 = f.deriv_at_1 if f.deriv_at_1 is not None else -float(f(1.0 - ETA)) / ETA
    mu = 0.5 * (-c + math.sqrt(c * c - 4.0 * k1))
    if not mu > 0:
        raise IntegrationError("no unstable direction at phi = 1")
    kern, rk4, march = _scalar_kernel(f)
    p0, q0 = 1.0 - ETA, -ETA * mu

    buf_p = np.empty(MAX_STEPS)
    buf_q = np.empty(MAX_STEPS)
    n = march(kern, c, p0, q0, zstep, zstep, STOP, True, buf_p, buf_q)
    if n <= 0 or buf_p[n - 1] >= 0.5:
        raise IntegrationError("shoot did not cross 1/2 monotonically")
    i = n - 2  # last node with phi >= 1/2
    p_i, q_i = buf_p[i], buf_q[i]

    # partial step s with phi(s) = 1/2
    s = (p_i - 0.5) / -q_i
    for _ in range(50):
        ps, qs = rk4(kern, c, p_i, q_i, s)
        g = ps - 0.5
        if abs(g) <= 1e-16:
            break
        s -= g / qs
    if not 0.0 <= s <= 1.5 * zstep:
        raise IntegrationError("half-level crossing not bracketed")
    _, q_half = rk4(kern, c, p_i, q_i, s)

    # left part re-marched so that the crossing falls on a node
    left_p = np.empty(i + 2)
    left_q = np.empty(i + 2)
    first = s if s > 0 else zstep
    m = march(kern, c, p0, q0, zstep, first, 0.0, True, left_p, left_q)
    left_p, left_q = left_p[1:i + 1], left_q[1:i + 1]
    if m < i + 2:
        raise IntegrationError("re-marched left branch ended early")

    n = march(kern, c, 0.5, q_half, zstep, zstep, STOP, False, buf_p, buf_q)
    if n <= 0 or buf_p[n - 1] > STOP:
        raise IntegrationError("profile stopped decreasing before reaching 0")
    phi = np.concatenate([left_p, buf_p[:n]])
    dphi = np.concatenate([left_q, buf_q[:n]])
    phi[left_p.size] = 0.5
    if not np.all(np.diff(phi) < 0):
        raise IntegrationError("tabulated profile is not strictly decreasing")
    return FrontProfile(float(c), -zstep * left_p.size, float(zstep), phi, dphi, f)


# -- front position fit ----------------------------------------------------------


class FrontFit(NamedTuple):
    speed: float
    shift: float
    log_coef: float
    rms: float


def fit_front_position(curve: Sequence[tuple[float, float]], c: float | None = None) -> FrontFit:
    """Least squares ``position ~ a t + b ln t + d``; returns ``(a, d, b, rms)``.

    ``c`` is accepted for reporting symmetry with the logarithmic-shift law
    ``-3/c``; it does not enter the fit.
    """
    arr = np.asarray(curve, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 20:
        raise FitError("need at least 20 (t, position) samples")
    t, x = arr[:, 0], arr[:, 1]
    if np.any(t <= 0):
        raise FitError("times must be positive")
    if t.max() < 3 * t.min():
        raise FitError("times must span at least a factor 3")
    A = np.column_stack([t, np.log(t), np.ones_like(t)])
    scale = np.linalg.norm(A, axis=0)
    if np.linalg.cond(A / scale) > 1e12:
        raise FitError("degenerate design matrix")
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    a, b, d = (float(v) for v in coef)
    rms = float(np.sqrt(np.mean((A @ coef - x) ** 2)))
    return FrontFit(a, d, b, rms)


# -- supersolutions ---------------------------------------------------------------------


def epsilon_net(eps: float, dim: int, seed: int = 42, checks: int = 20000) -> np.ndarray:
    """Finite subset of the unit sphere within chord distance ``eps`` of every unit vector."""
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        spacing = 2.0 * math.asin(eps / 2.0)
        n = math.ceil(2 * math.pi / spacing)
        a = 2 * math.pi * np.arange(n) / n
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if dim != 3:
        raise ParameterError("nets are provided for N <= 3")
    rng = np.random.default_rng(seed)
    probe = rng.normal(size=(checks, 3))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    n = max(8, math.ceil(4.0 / eps ** 2))
    while True:
        S = fibonacci_sphere(n)
        worst = np.sqrt(np.maximum(2 - 2 * (probe @ S.T).max(axis=1), 0)).max()
        if worst < eps:
            return S
        n = math.ceil(n * 1.25)


@dataclass(frozen=True, eq=False)
class Supersolution:
    """``v(t, x) = 2 sum_{e in S} phi(x.e - c*(t - T) + R/2)``."""

    directions: np.ndarray
    profile: FrontProfile
    R: float
    T: float
    lam: float
    c: float
    eps: float

    @property
    def n(self) -> int:
        return int(self.directions.shape[0])

    @property
    def dim(self) -> int:
        return int(self.directions.shape[1])

    def arguments(self, t, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        cs = self.profile.speed
        return x @ self.directions.T - (cs * (t - self.T))[:, None] + 0.5 * self.R

    def __call__(self, t, x):
        v = 2.0 * self.profile(self.arguments(t, x)).sum(axis=1)
        return float(v[0]) if np.ndim(x) == 1 else v

    def level_radius(self, t: float, level: float = 0.5, e=None) -> float:
        """Distance from 0 along ``e`` where ``v(t, .)`` first reaches ``level``."""
        e = np.asarray(e if e is not None else np.eye(self.dim)[0], float)
        e = e / np.linalg.norm(e)
        r = np.linspace(0.0, self.R + self.c * self.T + 10.0 * self.R + 50.0, 20001)
        v = self(t, r[:, None] * e[None, :])
        hit = np.nonzero(v >= level)[0]
        return float(r[hit[0]]) if hit.size else math.inf

    def to_dict(self) -> dict:
        return {
            "directions": self.directions.tolist(),
            "R": self.R,
            "T": self.T,
            "lambda": self.lam,
            "c": self.c,
            "eps": self.eps,
            "profile_speed": self.profile.speed,
            "reaction": self.profile.f.to_dict(),
        }

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def build_supersolution(profile: FrontProfile, lam: float, c: float, T: float, eps: float,
                        dim: int = 2, seed: int = 42) -> Supersolution:
    """Multi-front supersolution below ``lam`` at the origin on ``[0, T]`` and
    at least 1 outside the ball of radius ``R + c T`` at time 0."""
    cstar = minimal_speed(profile.f)
    if not profile.critical:
        raise ParameterError("supersolution needs the minimal-speed profile")
    if not 0 < eps < 0.5:
        raise ParameterError("eps must lie in (0, 1/2)")
    if (1 - eps) * c <= cstar:
        raise ParameterError(f"(1 - eps) c = {(1 - eps) * c} does not exceed c* = {cstar}")
    if lam <= 0 or T <= 0:
        raise ParameterError("lam and T must be positive")
    S = epsilon_net(eps, dim, seed)
    target = lam / (2 * S.shape[0])
    # phi(R/2) decreases in R: bisect, keep the end with phi(R/2) < target
    lo, hi = 0.0, 1.0
    while profile(0.5 * hi) >= target:
        lo, hi = hi, 2 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if profile(0.5 * mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * hi:
            break
    return Supersolution(S, profile, float(hi), float(T), float(lam), float(c), float(eps))


def supersolution_residual(v: Supersolution, points, f: ReactionFn | None = None) -> float:
    """Minimum of ``dt v - lap v - f(v)`` over ``points = [(t, x), ...]``.

    Each ``2 phi_i`` satisfies ``dt - lap = 2 f(phi_i)`` exactly, so the
    residual is ``2 sum f(phi_i) - f(2 sum phi_i)``.  Passing another ``f``
    evaluates the same expression for that nonlinearity.
    """
    f = v.profile.f if f is None else f
    ts = np.array([float(p[0]) for p in points])
    xs = np.array([np.asarray(p[1], float) for p in points]).reshape(len(ts), -1)
    phi = v.profile(v.arguments(ts, xs))
    res = 2.0 * f(phi).sum(axis=1) - f(2.0 * phi.sum(axis=1))
    return float(res.min())
