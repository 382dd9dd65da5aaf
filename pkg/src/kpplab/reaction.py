"""KPP nonlinearities f with their zero extension outside [0, 1].

A :class:`ReactionFn` bundles a vectorised evaluator, the slope ``f'(0)``
(supplied explicitly, never finite-differenced) and, for the built-in
reactions, a scalar numba kernel that the solver fuses into its stencil loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numba
import numpy as np

from .errors import InvalidFunctionError

ENDPOINT_TOL = 1e-12
MONOTONE_SLACK = 1e-12
FD_STEP = 1e-6
FD_TOL = 1e-4


@dataclass(frozen=True)
class ReactionFn:
    """Immutable KPP reaction term.

    ``raw`` is only ever evaluated on [0, 1]; :meth:`__call__` applies the
    zero extension so that ``f(s) = 0`` for ``s < 0`` and ``s > 1``.
    """

    raw: Callable[[np.ndarray], np.ndarray]
    deriv_at_0: float
    name: str
    params: dict = field(default_factory=dict)
    deriv_at_1: float | None = None
    kernel: Callable | None = field(default=None, compare=False, repr=False)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= 0.0) & (s <= 1.0)
        out = np.zeros_like(s)
        if np.any(inside):
            out[inside] = self.raw(s[inside])
        if out.ndim == 0:
            return float(out)
        return out

    eval = __call__

    def slope_at_1(self) -> float:
        if self.deriv_at_1 is not None:
            return float(self.deriv_at_1)
        # one-sided: the zero extension makes a centred stencil meaningless at 1
        h = FD_STEP
        return float((self(1.0) - self(1.0 - h)) / h)

    def lipschitz(self, samples: int = 2049) -> float:
        """Sampled bound on ``|f'|`` over [0, 1]."""
        s = np.linspace(0.0, 1.0, samples)
        return float(np.max(np.abs(np.gradient(self(s), s))))

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass
class KPPValidation:
    conditions: dict[str, bool]
    details: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    def failed(self) -> list[str]:
        return [k for k, ok in self.conditions.items() if not ok]


def validate_kpp(f: ReactionFn, samples: int = 64) -> KPPValidation:
    """Check every KPP condition on the uniform grid ``k/samples``, k=1..samples."""
    if samples < 16:
        raise ValueError("samples must be >= 16")
    s = np.arange(1, samples + 1) / samples
    vals = f(s)
    f0, f1 = f(0.0), f(1.0)
    outside = f(np.array([-1.0, -1e-3, 1.0 + 1e-3, 2.0]))
    probe = np.concatenate([vals, [f0, f1], outside])
    if not np.all(np.isfinite(probe)):
        raise InvalidFunctionError(f"{f.name}: non-finite evaluation")

    ratio = vals / s
    increments = np.diff(ratio)
    fd = (f(2 * FD_STEP) - f0) / (2 * FD_STEP)
    conditions = {
        "f(0)=0": abs(f0) <= ENDPOINT_TOL,
        "f(1)=0": abs(f1) <= ENDPOINT_TOL,
        "f>0 on (0,1)": bool(np.all(vals[:-1] > 0.0)),
        "f(s)/s nonincreasing": bool(np.all(increments <= MONOTONE_SLACK)),
        "zero extension": bool(np.all(outside == 0.0)),
        "f'(0)>0": f.deriv_at_0 > 0.0,
        "f'(0) matches difference": abs(fd - f.deriv_at_0) <= FD_TOL,
    }
    details = {
        "max_ratio_increase": float(np.max(increments)) if increments.size else 0.0,
        "min_interior_value": float(np.min(vals[:-1])),
        "fd_slope": float(fd),
    }
    return KPPValidation(conditions, details)


def minimal_speed(f: ReactionFn) -> float:
    """Minimal front speed ``2 sqrt(f'(0))``."""
    if not f.deriv_at_0 > 0.0:
        raise InvalidFunctionError(f"{f.name}: f'(0) must be positive, got {f.deriv_at_0}")
    return 2.0 * float(np.sqrt(f.deriv_at_0))


def subadditivity_check(f: ReactionFn, trials: int = 10_000, seed: int = 42) -> bool:
    """True iff ``f(a+b) <= f(a)+f(b)`` for ``trials`` random pairs in [0, 2]^2."""
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.0, 2.0, size=(2, trials))
    return bool(np.all(f(a + b) <= f(a) + f(b) + 1e-12))


def linear_bound_check(f: ReactionFn, samples: int = 1024) -> bool:
    """Sampled check of ``f(s) <= f'(0) s`` for s in [0, 2]."""
    s = np.linspace(0.0, 2.0, samples)
    return bool(np.all(f(s) <= f.deriv_at_0 * s + 1e-12))


# -- built-in reactions -------------------------------------------------------


@lru_cache(maxsize=None)
def _logistic_kernel(m: float, r: float):
    # m and r are frozen into the compiled function as constants
    if m == 1.0:
        @numba.njit(cache=False)
        def kernel(s):
            if s <= 0.0 or s >= 1.0:
                return 0.0
            return r * s * (1.0 - s)
    else:
        @numba.njit(cache=False)
        def kernel(s):
            if s <= 0.0 or s >= 1.0:
                return 0.0
            return r * s * (1.0 - s) ** m
    return kernel


def logistic(r: float = 1.0, m: float = 1.0, name: str | None = None) -> ReactionFn:
    """``r s (1-s)^m``; ``f'(0) = r``, ``f'(1) = -r`` when m = 1 and 0 otherwise."""
    if r <= 0:
        raise InvalidFunctionError("rate r must be positive")
    if m < 1:
        raise InvalidFunctionError("exponent m must be >= 1")
    r = float(r)
    m = float(m)

    def raw(s):
        return r * s * (1.0 - s) ** m

    if name is None:
        name = "logistic" if m == 1.0 and r == 1.0 else ("logistic-m" if r == 1.0 else "scaled-logistic")
    params = {}
    if m != 1.0:
        params["m"] = m
    if r != 1.0:
        params["r"] = r
    return ReactionFn(
        raw=raw,
        deriv_at_0=r,
        name=name,
        params=params,
        deriv_at_1=-r if m == 1.0 else 0.0,
        kernel=_logistic_kernel(m, r),
    )


def from_callable(func: Callable, deriv_at_0: float, name: str = "custom",
                  deriv_at_1: float | None = None) -> ReactionFn:
    """Wrap an arbitrary vectorised ``func`` (used on [0, 1] only)."""
    return ReactionFn(raw=func, deriv_at_0=float(deriv_at_0), name=name,
                      deriv_at_1=deriv_at_1)


def get_reaction(name: str, **params) -> ReactionFn:
    """Look up a built-in reaction by name.

    ``"logistic"``, ``"logistic-m"`` and ``"scaled-logistic"`` all accept the
    parameters ``r`` and ``m``; the names only differ in their defaults' labels.
    """
    if name not in ("logistic", "logistic-m", "scaled-logistic"):
        raise InvalidFunctionError(f"unknown reaction {name!r}")
    extra = set(params) - {"r", "m"}
    if extra:
        raise InvalidFunctionError(f"reaction {name!r}: unknown parameters {sorted(extra)}")
    return logistic(r=float(params.get("r", 1.0)), m=float(params.get("m", 1.0)))


def reaction_from_dict(spec: dict | str) -> ReactionFn:
    if isinstance(spec, str):
        return get_reaction(spec)
    spec = dict(spec)
    return get_reaction(spec.pop("name"), **spec)
