"""Named experiment presets.

A scenario binds an initial set, a grid, a solver configuration and a
diagnostic plan.  Each plan entry names an operation, the snapshot times it
reads and a predicate deciding PASS / FAIL / INCONCLUSIVE from the values it
wrote into the :class:`DiagnosticsReport`.  The catalog lives next to this
file as one JSON document per scenario.

Grids may be symmetry-reduced: ``mirror_axes`` lists axes whose lower face is
a symmetry plane of the set, and diagnostics read the field unfolded across
those faces.  ``exact_faces`` lists faces across which the set is invariant
under reflection (so zero flux there is exact, e.g. the sides of a strip cut
from a half-space).  Every other face is a source of contamination, which
the doubling test measures.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..diagnostics import (
    DiagnosticsReport,
    estimate_E_from_run,
    extract_profile,
    front_position_1d,
    hessian_sigma,
    planarity_defect,
)
from ..errors import ConfigError, ParameterError, ScenarioError
from ..fronts import shoot_profile
from ..geometry.serialize import descriptor_from_dict
from ..geometry.sets import SetDescriptor
from ..grid import GridField, GridSpec
from ..io import write_kppg
from ..reaction import ReactionFn, minimal_speed, reaction_from_dict
from ..solver import SnapshotList, SolverConfig, rasterize, run

CATALOG = Path(__file__).parent
DOUBLING_TOL = 1e-6
PASS, FAIL, INCONCLUSIVE, INFO = "PASS", "FAIL", "INCONCLUSIVE", "INFO"
NOISE_FLOOR = 1e-8  # decay ratios below this reference are not meaningful

OPS = ("sigma", "planarity", "gradient-direction", "profile", "gradient-parallel",
       "direction-cloud", "reference-gap", "inner-min", "outer-max")
PREDICATES = ("decay", "persistent", "at_most", "at_least", "none")


@dataclass
class Scenario:
    id: str
    claim: str
    set: SetDescriptor
    grid: GridSpec
    reaction: ReactionFn
    solver: SolverConfig
    roi: tuple[np.ndarray, np.ndarray]
    plan: list[dict]
    mirror_axes: tuple[int, ...] = ()
    exact_faces: tuple[str, ...] = ()
    references: dict[str, SetDescriptor] = field(default_factory=dict)
    seed: int = 42
    doc: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, where: str = "scenario") -> "Scenario":
        def need(key):
            if key not in d:
                raise ConfigError(f"{where}: missing field {key!r}")
            return d[key]

        known = {"id", "claim", "set", "grid", "reaction", "solver", "roi", "plan", "mirror_axes",
                 "exact_faces", "references", "seed"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
        sid = str(need("id"))
        U = descriptor_from_dict(need("set"), where=f"{where}.set")
        try:
            grid = GridSpec.from_dict(need("grid"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.grid: {exc}") from exc
        if grid.ndim != U.dim:
            raise ConfigError(f"{where}: grid has {grid.ndim} axes, set has dimension {U.dim}")
        f = reaction_from_dict(d.get("reaction", "logistic"))
        solver = SolverConfig.from_dict(need("solver"))
        roi = need("roi")
        lo, hi = np.asarray(roi["lower"], float), np.asarray(roi["upper"], float)
        if lo.shape != (grid.ndim,) or hi.shape != (grid.ndim,) or np.any(hi <= lo):
            raise ConfigError(f"{where}.roi: need lower < upper with {grid.ndim} coordinates")
        if np.any(lo < grid.lower - 1e-9) or np.any(hi > grid.upper + 1e-9):
            raise ConfigError(f"{where}.roi: region of interest leaves the grid")
        mirror = tuple(int(a) for a in d.get("mirror_axes", []))
        faces = tuple(str(s) for s in d.get("exact_faces", []))
        for s in faces:
            if len(s) < 3 or s[0] != "x" or s[-1] not in "+-" or not s[1:-1].isdigit() \
                    or not 1 <= int(s[1:-1]) <= grid.ndim:
                raise ConfigError(f"{where}.exact_faces: bad face name {s!r} (use e.g. 'x1-')")
        refs = {k: descriptor_from_dict(v, where=f"{where}.references.{k}")
                for k, v in d.get("references", {}).items()}
        plan = list(need("plan"))
        for i, p in enumerate(plan):
            w = f"{where}.plan[{i}]"
            if p.get("op") not in OPS:
                raise ConfigError(f"{w}: unknown op {p.get('op')!r}")
            if "name" not in p or not p.get("times"):
                raise ConfigError(f"{w}: needs 'name' and non-empty 'times'")
            kind = p.get("predicate", {}).get("kind", "none")
            if kind not in PREDICATES:
                raise ConfigError(f"{w}: unknown predicate {kind!r}")
            if p.get("run", "main") not in ("main", *refs):
                raise ConfigError(f"{w}: unknown run {p['run']!r}")
            for t in p["times"]:
                k = t / solver.snapshot_every
                if t > solver.horizon + 1e-9 or abs(k - round(k)) > 1e-9:
                    raise ConfigError(f"{w}: time {t} is not a snapshot time")
        return cls(sid, str(d.get("claim", "")), U, grid, f, solver, (lo, hi), plan, mirror, faces,
                   refs, int(d.get("seed", 42)), dict(d))

    def to_dict(self) -> dict:
        return dict(self.doc)

    @property
    def horizon(self) -> float:
        return self.solver.horizon

    def times(self, which: str = "main") -> list[float]:
        ts = {float(t) for p in self.plan
              if which in (p.get("run", "main"), p.get("reference")) for t in p["times"]}
        if which == "main":
            ts.add(self.horizon)
        return sorted(ts)


def list_scenarios() -> list[str]:
    return sorted(p.stem for p in CATALOG.glob("*.json"))


def load_scenario(ref) -> Scenario:
    """By catalog id or by path to a JSON document."""
    path = Path(ref)
    if not path.suffix:
        path = CATALOG / f"{ref}.json"
        if not path.exists():
            raise ConfigError(f"unknown scenario {ref!r}; known: {', '.join(list_scenarios())}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return Scenario.from_dict(doc, where=str(path.name))


# -- verdicts --------------------------------------------------------------------------------


@dataclass
class PredicateResult:
    name: str
    status: str
    detail: str
    values: list[tuple[float, float]]

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "detail": self.detail,
                "values": [{"t": t, "value": v} for t, v in self.values]}


@dataclass
class Verdict:
    scenario: str
    claim: str
    predicates: list[PredicateResult]
    doubling: float | None = None
    elapsed: float = 0.0

    @property
    def overall(self) -> str:
        st = [p.status for p in self.predicates]
        if FAIL in st:
            return FAIL
        if INCONCLUSIVE in st:
            return INCONCLUSIVE
        return PASS

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "claim": self.claim, "overall": self.overall,
                "doubling_gap": self.doubling, "elapsed_s": round(self.elapsed, 2),
                "predicates": [p.to_dict() for p in self.predicates]}

    def summary(self) -> str:
        lines = [f"{self.scenario}: {self.overall}", f"  claim: {self.claim}"]
        for p in self.predicates:
            lines.append(f"  [{p.status}] {p.name}: {p.detail}")
        if self.doubling is not None:
            lines.append(f"  doubling test: max ROI gap {self.doubling:.2e} (tolerance {DOUBLING_TOL:g})")
        return "\n".join(lines)


def decide(pred: dict, values: list[tuple[float, float]]) -> tuple[str, str]:
    """Apply one predicate to a time-ordered list of ``(t, value)``."""
    kind = pred.get("kind", "none")
    vals = [v for _, v in values]
    if kind == "none":
        return INFO, "reported only: " + ", ".join(f"t={t:g}: {v:.4g}" for t, v in values)
    if not vals or not all(math.isfinite(v) for v in vals):
        return INCONCLUSIVE, "missing or non-finite values"
    (t0, v0), (t1, v1) = values[0], values[-1]
    if kind == "decay":
        ratio = float(pred.get("ratio", 0.5))
        if len(values) < 2 or v0 < NOISE_FLOOR:
            return INCONCLUSIVE, f"reference value {v0:.3g} at t={t0:g} is below the noise floor"
        ok = v1 <= ratio * v0
        return (PASS if ok else FAIL), f"{v1:.4g} at t={t1:g} vs {ratio:g} x {v0:.4g} at t={t0:g}"
    if kind == "persistent":
        ratio = float(pred.get("ratio", 0.5))
        floor = float(pred.get("min", 0.15))
        if len(values) < 2:
            return INCONCLUSIVE, "needs two times"
        ok = v1 >= ratio * v0 and v1 >= floor
        return (PASS if ok else FAIL), (f"{v1:.4g} at t={t1:g} vs {ratio:g} x {v0:.4g} at t={t0:g}, "
                                        f"floor {floor:g}")
    bound = float(pred["value"])
    if pred.get("at") == "last":
        vals = [v1]
    if kind == "at_most":
        ok = max(vals) <= bound
        return (PASS if ok else FAIL), f"max {max(vals):.4g} vs bound {bound:g}"
    ok = min(vals) >= bound
    return (PASS if ok else FAIL), f"min {min(vals):.4g} vs bound {bound:g}"


# -- geometry of the computational box ---------------------------------------------------------


def _unfold(field: GridField, mirror_axes) -> GridField:
    for a in mirror_axes:
        field = field.mirrored(a)
    return field


def _unfold_box(lo, hi, grid: GridSpec, mirror_axes):
    lo, hi = lo.copy(), hi.copy()
    for a in mirror_axes:
        lo[a] = 2 * grid.lower[a] - hi[a]
    return lo, hi


def doubled_grid(s: Scenario) -> GridSpec:
    """Same spacing and cell centres, twice the extent along every axis;
    mirror planes and exact faces stay put."""
    dims, origin = list(s.grid.dims), list(s.grid.origin)
    for a, n in enumerate(s.grid.dims):
        h = s.grid.spacing[a]
        lo_fixed = a in s.mirror_axes or f"x{a + 1}-" in s.exact_faces
        hi_fixed = f"x{a + 1}+" in s.exact_faces
        if lo_fixed and hi_fixed:
            continue
        if lo_fixed:
            dims[a] = 2 * n
        elif hi_fixed:
            dims[a] = 2 * n
            origin[a] -= n * h
        else:
            dims[a] = 2 * n
            origin[a] -= (n // 2) * h
    return GridSpec(tuple(dims), s.grid.spacing, tuple(origin))


def _roi_values(field: GridField, lo, hi) -> np.ndarray:
    return field.values[field.grid.window_slices(lo, hi)]


# -- probes ----------------------------------------------------------------------------------------


class _Context:
    def __init__(self, s: Scenario, runs: dict[str, dict[float, GridField]]):
        self.s = s
        self.runs = runs
        self.cstar = minimal_speed(s.reaction)
        self._zeta: dict[float, float] | None = None
        self._front = None
        self._unfolded: dict[tuple[str, float], GridField] = {}
        self.roi = _unfold_box(s.roi[0], s.roi[1], s.grid, s.mirror_axes)

    def field(self, t: float, which: str = "main") -> GridField:
        key = (which, t)
        if key not in self._unfolded:
            snaps = self.runs[which]
            hit = [v for k, v in snaps.items() if abs(k - t) <= 1e-9 * max(1.0, t)]
            if not hit:
                raise ScenarioError(f"no snapshot at t={t} in run {which!r}")
            self._unfolded[key] = _unfold(hit[0], self.s.mirror_axes)
        return self._unfolded[key]

    def front(self):
        if self._front is None:
            self._front = shoot_profile(self.s.reaction, self.cstar)
        return self._front

    def zeta(self, t: float) -> float:
        """Level-1/2 position of the 1D companion run from ``1_{x <= 0}``."""
        if self._zeta is None:
            s = self.s
            h = s.grid.spacing[-1]
            g = GridSpec.from_box([-20.0], [self.cstar * s.horizon + 40.0], h)
            x = g.axis_coords(0)
            u0 = GridField(g, (x <= 0).astype(float))
            snaps = SnapshotList()
            run(u0, s.reaction, replace(s.solver, sequential=True), snaps)
            self._zeta = {float(f.time): front_position_1d(f) for f in snaps}
        hit = [v for k, v in self._zeta.items() if abs(k - t) <= 1e-9 * max(1.0, t)]
        if not hit:
            raise ScenarioError(f"no companion snapshot at t={t}")
        return hit[0]

    def point(self, probe: dict, t: float, which: str = "main") -> tuple[np.ndarray, np.ndarray | None]:
        """Probe location and, where it has one, the probe's own direction."""
        kind = probe.get("kind")
        if kind == "point":
            return np.asarray(probe["x"], float), None
        if kind == "front-along":
            o = np.asarray(probe.get("origin", np.zeros(self.s.grid.ndim)), float)
            e = np.asarray(probe["direction"], float)
            e = e / np.linalg.norm(e)
            fld = self.field(t, which)
            step = 0.5 * min(fld.spacing)
            g = fld.grid
            lo, hi = g.lower + 0.5 * np.asarray(g.spacing), g.upper - 0.5 * np.asarray(g.spacing)
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.where(e > 0, (hi - o) / e, np.where(e < 0, (lo - o) / e, np.inf))
            smax = float(np.min(lim))
            s = np.arange(0.0, smax, step)
            u = fld.sample(o + s[:, None] * e)
            above = np.nonzero(u >= 0.5)[0]
            if above.size == 0 or above[-1] == len(u) - 1:
                raise ScenarioError(f"no level-1/2 crossing along the probe ray at t={t}")
            i = int(above[-1])
            r = (u[i] - 0.5) / (u[i] - u[i + 1])
            return o + (s[i] + r * step) * e, e
        if kind in ("axis-zeta", "arm-zeta"):
            alpha = math.atan(float(probe["beta"]))
            z = self.zeta(t)
            if kind == "axis-zeta":
                x = np.zeros(self.s.grid.ndim)
                x[1] = z / math.cos(alpha)
                return x, None
            rho = float(probe["offset"])
            x = np.zeros(self.s.grid.ndim)
            x[0], x[1] = rho, rho * math.tan(alpha) + z / math.cos(alpha)
            e = np.zeros(self.s.grid.ndim)
            e[0], e[1] = -math.sin(alpha), math.cos(alpha)
            return x, e
        raise ConfigError(f"unknown probe kind {kind!r}")


# -- operations ----------------------------------------------------------------------------------


def _op_values(op: dict, ctx: _Context, report: DiagnosticsReport) -> list[tuple[float, float]]:
    name, kind = op["name"], op["op"]
    which = op.get("run", "main")
    s = ctx.s
    out = []
    if kind == "direction-cloud":
        # one cloud per snapshot; the report keeps the last (latest) one
        for t in map(float, op["times"]):
            E = estimate_E_from_run([ctx.field(t, which)], float(op.get("threshold", 0.05)),
                                    window=ctx.roi, defect_max=float(op.get("defect_max", 0.1)),
                                    seed=s.seed, radius=op.get("radius"))
            ang = E.max_angle_from(op["target"])
            report.add_series(name, t, ang)
            report.values[f"{name}.count@{t:g}"] = float(len(E.directions))
            out.append((t, ang))
        report.direction_cloud = E
        return out
    for t in map(float, op["times"]):
        fld = ctx.field(t, which)
        where: tuple = ()
        if kind == "sigma":
            st = hessian_sigma(fld, int(op.get("k", 2)), ctx.roi, level_band=tuple(op.get("band", (0.01, 0.99))))
            report.sigma_stats.setdefault(int(op.get("k", 2)), []).append((t, st.sup_abs, st.argmax))
            v, where = st.sup_abs, st.argmax
        elif kind == "planarity":
            x, _ = ctx.point(op["probe"], t, which)
            p = planarity_defect(fld, x, op.get("radius"))
            v = math.nan if p.flat else p.defect
            report.planarity.append((t, tuple(x), v))
            where = tuple(x)
        elif kind == "gradient-direction":
            x, _ = ctx.point(op["probe"], t, which)
            g = np.array([fld.with_values(gi).sample(x[None])[0] for gi in fld.gradient()])
            target = np.asarray(op["target"], float)
            c = float(np.clip(-g @ target / (np.linalg.norm(g) * np.linalg.norm(target)), -1, 1))
            v, where = math.degrees(math.acos(c)), tuple(x)
        elif kind == "profile":
            x, e = ctx.point(op["probe"], t, which)
            if e is None:
                e = np.asarray(op["direction"], float)
            prof = extract_profile(fld, x, e, float(op.get("half_length", 15.0)))
            m = prof.compare(ctx.front())
            report.values[f"{name}.shift@{t:g}"] = m.shift
            v, where = m.distance, tuple(x)
        elif kind == "gradient-parallel":
            grads = fld.gradient()
            sl = fld.grid.window_slices(*ctx.roi)
            par = np.sqrt(sum(g[sl] ** 2 for g in grads[:-1]))
            i = np.unravel_index(int(np.argmax(par)), par.shape)
            v = float(par[i])
            where = tuple(float(fld.grid.axis_coords(a)[i[a] + sl[a].start]) for a in range(fld.ndim))
        elif kind == "reference-gap":
            ref = ctx.field(t, op["reference"])
            sl = fld.grid.window_slices(*ctx.roi)
            v = float(np.max(np.abs(fld.values[sl] - ref.values[sl])))
        elif kind in ("inner-min", "outer-max"):
            U = s.set if which == "main" else s.references[which]
            sl = fld.grid.window_slices(*ctx.roi)
            C = fld.grid.centers()[sl]
            u = fld.values[sl]
            reach = float(op["factor"]) * ctx.cstar * t
            if kind == "inner-min":
                V = U.erode(float(op.get("delta", 1.0)))
                sel = V.dist(C.reshape(-1, fld.ndim)).reshape(u.shape) <= reach
                v = float(u[sel].min()) if sel.any() else math.nan
            else:
                sel = U.dist(C.reshape(-1, fld.ndim)).reshape(u.shape) >= reach
                v = float(u[sel].max()) if sel.any() else math.nan
            report.values[f"{name}.cells@{t:g}"] = float(sel.sum())
        else:  # pragma: no cover - guarded by from_dict
            raise ConfigError(f"unknown op {kind!r}")
        report.add_series(name, t, v, where)
        out.append((t, float(v)))
    return out


# -- driver -------------------------------------------------------------------------------------------


def _simulate(U: SetDescriptor, grid: GridSpec, s: Scenario, keep: list[float], sequential: bool):
    cfg = replace(s.solver, sequential=sequential or s.solver.sequential)
    kept: dict[float, GridField] = {}

    def sink(fld: GridField):
        if any(abs(fld.time - t) <= 1e-9 * max(1.0, t) for t in keep):
            kept[float(fld.time)] = fld

    final = run(rasterize(U, grid), s.reaction, cfg, sink)
    return kept, final


def doubling_gap(s: Scenario, final: GridField, sequential: bool = False) -> float:
    """Largest ROI difference at the horizon between the scenario grid and a
    grid of twice the extent."""
    big = doubled_grid(s)
    _, wide = _simulate(s.set, big, s, [], sequential)
    lo, hi = s.roi
    a, b = _roi_values(final, lo, hi), _roi_values(wide, lo, hi)
    if a.shape != b.shape:
        raise ScenarioError("doubled grid does not reproduce the ROI cells")
    return float(np.max(np.abs(a - b)))


def run_scenario(s: Scenario | str, out=None, doubling: bool = True,
                 sequential: bool = False) -> tuple[DiagnosticsReport, Verdict]:
    """Simulate, execute the plan and decide every predicate.

    With ``doubling`` the run is repeated on a grid of twice the extent and a
    ROI disagreement above ``DOUBLING_TOL`` raises :class:`ScenarioError`.
    """
    if isinstance(s, str):
        s = load_scenario(s)
    start = time.perf_counter()
    s.solver.check(s.grid, s.reaction)
    runs = {}
    runs["main"], final = _simulate(s.set, s.grid, s, s.times("main"), sequential)
    for name, U in s.references.items():
        runs[name], _ = _simulate(U, s.grid, s, s.times(name) or [s.horizon], sequential)
    gap = None
    if doubling:
        gap = doubling_gap(s, final, sequential)
        if not gap <= DOUBLING_TOL:
            raise ScenarioError(f"{s.id}: boundary contamination {gap:.3e} in the ROI exceeds "
                                f"{DOUBLING_TOL:g} (measured by doubling the domain)")
    ctx = _Context(s, runs)
    report = DiagnosticsReport()
    results = []
    for op in s.plan:
        try:
            vals = _op_values(op, ctx, report)
        except (ParameterError, ScenarioError, ValueError) as exc:
            results.append(PredicateResult(op["name"], INCONCLUSIVE, f"not evaluable: {exc}", []))
            continue
        status, detail = decide(op.get("predicate", {}), vals)
        results.append(PredicateResult(op["name"], status, detail, vals))
        for t, v in vals:
            report.values[f"{op['name']}@{t:g}"] = v
    if ctx._zeta is not None:
        for t, z in sorted(ctx._zeta.items()):
            report.add_series("zeta", t, z)
    report.validate()
    verdict = Verdict(s.id, s.claim, results, gap, time.perf_counter() - start)
    if out is not None:
        write_outputs(Path(out), s, report, verdict, runs["main"])
    return report, verdict


def write_outputs(out: Path, s: Scenario, report: DiagnosticsReport, verdict: Verdict,
                  snapshots: dict[float, GridField]) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = [report.to_json(out / "report.json")]
    files += report.to_csv(out / "series")
    p = out / "verdict.json"
    p.write_text(json.dumps(verdict.to_dict(), indent=2))
    files.append(p)
    p = out / "summary.txt"
    p.write_text(verdict.summary() + "\n")
    files.append(p)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for t, fld in sorted(snapshots.items()):
        files.append(write_kppg(snap_dir / f"u_t{t:08.3f}.kppg", fld))
    p = out / "scenario.json"
    p.write_text(json.dumps(s.to_dict(), indent=2))
    files.append(p)
    return files
