"""``kpplab`` command line: simulate, geometry, fronts, diagnose, scenario.

Exit status: 0 on success, 1 when a scenario verdict is FAIL (or
INCONCLUSIVE), 2 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, KPPLabError

DEFAULT_SEED = 42


# -- manifests ---------------------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    started: str
    finished: str = ""
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    command: list[str] = field(default_factory=list)

    def write(self, directory: Path) -> Path:
        p = directory / "manifest.json"
        p.write_text(json.dumps(self.__dict__, indent=2))
        return p


def config_hash(config: dict, files=()) -> str:
    """SHA-256 over the canonical JSON of ``config`` and the bytes of ``files``."""
    h = hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode())
    for f in files:
        h.update(Path(f).read_bytes())
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _run_dir(out: Path, run_id: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    d = out / run_id / stamp
    d.mkdir(parents=True, exist_ok=False)
    return d


def _finish(d: Path, manifest: RunManifest) -> None:
    manifest.finished = _now()
    manifest.outputs = sorted(str(p.relative_to(d)) for p in d.rglob("*")
                              if p.is_file() and p.name != "manifest.json")
    manifest.write(d)


def _load_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from exc


def _window(text: str | None, dim: int, what: str = "--window"):
    """``lo1,lo2:hi1,hi2``."""
    if text is None:
        return None
    try:
        lo, hi = text.split(":")
    except ValueError as exc:
        raise ConfigError(f"{what}: expected 'lo1,lo2,...:hi1,hi2,...'") from exc
    lo, hi = np.array(_floats(lo, what)), np.array(_floats(hi, what))
    if lo.shape != (dim,) or hi.shape != (dim,):
        raise ConfigError(f"{what}: need {dim} coordinates on each side")
    return lo, hi


# -- simulate ------------------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .geometry.serialize import descriptor_from_dict, load_descriptor
    from .grid import GridSpec
    from .io import SnapshotWriter
    from .reaction import reaction_from_dict
    from .solver import SolverConfig, rasterize, run

    cfg_path = Path(args.config)
    doc = _load_json(cfg_path)
    known = {"id", "set", "set_file", "grid", "reaction", "solver", "seed"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"{cfg_path}: unknown field(s) {sorted(extra)}")
    inputs = [str(cfg_path)]
    if "set_file" in doc:
        set_path = (cfg_path.parent / doc["set_file"]).resolve()
        U = load_descriptor(set_path)
        inputs.append(str(set_path))
    elif "set" in doc:
        U = descriptor_from_dict(doc["set"], base=cfg_path.parent, where=f"{cfg_path}: set")
    else:
        raise ConfigError(f"{cfg_path}: missing field 'set' (or 'set_file')")
    if "grid" not in doc or "solver" not in doc:
        raise ConfigError(f"{cfg_path}: missing field 'grid' or 'solver'")
    try:
        grid = GridSpec.from_dict(doc["grid"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg_path}: grid: {exc}") from exc
    f = reaction_from_dict(doc.get("reaction", "logistic"))
    solver = SolverConfig.from_dict({**doc["solver"], **({"sequential": True} if args.sequential else {})})
    run_id = str(doc.get("id", cfg_path.stem))
    d = _run_dir(Path(args.out), run_id)
    manifest = RunManifest(config_hash(doc, inputs[1:]), __version__, _now(), inputs=inputs,
                           seed=int(doc.get("seed", DEFAULT_SEED)), command=["simulate", *args.argv])
    writer = SnapshotWriter(d / "snapshots")
    final = run(rasterize(U, grid), f, solver, writer)
    (d / "config.json").write_text(json.dumps(doc, indent=2))
    _finish(d, manifest)
    print(f"{len(writer.paths)} snapshots to {d}; final t={final.time:g}, "
          f"max u={final.values.max():.6f}")
    return 0


# -- geometry ------------------------------------------------------------------------------------------


def cmd_geometry(args) -> int:
    from .geometry import (
        OpeningSampler,
        hausdorff,
        load_descriptor,
        opening,
        opening_profile,
        predict_E,
        save_descriptor,
    )

    U = load_descriptor(args.set)
    if args.action == "opening":
        sampler = OpeningSampler(seed=args.seed)
        if args.radii:
            radii = _floats(args.radii, "--radii")
            prof = opening_profile(U, radii, directions=args.samples, sampler=sampler, seed=args.seed)
            for R, v in zip(radii, prof):
                print(f"R={R:g}\tsup O={v:.6f}")
            return 0
        if not args.point:
            raise ConfigError("geometry opening needs --point or --radii")
        x = np.array(_floats(args.point, "--point"))
        if x.size != U.dim:
            raise ConfigError(f"--point: need {U.dim} coordinates")
        print(f"{opening(U, x, sampler):.6f}")
        return 0
    if args.action == "erode":
        if args.delta is None:
            raise ConfigError("geometry erode needs --delta")
        V = U.erode(args.delta, window=_window(args.window, U.dim), h=args.h)
        if args.output:
            save_descriptor(V, args.output)
            print(f"eroded set written to {args.output}")
        else:
            print(json.dumps(V.to_dict()) if V.kind != "raster" else f"raster, {int(V.mask.bits.sum())} cells")
        return 0
    if args.action == "hausdorff":
        if not args.other or not args.window:
            raise ConfigError("geometry hausdorff needs --other and --window")
        V = load_descriptor(args.other)
        est = hausdorff(U, V, _window(args.window, U.dim), h=args.h)
        print(f"{est.value:.6f}\t({est.method})")
        return 0
    # predict-e
    R = args.R if args.R is not None else (max(_floats(args.radii, "--radii")) if args.radii else 50.0)
    E = predict_E(U, R, samples=args.samples, seed=args.seed)
    print(json.dumps(E.summary(), indent=2))
    return 0


# -- fronts ---------------------------------------------------------------------------------------------


def cmd_fronts(args) -> int:
    from .fronts import build_supersolution, shoot_profile
    from .reaction import get_reaction, minimal_speed

    f = get_reaction(args.reaction)
    c = minimal_speed(f) if args.c is None else args.c
    if args.action == "profile":
        prof = shoot_profile(f, c)
        out = Path(args.output or f"profile_{f.name}_c{c:g}.csv")
        prof.to_csv(out)
        print(f"c={c:g} nodes={len(prof.phi)} residual={prof.residual():.3e} "
              f"monotone={prof.is_monotone()} -> {out}")
        return 0
    prof = shoot_profile(f, minimal_speed(f))
    v = build_supersolution(prof, args.lam, c, args.T, args.eps, dim=args.dim, seed=args.seed)
    out = Path(args.output or f"supersolution_c{c:g}.json")
    v.to_json(out)
    print(f"n={v.n} R={v.R:.6f} c={c:g} T={args.T:g} -> {out}")
    return 0


# -- diagnose ------------------------------------------------------------------------------------------


def cmd_diagnose(args) -> int:
    from .diagnostics import (
        DiagnosticsReport,
        extract_profile,
        front_position_1d,
        hessian_sigma,
        planarity_defect,
    )
    from .fronts import fit_front_position, shoot_profile
    from .io import load_snapshots
    from .reaction import get_reaction, minimal_speed

    snaps = load_snapshots(args.snapshots)
    if not snaps:
        raise ConfigError(f"{args.snapshots}: no snap_*.kppg snapshots found")
    report = DiagnosticsReport()
    dim = snaps[0].ndim
    if args.action == "speed":
        curve = [(s.time, front_position_1d(s, args.level)) for s in snaps if s.time >= args.t_min]
        fit = fit_front_position(curve)
        report.speed_fit = fit
        for t, x in curve:
            report.add_series("front_position", t, x)
        print(f"speed={fit.speed:.5f} log_coef={fit.log_coef:.4f} shift={fit.shift:.4f} rms={fit.rms:.2e}")
    elif args.action == "sigma":
        g = snaps[0].grid
        win = _window(args.window, dim) or (g.lower + 3 * np.asarray(g.spacing),
                                            g.upper - 3 * np.asarray(g.spacing))
        for s in snaps:
            if s.time < 1.0:
                continue
            st = hessian_sigma(s, args.k, win, level_band=(0.01, 0.99))
            report.sigma_stats.setdefault(args.k, []).append((s.time, st.sup_abs, st.argmax))
            print(f"t={s.time:g}\tsup|sigma_{args.k}|={st.sup_abs:.4e}\tat {st.argmax}")
    else:
        if not args.point:
            raise ConfigError(f"diagnose {args.action} needs --point")
        x = np.array(_floats(args.point, "--point"))
        if x.size != dim:
            raise ConfigError(f"--point: need {dim} coordinates")
        if args.action == "planarity":
            for s in snaps:
                p = planarity_defect(s, x, args.radius)
                report.planarity.append((s.time, tuple(x), p.defect))
                tag = "flat" if p.flat else f"defect={p.defect:.4f}"
                print(f"t={s.time:g}\t{tag}\tdirection={np.round(p.direction, 4).tolist()}")
        else:
            if not args.direction:
                raise ConfigError("diagnose profile needs --direction")
            e = np.array(_floats(args.direction, "--direction"))
            f = get_reaction(args.reaction)
            front = shoot_profile(f, minimal_speed(f))
            for s in snaps:
                m = extract_profile(s, x, e, args.half_length).compare(front)
                report.add_series("profile_distance", s.time, m.distance)
                print(f"t={s.time:g}\tdistance={m.distance:.4e}\tshift={m.shift:.4f}\tfront={m.is_front}")
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        report.to_json(d / f"{args.action}.json")
        report.to_csv(d)
    return 0


# -- scenarios -----------------------------------------------------------------------------------------


def cmd_scenario(args) -> int:
    from .scenarios import CATALOG, FAIL, PASS, list_scenarios, load_scenario, run_scenario

    if args.action == "list":
        for sid in list_scenarios():
            s = load_scenario(sid)
            print(f"{sid}\t{s.claim}")
        return 0
    if not args.id:
        raise ConfigError("scenario run needs an ID (or 'all')")
    ids = list_scenarios() if args.id == "all" else [args.id]
    worst = 0
    for sid in ids:
        s = load_scenario(sid)
        src = Path(sid) if Path(sid).suffix else CATALOG / f"{sid}.json"
        d = _run_dir(Path(args.out), s.id)
        manifest = RunManifest(config_hash(s.to_dict()), __version__, _now(), inputs=[str(src)],
                               seed=s.seed, command=["scenario", "run", *args.argv])
        _, verdict = run_scenario(s, out=d, doubling=not args.no_doubling, sequential=args.sequential)
        _finish(d, manifest)
        print(verdict.summary())
        print(f"  -> {d}")
        if verdict.overall != PASS:
            worst = max(worst, 1)
    if len(ids) > 1:
        print(f"{len(ids)} scenarios, {'all PASS' if worst == 0 else 'not all PASS'}")
    return worst


# -- parser ----------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kpplab", description="Fisher-KPP invasion laboratory")
    p.add_argument("--version", action="version", version=f"kpplab {__version__}")
    p.add_argument("--sequential", action="store_true", help="single-threaded reference mode")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the solver from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("geometry", help="opening function, erosion, Hausdorff distance, direction sets")
    g.add_argument("action", choices=["opening", "erode", "hausdorff", "predict-e"])
    g.add_argument("--set", required=True)
    g.add_argument("--point")
    g.add_argument("--radii", help="comma-separated radii (opening profile / predict-e)")
    g.add_argument("--R", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--other")
    g.add_argument("--window", help="lo1,lo2:hi1,hi2")
    g.add_argument("--h", type=float)
    g.add_argument("--samples", type=int, default=64)
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("--output")
    g.set_defaults(func=cmd_geometry)

    fr = sub.add_parser("fronts", help="traveling fronts and supersolutions")
    fr.add_argument("action", choices=["profile", "supersolution"])
    fr.add_argument("--reaction", default="logistic")
    fr.add_argument("--c", type=float)
    fr.add_argument("--lam", type=float, default=0.1)
    fr.add_argument("--eps", type=float, default=0.2)
    fr.add_argument("--T", type=float, default=10.0)
    fr.add_argument("--dim", type=int, default=2)
    fr.add_argument("--seed", type=int, default=DEFAULT_SEED)
    fr.add_argument("--output")
    fr.set_defaults(func=cmd_fronts)

    dg = sub.add_parser("diagnose", help="diagnostics on a snapshot directory")
    dg.add_argument("action", choices=["sigma", "planarity", "speed", "profile"])
    dg.add_argument("--snapshots", required=True)
    dg.add_argument("--k", type=int, default=2)
    dg.add_argument("--window")
    dg.add_argument("--point")
    dg.add_argument("--direction")
    dg.add_argument("--radius", type=float)
    dg.add_argument("--half-length", type=float, default=15.0)
    dg.add_argument("--level", type=float, default=0.5)
    dg.add_argument("--t-min", type=float, default=1.0)
    dg.add_argument("--reaction", default="logistic")
    dg.add_argument("--out")
    dg.set_defaults(func=cmd_diagnose)

    sc = sub.add_parser("scenario", help="run catalog scenarios")
    sc.add_argument("action", choices=["run", "list"])
    sc.add_argument("id", nargs="?")
    sc.add_argument("--out", default="out")
    sc.add_argument("--no-doubling", action="store_true", help="skip the doubled-domain contamination test")
    sc.set_defaults(func=cmd_scenario)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    args.argv = argv
    try:
        return args.func(args)
    except KPPLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
