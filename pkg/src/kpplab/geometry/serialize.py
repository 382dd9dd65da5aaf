"""JSON documents ``{"kind": ..., "dim": N, ...}`` for set descriptors.

Raster descriptors point at a KPPG bitmask file (``"path"``), resolved
relative to the JSON document when loaded from disk.
"""
from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigError
from ..grid import GridMask
from .sets import (
    Ball,
    ConvexPolytope,
    EmptySet,
    HalfSpace,
    Raster,
    SetDescriptor,
    Subgraph,
    Union,
    VShape,
)


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing field {key!r}")
    return d[key]


def descriptor_from_dict(d: dict, base: Path | None = None, where: str = "set") -> SetDescriptor:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = _need(d, "kind", where)
    try:
        if kind == "empty":
            return EmptySet(int(_need(d, "dim", where)))
        if kind == "half-space":
            return HalfSpace(_need(d, "normal", where), float(d.get("offset", 0.0)))
        if kind == "ball":
            return Ball(_need(d, "center", where), float(_need(d, "radius", where)))
        if kind == "convex-polytope":
            if "lower" in d:
                return ConvexPolytope.box(d["lower"], _need(d, "upper", where))
            hs = [HalfSpace(_need(h, "normal", f"{where}.halfspaces[{i}]"), float(h.get("offset", 0.0)))
                  for i, h in enumerate(_need(d, "halfspaces", where))]
            return ConvexPolytope(hs)
        if kind == "v-shape":
            return VShape(float(_need(d, "beta", where)), int(d.get("dim", 2)))
        if kind == "subgraph":
            return Subgraph.from_expr(str(_need(d, "gamma", where)), int(d.get("dim", 2)),
                                      lipschitz_like=float(d.get("M", 0.0)))
        if kind == "union":
            parts = [descriptor_from_dict(p, base, f"{where}.parts[{i}]")
                     for i, p in enumerate(_need(d, "parts", where))]
            return Union(parts)
        if kind == "raster":
            from ..io import read_kppg

            path = Path(_need(d, "path", where))
            if base is not None and not path.is_absolute():
                path = base / path
            mask = read_kppg(path)
            if not isinstance(mask, GridMask):
                raise ConfigError(f"{where}: {path} does not hold a bitmask payload")
            return Raster(mask, source=str(d["path"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown kind {kind!r}")


def descriptor_to_dict(U: SetDescriptor) -> dict:
    return U.to_dict()


def load_descriptor(path) -> SetDescriptor:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return descriptor_from_dict(doc, base=path.parent, where=str(path))


def save_descriptor(U: SetDescriptor, path) -> Path:
    """Write the JSON document; rasters also get a sibling ``.kppg`` mask."""
    path = Path(path)
    d = U.to_dict()
    if isinstance(U, Raster):
        from ..io import write_kppg

        mask_path = path.with_suffix(".kppg")
        write_kppg(mask_path, U.mask)
        d["path"] = mask_path.name
    path.write_text(json.dumps(d, indent=2))
    return path
