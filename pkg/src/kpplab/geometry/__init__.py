"""Geometry of the initial support: descriptors, distance transforms, opening function."""
from .edt import edt, edt_brute_force, squared_edt
from .sets import (
    Ball,
    ConvexPolytope,
    EmptySet,
    HalfSpace,
    ProjectionSet,
    Raster,
    SetDescriptor,
    Subgraph,
    Union,
    VShape,
    compile_gamma,
    fibonacci_sphere,
    lattice_points,
    rasterize_mask,
)
from .metrics import (
    DirectionSetEstimate,
    HausdorffEstimate,
    OpeningSampler,
    VGMReport,
    dist,
    erode,
    hausdorff,
    level_points,
    opening,
    opening_profile,
    predict_E,
    projections,
    vgm_check,
)
from .serialize import descriptor_from_dict, descriptor_to_dict, load_descriptor, save_descriptor
