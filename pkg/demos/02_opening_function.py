"""The opening function: how much of U a point sees beyond its nearest boundary point."""
import numpy as np

from kpplab.geometry import opening, opening_profile, predict_E
from kpplab.geometry.sets import Ball, ConvexPolytope, HalfSpace, Subgraph, VShape

box = ConvexPolytope.box([0, 0], [10, 10])
V = VShape(1.0)
print("box, from (15, 5):", opening(box, [15.0, 5.0]))      # convex: nothing beyond the tangent plane
print("half-space, from (0, 3):", opening(HalfSpace([0, 1]), [0.0, 3.0]))
print("V-shape, on the axis (0, 4):", opening(V, [0.0, 4.0]))  # sees the other arm head on

# sup of O over the level set dist(x, U) = R
for name, U in [("V-shape", V), ("sqrt subgraph", Subgraph.from_expr("sqrt(abs(x))", lipschitz_like=1.0))]:
    prof = opening_profile(U, [10, 40, 160], directions=32)
    print(name, [(R, round(v, 3)) for R, v in prof])

# Directions x - xi over far level sets approximate the direction set E
for name, U, R in [("ball", Ball([0, 0], 1), 50), ("half-space", HalfSpace([0, 1]), 10), ("V-shape", V, 50)]:
    E = predict_E(U, R, 256)
    angles = np.degrees(np.arctan2(E.directions[:, 1], E.directions[:, 0]))
    print(f"{name}: {len(E.directions)} directions, angles in [{angles.min():.0f}, {angles.max():.0f}] deg, "
          f"largest gap {E.max_angular_gap():.1f} deg")
