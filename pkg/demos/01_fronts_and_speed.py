"""Traveling fronts of the logistic equation and how fast a 1D invasion moves."""
import numpy as np

from kpplab.diagnostics import front_position_1d
from kpplab.fronts import fit_front_position, shoot_profile
from kpplab.geometry.sets import HalfSpace
from kpplab.grid import GridSpec
from kpplab.reaction import logistic, minimal_speed
from kpplab.solver import SnapshotList, SolverConfig, rasterize, run

f = logistic()
cstar = minimal_speed(f)
print("f'(0) =", f.deriv_at_0, " minimal speed c* =", cstar)

# The front phi(x - c t) goes from 1 to 0 and is pinned so that phi(0) = 1/2
for c in (cstar, 3.0, 5.0):
    prof = shoot_profile(f, c)
    print(f"c={c:g}: residual {prof.residual():.1e}, phi(-5)={float(prof(-5.0)):.4f}, phi(5)={float(prof(5.0)):.2e}")

# Faster fronts are flatter: their leading edge decays like exp(-lambda z) with smaller lambda
z = np.array([0.0, 2.0, 4.0, 8.0])
for c in (cstar, 3.0):
    print(f"c={c:g}:", np.round(shoot_profile(f, c)(z), 4))

# A step initial datum invades at c* with a logarithmic delay
g = GridSpec.from_box([0], [400], 0.1)
snaps = SnapshotList()
run(rasterize(HalfSpace([1.0], 10.0), g), f, SolverConfig(dt=2e-3, horizon=150, snapshot_every=1), snaps)
curve = [(s.time, front_position_1d(s)) for s in snaps if s.time >= 50]
fit = fit_front_position(curve)
print(f"fitted x(t) = {fit.speed:.3f} t + {fit.log_coef:.3f} ln t + {fit.shift:.2f}")
print("compare -3/c* =", -3 / cstar)
