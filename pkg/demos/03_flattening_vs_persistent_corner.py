"""From a square the front rounds off and flattens; from a V it keeps a corner on the axis."""
from kpplab.scenarios import run_scenario

# Without the domain-doubling check each run takes well under a minute
reports = {}
for sid in ("convex-2d", "vshape-2d"):
    reports[sid], verdict = run_scenario(sid, doubling=False)
    print(verdict.summary())
    print()

for t, sup, where in reports["convex-2d"].sigma_stats[2]:
    print(f"square, t={t:g}: sup |sigma_2| = {sup:.2e} at {tuple(round(float(c), 1) for c in where)}")
for sid, rep in reports.items():
    for t, x, d in rep.planarity:
        print(f"{sid}, t={t:g}: probe {tuple(round(float(c), 1) for c in x)}, planarity defect {d:.4f}")
