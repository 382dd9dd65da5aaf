import time

import numpy as np
import pytest
from hypothesis import settings

from kpplab.reaction import logistic

settings.register_profile("kpplab", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("kpplab")


@pytest.fixture(scope="session")
def f_log():
    return logistic()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def ball_run(f_log):
    """Quarter-plane run from the disk of radius 3 at h=0.1; snapshots t = 0, 10, 20, 30, 40."""
    from kpplab.geometry.sets import Ball
    from kpplab.grid import GridSpec
    from kpplab.solver import SnapshotList, SolverConfig, rasterize, run

    g = GridSpec.from_box([0, 0], [90, 90], 0.1)
    snaps = SnapshotList()
    start = time.perf_counter()
    run(rasterize(Ball([0, 0], 3), g), f_log, SolverConfig(dt=0.002, horizon=40, snapshot_every=10), snaps)
    snaps.elapsed = time.perf_counter() - start
    return snaps


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
