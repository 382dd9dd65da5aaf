import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kpplab.errors import ConfigError, DomainError, ParameterError
from kpplab.geometry.edt import edt, edt_brute_force, squared_edt
from kpplab.geometry.metrics import (OpeningSampler, dist, erode, hausdorff, opening, opening_profile,
                                     predict_E, profile_is_monotone, projections, vgm_check)
from kpplab.geometry.serialize import descriptor_from_dict, load_descriptor, save_descriptor
from kpplab.geometry.sets import (Ball, ConvexPolytope, EmptySet, HalfSpace, Raster, Subgraph, Union, VShape,
                                  rasterize_mask)
from kpplab.grid import GridSpec

from oracles import boundary_dist_brute, opening_brute

V = VShape(1.0)


# -- dist / projections -------------------------------------------------------


def test_dist_examples():
    assert dist(Ball([0, 0], 2), [3, 4]) == pytest.approx(3.0)  # [TRIVIAL]
    assert dist(HalfSpace([0, 0, 1]), [0, 0, 2.5]) == pytest.approx(2.5)  # [TRIVIAL]
    # [DERIVED] dense boundary sampling of both branches
    s = np.linspace(-50, 50, 200_001)
    boundary = np.stack([s, np.abs(s)], axis=1)
    oracle = boundary_dist_brute(np.array([[0.0, 4.0]]), boundary)[0]
    assert dist(V, [0, 4]) == pytest.approx(oracle, abs=1e-6)
    assert dist(V, [0, 4]) == pytest.approx(4 / math.sqrt(2), abs=1e-12)


def test_dist_empty_is_inf():
    assert dist(EmptySet(2), [1, 1]) == math.inf


def test_projection_examples():
    assert np.allclose(projections(Ball([0, 0], 2), [5, 0]).points, [[2, 0]])
    assert np.allclose(projections(HalfSpace([0, 1]), [3, 1]).points, [[3, 0]])
    # [DERIVED] reflect-and-minimize: minimise over each branch separately
    pts = projections(V, [0, 4]).points
    oracle = []
    for sgn in (1, -1):
        s = np.linspace(-10, 10, 200_001) * sgn
        s = s[s * sgn >= 0]
        b = np.stack([s, np.abs(s)], axis=1)
        oracle.append(b[np.argmin(np.linalg.norm(b - [0, 4], axis=1))])
    got = sorted(map(tuple, np.round(pts, 4)))
    assert got == sorted(map(tuple, np.round(oracle, 4)))
    assert got == [(-2.0, 2.0), (2.0, 2.0)]


def test_projection_inside_is_domain_error():
    with pytest.raises(DomainError):
        projections(Ball([0, 0], 2), [0.5, 0])


@given(st.floats(-20, 20), st.floats(0.1, 30), st.sampled_from(["ball", "half", "v", "box"]))
def test_projection_distance_consistency(a, b, kind):
    U = {"ball": Ball([1, -2], 3), "half": HalfSpace([1, 2], 1.0), "v": VShape(0.7),
         "box": ConvexPolytope.box([-3, -3], [2, 4])}[kind]
    x = np.array([a, b + 10])
    if U.contains(x):
        return
    P = projections(U, x, 1e-9)
    d = dist(U, x)
    for xi in P.points:
        assert abs(np.linalg.norm(x - xi) - d) <= 1e-9


def test_subgraph_dist_against_sampling():
    U = Subgraph.from_expr("sqrt(abs(x))", lipschitz_like=1.0)
    pts = np.array([[0.0, 5.0], [3.0, 4.0], [-7.0, 10.0], [20.0, 4.5]])
    s = np.linspace(-60, 60, 600_001)
    boundary = np.stack([s, np.sqrt(np.abs(s))], axis=1)
    assert np.allclose(U.dist(pts), boundary_dist_brute(pts, boundary), atol=1e-4)


# -- erode / hausdorff --------------------------------------------------------


def test_erode_closed_forms():
    b = erode(Ball([0, 0], 3), 1)
    assert isinstance(b, Ball) and b.radius == 2
    h = erode(HalfSpace([0, 1]), 2)
    assert h.contains([0, -2]) and not h.contains([0, -1.9])
    assert erode(Ball([0, 0], 0.5), 1).is_empty
    with pytest.raises(ParameterError):
        erode(Ball([0, 0], 1), 0)


def test_raster_square_erosion():
    # [DERIVED] analytic erosion of [0,10]^2 by 1 is [1,9]^2
    g = GridSpec.from_box([-1, -1], [11, 11], 0.1)
    sq = rasterize_mask(ConvexPolytope.box([0, 0], [10, 10]), g)
    er = erode(sq, 1.0)
    exact = rasterize_mask(ConvexPolytope.box([1, 1], [9, 9]), g)
    tol = 0.1 * math.sqrt(2)
    assert hausdorff(er, exact, ([-1, -1], [11, 11])).value <= tol
    # corners: (0,0) is sqrt(2) away from [1,9]^2
    assert abs(hausdorff(sq, er, ([-1, -1], [11, 11])).value - math.sqrt(2)) <= tol


def test_hausdorff_examples():
    w = ([-4, -4], [4, 4])
    assert hausdorff(Ball([0, 0], 3), Ball([0, 0], 2), w, h=0.02).value == pytest.approx(1.0, abs=1e-3)
    assert hausdorff(Ball([0, 0], 3), Ball([0, 0], 3), w).value == 0.0
    assert hausdorff(EmptySet(2), EmptySet(2), w).value == 0.0
    assert hausdorff(EmptySet(2), Ball([0, 0], 1), w).value == math.inf


@given(st.floats(0.2, 2.0), st.floats(2.5, 6.0))
def test_erosion_hausdorff_consistency_ball(delta, r):
    B = Ball([0.3, -0.2], r)
    w = ([-7, -7], [7, 7])
    assert hausdorff(B, erode(B, delta), w, h=0.05).value == pytest.approx(delta, abs=1e-2)


@given(st.floats(0.2, 1.5))
def test_erosion_hausdorff_polytope_corner(delta):
    # right-angle corners put the far point at delta * sqrt(2)
    P = ConvexPolytope.box([0, 0], [6, 4])
    d = hausdorff(P, erode(P, delta), ([-1, -1], [7, 5]), h=0.05).value
    assert d == pytest.approx(delta * math.sqrt(2), abs=1e-2)


@given(st.floats(0.2, 3.0))
def test_erosion_hausdorff_half_space(delta):
    H = HalfSpace([1, 1])
    d = hausdorff(H, erode(H, delta), ([-5, -5], [5, 5]), h=0.05).value
    assert d <= delta * (1 + 1e-6) + 0.05


# -- EDT -----------------------------------------------------------------------


@given(st.integers(1, 24), st.integers(1, 24), st.floats(0.01, 0.6), st.integers(0, 2**31))
def test_edt_matches_brute_force(n, m, p, seed):
    mask = np.random.default_rng(seed).random((n, m)) < p
    assert np.array_equal(squared_edt(mask, (0.5, 0.25)), edt_brute_force(mask, (0.5, 0.25)) ** 2) or \
        np.allclose(edt(mask, (0.5, 0.25)), edt_brute_force(mask, (0.5, 0.25)), rtol=0, atol=1e-12)


def test_edt_64_exact():
    rng = np.random.default_rng(3)
    for p in (0.001, 0.02, 0.3):
        mask = rng.random((64, 64)) < p
        assert np.array_equal(edt(mask), edt_brute_force(mask))


def test_edt_3d_and_empty():
    rng = np.random.default_rng(5)
    mask = rng.random((9, 8, 7)) < 0.05
    assert np.allclose(edt(mask, (1, 2, 0.5)), edt_brute_force(mask, (1, 2, 0.5)), atol=1e-12)
    assert np.all(np.isinf(edt(np.zeros((4, 4), bool))))


# -- opening -------------------------------------------------------------------


def test_opening_half_space():
    # [DERIVED] brute force: sup is the limit along the boundary plane
    x = [0, 3]
    oracle = opening_brute(HalfSpace([0, 1]), x, [[0, 0]], 400, 400)
    got = opening(HalfSpace([0, 1]), x)
    assert got == pytest.approx(0.0, abs=1e-3)
    assert got >= oracle - 1e-3


def test_opening_ball_negative_oracle():
    # [DERIVED] dense boundary sampling; sup over y on the circle is the limit y -> xi, i.e. 0-
    B = Ball([0, 0], 1)
    th = np.linspace(1e-4, 2 * np.pi - 1e-4, 200_001)
    y = np.stack([np.cos(th), np.sin(th)], 1)
    xi = np.array([1.0, 0.0])
    oracle = float(np.max(((y - xi) @ xi) / np.linalg.norm(y - xi, axis=1)))
    got = opening(B, [3, 0])
    assert got < 0.0
    assert oracle < 0.0 and got == pytest.approx(oracle, abs=1e-3)


def test_opening_vshape_matches_oracle():
    # [DERIVED] sin(2 alpha) = 1 for beta = 1, confirmed by brute force
    for h in (1.0, 4.0, 25.0):
        xis = projections(V, [0, h]).points
        oracle = opening_brute(V, [0, h], xis, 720, 300)
        got = opening(V, [0, h])
        assert got == pytest.approx(oracle, abs=1e-2)
        assert got == pytest.approx(1.0, abs=1e-2)


def test_opening_conventions():
    assert opening(EmptySet(2), [1, 1]) == -math.inf
    assert opening(Ball([0, 0], 0), [1, 1]) == -math.inf
    with pytest.raises(DomainError):
        opening(Ball([0, 0], 1), [0, 0])


@given(st.floats(0, 2 * math.pi), st.floats(0.1, 20))
def test_convex_opening_nonpositive(theta, r):
    P = ConvexPolytope.box([-2, -1], [3, 2])
    x = np.array([0.5, 0.5]) + (r + 4) * np.array([math.cos(theta), math.sin(theta)])
    assert opening(P, x, OpeningSampler(angles=180, shells=32)) <= 1e-3


def test_opening_profiles():
    P = ConvexPolytope.box([0, 0], [10, 10])
    assert all(v <= 1e-3 for _, v in opening_profile(P, [1, 5, 20], directions=32))
    vp = opening_profile(V, [5, 10, 20, 40], directions=32)
    assert all(v == pytest.approx(1.0, abs=1e-2) for _, v in vp)
    sg = opening_profile(Subgraph.from_expr("sqrt(abs(x))", lipschitz_like=1.0), [10, 40, 160], directions=64)
    vals = [v for _, v in sg]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] <= 0.15 + 0.02


@pytest.mark.parametrize("U", [V, Ball([0, 0], 2), Subgraph.from_expr("sqrt(abs(x))", lipschitz_like=1.0),
                               Union([Ball([0, 0], 1), Ball([6, 0], 1)])])
def test_opening_profile_monotone(U):
    prof = opening_profile(U, [2, 5, 10, 20, 40], directions=32)
    assert profile_is_monotone(prof, 2e-3)


def test_hausdorff_stability_of_limit_sign():
    # a bounded translation keeps the sign of the large-R opening limit
    a = opening_profile(V, [40], directions=32)[0][1]
    Vt = Union([HalfSpace([-1, 1], 0.7), HalfSpace([1, 1], 0.7)])
    b = opening_profile(Vt, [40], directions=32)[0][1]
    assert abs(a - b) <= 0.1 and np.sign(a) == np.sign(b)


# -- E prediction / VGM --------------------------------------------------------


def test_predict_E_examples():
    ball = predict_E(Ball([0, 0], 1), 50, 512)
    assert ball.max_angular_gap() < 15
    hs = predict_E(HalfSpace([0, 1]), 10, 64)
    assert np.max(np.abs(hs.directions - [0, 1])) <= 1e-6
    sg = predict_E(Subgraph.from_expr("sqrt(abs(x))", lipschitz_like=1.0), 200, 256)
    assert sg.max_angle_from([0, 1]) <= 10
    assert predict_E(EmptySet(2), 5).empty


def test_vgm_examples():
    r = vgm_check(np.sin, [1, 10, 100])
    assert r.decaying and r.sup_ratios[0] <= 2.0 and r.sup_ratios[2] <= 0.02 + 1e-9
    r = vgm_check(lambda x: np.sqrt(np.abs(x)), [1, 10, 100, 1000])
    ratios = np.array(r.sup_ratios)
    assert r.decaying
    # Hoelder: |sqrt a - sqrt b| <= sqrt|a-b|, so ratio <= s^{-1/2}
    assert np.all(ratios <= np.array([1, 10, 100, 1000]) ** -0.5 + 1e-9)
    r = vgm_check(lambda x: 0.5 * x, [1, 10, 100])
    assert not r.decaying and np.allclose(r.sup_ratios, 0.5)


# -- serialization ---------------------------------------------------------------


@pytest.mark.parametrize("U", [HalfSpace([0, 2], 1.0), Ball([1, 2], 3), ConvexPolytope.box([0, 0], [1, 2]),
                               VShape(0.5), Subgraph.from_expr("2*sin(x/4)", lipschitz_like=3.0),
                               Union([Ball([0, 0], 1), HalfSpace([1, 0])]), EmptySet(3)])
def test_descriptor_roundtrip(U, tmp_path):
    p = save_descriptor(U, tmp_path / "u.json")
    W = load_descriptor(p)
    pts = np.random.default_rng(0).uniform(-5, 5, (50, U.dim))
    assert np.array_equal(U.contains(pts), W.contains(pts))
    assert np.allclose(U.dist(pts), W.dist(pts))


def test_raster_roundtrip(tmp_path):
    g = GridSpec.from_box([-3, -3], [3, 3], 0.25)
    R = rasterize_mask(Ball([0, 0], 2), g)
    W = load_descriptor(save_descriptor(R, tmp_path / "r.json"))
    assert isinstance(W, Raster) and np.array_equal(W.mask.bits, R.mask.bits)


def test_descriptor_errors(tmp_path):
    with pytest.raises(ConfigError):
        descriptor_from_dict({"kind": "blob"})
    with pytest.raises(ConfigError):
        descriptor_from_dict({"kind": "ball", "center": [0, 0]})
    (tmp_path / "bad.json").write_text('{"kind": "ball",\n "radius": }')
    with pytest.raises(ConfigError, match="line 2"):
        load_descriptor(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        load_descriptor(tmp_path / "missing.json")
