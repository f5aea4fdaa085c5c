import cmath
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kreinres.billiard import (HyperbolaFrame, InfeasibleParameters, check_structure, hyperbola_point,
                               inner, ray_hyperbola_intersect, reconstruct)
from kreinres.charfn import phi_at_vertices
from kreinres.measure import make_discrete_string
from kreinres.pareto import solve_frontier_point

DEGENERATE = HyperbolaFrame(-math.pi / 2)


def test_hyperbola_vertices():
    f = HyperbolaFrame(0.3)
    assert hyperbola_point(f, 0.0, 1) == 1
    assert hyperbola_point(f, 0.0, -1) == -1


def test_hyperbola_identity_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        f = HyperbolaFrame(rng.uniform(-math.pi / 2, math.pi / 2))
        s = rng.uniform(-50, 50)
        z = hyperbola_point(f, s, 1 if rng.uniform() < 0.5 else -1)
        assert abs(z * z - (1 + 1j * f.p * s)) < 1e-12 * (1 + abs(s))


def test_frame_range_and_normal():
    assert DEGENERATE.p == -1j and DEGENERATE.degenerate
    with pytest.raises(ValueError):
        HyperbolaFrame(math.pi / 2)
    f = HyperbolaFrame.from_normal(cmath.exp(2.0j))
    assert -math.pi / 2 <= f.xi < math.pi / 2
    assert abs(abs(f.p) - 1) < 1e-14


def test_ray_tangent_no_hit():
    f = HyperbolaFrame(0.2)
    # at the vertex 1 the tangent of Hyp+ is the direction i p
    assert ray_hyperbola_intersect(1 + 0j, 1j * f.p, f) is None


def test_ray_degenerate_example_matches_scan():
    w = 1 - 1j
    v = -w * w * 1.0
    hit = ray_hyperbola_intersect(1 + 0j, v, DEGENERATE)
    t = np.linspace(1e-9, 100, 200001)
    im = ((1 + t * v) ** 2).imag
    crossings = np.nonzero(np.sign(im[1:]) != np.sign(im[:-1]))[0]
    assert hit is None and crossings.size == 0


@given(st.floats(-1.5, 1.5), st.builds(complex, st.floats(-3, 3), st.floats(-3, 3)),
       st.builds(complex, st.floats(-3, 3), st.floats(-3, 3)))
def test_ray_hit_on_line(xi, phi0, v):
    if abs(v) < 1e-3:
        return
    f = HyperbolaFrame(xi)
    hit = ray_hyperbola_intersect(phi0, v, f)
    if hit is None:
        return
    z = phi0 + hit.t * v
    assert hit.t > 0
    assert abs(inner(z * z - 1, f.p)) < 1e-12 * max(1.0, abs(z) ** 2)
    # nothing earlier: the quadratic has no smaller positive root
    ts = np.linspace(0, hit.t, 50)[1:-1]
    vals = [inner((phi0 + t * v) ** 2 - 1, f.p) for t in ts]
    c0 = inner(phi0 * phi0 - 1, f.p)
    if abs(c0) > 1e-9:
        assert all(np.sign(x) == np.sign(c0) for x in vals if abs(x) > 1e-9)


def test_reconstruct_single_mass_at_zero():
    w = 1 - 0.5j
    r = reconstruct(w, 0.8, DEGENERATE, 1.0, 1.0)
    assert r.n == 1 and r.string.positions[0] == 0 and r.string.masses[0] == pytest.approx(0.8)
    assert abs(r.boundary_residual) < 1e-10
    assert check_structure(r).ok


def test_reconstruct_case1():
    r = reconstruct(1 - 1j, 1.0, HyperbolaFrame(0.0), 1.0, 1.0)
    assert r.case == "case1"
    assert r.string.positions[0] == pytest.approx(0.5) and r.string.masses[0] == 1.0
    rep = check_structure(r)
    assert rep.ok, rep.failures()


def test_reconstruct_rejects_wrong_quadrant():
    with pytest.raises(ValueError):
        reconstruct(-1 - 1j, 1.0, DEGENERATE, 1.0, 1.0)
    with pytest.raises(ValueError):
        reconstruct(1 + 1j, 1.0, DEGENERATE, 1.0, 1.0)


def test_negative_mass_certificate():
    with pytest.raises(InfeasibleParameters) as exc:
        reconstruct(3.85 - 1.46j, 0.56, HyperbolaFrame(-0.7), 1.0, 1.0)
    cert = exc.value.certificate()
    assert cert["reason"] == "negative interior mass" and cert["infeasible"]


def test_runaway_guard():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        w = complex(rng.uniform(0.1, 20), -rng.uniform(0.01, 0.5))
        try:
            reconstruct(w, rng.uniform(0.01, 1), HyperbolaFrame(rng.uniform(-1.5, 1.5)), 1.0, 1.0, n_max=3)
        except InfeasibleParameters as exc:
            assert exc.reason in {"runaway: too many masses", "negative interior mass",
                                  "branch alternation violated", "mass budget exceeded",
                                  "negative terminal mass", "coincident or vanishing masses",
                                  "degenerate frame cannot have an interior vertex",
                                  "degenerate frame allows only a_2 = l after a_1 = 0"}


@pytest.fixture(scope="module")
def interior_vertex_point():
    # alpha = 4, m = l = 1: two masses with the second inside (0, l)
    p = solve_frontier_point(4.0, 1.0, 1.0)
    assert p.n == 2 and p.string.positions[1] < 1.0
    return p


def test_two_routes_to_the_mode_agree(interior_vertex_point):
    r = interior_vertex_point.reconstruction
    t = phi_at_vertices(r.string, r.omega)
    assert np.max(np.abs(t.values - r.vertices)) < 1e-12
    for z in r.vertices:
        assert abs(r.frame.offset(z * z)) < 1e-11


def test_reflection_law_negative_control(interior_vertex_point):
    r = interior_vertex_point.reconstruction
    assert check_structure(r).residuals["reflection_residual"] < 1e-9
    mu = r.string.masses.copy()
    mu[1] *= 1.01
    bad = dataclasses.replace(r, string=make_discrete_string(r.string.positions, mu, r.ell))
    rep = check_structure(bad)
    assert rep.residuals["reflection_residual"] > 1e-3
    assert not rep.ok


def test_degenerate_frame_shape():
    # two masses with a_2 = l on the degenerate frame
    alpha = 2.0
    beta = alpha * alpha - math.sqrt(alpha ** 4 - alpha ** 2)
    m1 = 1 / (alpha * alpha - beta * beta)
    r = reconstruct(complex(alpha, -beta), m1, DEGENERATE, 1.0, 1.0, end_tol=1e-9)
    assert r.n == 2 and r.string.positions.tolist() == [0.0, 1.0]
    assert r.string.masses[1] == pytest.approx(beta / (alpha ** 2 + beta ** 2), rel=1e-9)
    rep = check_structure(r)
    assert rep.checks["degenerate_shape"]
    assert r.trajectory.phi_l.real >= 0 and r.trajectory.phi_l.imag > 0
