import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kreinres.charfn import charfn_F
from kreinres.measure import layered_measure, make_discrete_string, total_mass, zero_string
from kreinres.spectra import (SearchRegion, charpoly, cross_validate, gk15, single_mass_roots,
                              spectrum_contour, spectrum_poly, spectrum_to_json)

# roots of (i/4) z^3 - z^2/2 - i z + 1, hand-derived for masses 1/2 at 0 and at 1 on [0, 1]
# and solved with numpy.roots before the solvers were written
FROZEN_TWO_MASS = [-1.7214332372471377 - 0.3522011287389582j,
                   -1.2955977425220837j,
                   1.7214332372471353 - 0.3522011287389578j]


def test_charpoly_examples():
    assert np.allclose(charpoly(zero_string(1.0)), [1])
    c = charpoly(make_discrete_string([1.0], [2.0], 1.0))
    assert np.allclose(np.trim_zeros(c, "b"), [1, -2j])
    c = charpoly(make_discrete_string([0.5], [1.0], 1.0))
    r = np.roots(np.trim_zeros(c, "b")[::-1])
    assert sorted(r, key=lambda z: z.real) == pytest.approx([-1 - 1j, 1 - 1j], abs=1e-14)


def test_charpoly_constant_term_and_values():
    s = make_discrete_string([0.1, 0.4, 0.9], [0.3, 0.5, 0.2], 1.0)
    c = charpoly(s)
    assert c[0] == 1
    for z in (0.3 - 0.2j, 2 + 1j, -1.5j):
        assert np.polynomial.polynomial.polyval(z, c) == pytest.approx(charfn_F(s, z).F, abs=1e-13)


def test_double_root_poly():
    roots = spectrum_poly(make_discrete_string([0.0], [4.0], 1.0))
    assert len(roots) == 1 and roots[0].multiplicity == 2
    assert abs(roots[0].omega + 0.5j) < 1e-7


def test_poly_single_mass_at_zero():
    roots = spectrum_poly(make_discrete_string([0.0], [0.8], 1.0))
    expect = [-1 - 0.5j, 1 - 0.5j]
    assert [q.omega for q in roots] == pytest.approx(expect, abs=1e-14)


def test_frozen_two_mass_roots():
    roots = spectrum_poly(make_discrete_string([0.0, 1.0], [0.5, 0.5], 1.0))
    # a mass at l lowers the degree by one: three roots
    assert [q.omega for q in roots] == pytest.approx(FROZEN_TWO_MASS, abs=1e-12)


def test_sorted_by_alpha_then_beta():
    s = make_discrete_string([0.1, 0.5, 0.8], [0.7, 0.2, 0.4], 1.0)
    roots = spectrum_poly(s)
    keys = [(round(q.alpha, 12), round(q.beta, 12)) for q in roots]
    assert keys == sorted(keys)


def test_contour_single_mass():
    roots = spectrum_contour(make_discrete_string([0.5], [1.0], 1.0), SearchRegion(0, 2, 0.5, 2))
    assert len(roots) == 1 and roots[0].multiplicity == 1
    assert abs(roots[0].omega - (1 - 1j)) < 1e-12


def test_contour_layer():
    roots = spectrum_contour(layered_measure([[0, 1, 4.0]], 1.0), SearchRegion(1, 2, 0.1, 0.5))
    assert len(roots) == 1
    assert abs(roots[0].omega - (math.pi / 2 - 0.25j * math.log(3))) < 1e-10


def test_contour_double_root():
    roots = spectrum_contour(make_discrete_string([0.0], [4.0], 1.0), SearchRegion(-1, 1, 0.1, 1))
    assert len(roots) == 1 and roots[0].multiplicity == 2
    assert abs(roots[0].omega + 0.5j) < 1e-7


def test_contour_boundary_root_nudged():
    # root 1 - i lies exactly on the edge alpha = 1
    roots = spectrum_contour(make_discrete_string([0.5], [1.0], 1.0), SearchRegion(1, 2, 0.5, 2))
    assert len(roots) == 1 and abs(roots[0].omega - (1 - 1j)) < 1e-12


def test_single_mass_closed_forms():
    for m0, x0 in [(1.0, 0.5), (0.3, 0.0), (2.0, 0.9), (1.5, 1.0)]:
        s = make_discrete_string([x0], [m0], 1.0)
        for z in single_mass_roots(m0, x0, 1.0):
            assert abs(charfn_F(s, z).F) < 1e-13


def test_region_validation():
    with pytest.raises(ValueError):
        SearchRegion(0, 1, 0, 1)
    with pytest.raises(ValueError):
        SearchRegion(1, 0, 0.1, 1)


def test_cross_validate_zero_measure():
    cv = cross_validate(zero_string(1.0), SearchRegion(-1, 1, 0.1, 1))
    assert cv.ok and cv.poly == [] and cv.contour == []


def test_gk15_exact_for_polynomials():
    val, err = gk15(lambda x: x ** 10 + 3 * x ** 3, 0.0, 2.0)
    assert val == pytest.approx(2 ** 11 / 11 + 12, rel=1e-14)


def test_json_output():
    roots = spectrum_poly(make_discrete_string([0.5], [1.0], 1.0))
    assert '"multiplicity": 1' in spectrum_to_json(roots)


@st.composite
def strings(draw):
    """Strings on a 1e-3 lattice: nearly coincident atoms put roots beyond double precision."""
    n = draw(st.integers(1, 4))
    pos = draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n, unique=True))
    mas = draw(st.lists(st.floats(0.05, 1.5), min_size=n, max_size=n))
    return make_discrete_string([p / 1000 for p in pos], mas, 1.0)


@given(strings())
def test_roots_in_lower_half_plane(s):
    c = charpoly(s)
    for q in spectrum_poly(s):
        assert q.omega.imag < 0 and q.omega != 0
        # backward error relative to the coefficient scale at |omega|
        scale = np.sum(np.abs(c) * abs(q.omega) ** np.arange(len(c)))
        assert q.residual <= 1e-12 * scale


@given(strings())
def test_mirror_symmetry(s):
    roots = [q.omega for q in spectrum_poly(s)]
    for w in roots:
        assert min(abs(-w.conjugate() - v) for v in roots) < 1e-7 * (1 + abs(w))


@given(strings())
def test_imaginary_roots_bound(s):
    M = total_mass(s)
    for q in spectrum_poly(s):
        if abs(q.alpha) <= 1e-7 * (1 + abs(q.omega)):
            assert q.beta >= 1 / M * (1 - 1e-9)
            if not (s.n == 1 and s.positions[0] == 1.0):
                assert q.beta > 1 / M * (1 + 1e-12)


@given(strings())
def test_symmetric_region_pairs(s):
    region = SearchRegion(-4, 4, 0.05, 4)
    cv = cross_validate(s, region)
    assert cv.ok and cv.max_distance < 1e-8
    roots = [q.omega for q in cv.contour]
    for w in roots:
        if region.contains(-w.conjugate(), 1e-6):
            assert min(abs(-w.conjugate() - v) for v in roots) < 1e-8


def test_winding_invariant_under_refinement():
    m = layered_measure([[0.2, 1, 3.0]], 1.0, point_masses=[[0.5, 0.4]])
    big = spectrum_contour(m, SearchRegion(-6, 6, 0.05, 3))
    parts = (spectrum_contour(m, SearchRegion(-6, 0.013, 0.05, 3))
             + spectrum_contour(m, SearchRegion(0.013, 6, 0.05, 3)))
    assert sum(q.multiplicity for q in big) == sum(q.multiplicity for q in parts)
    assert sorted(q.omega.real for q in big) == pytest.approx(sorted(q.omega.real for q in parts), abs=1e-10)
