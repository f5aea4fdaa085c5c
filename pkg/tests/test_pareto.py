import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kreinres.charfn import charfn_F
from kreinres.measure import total_mass
from kreinres.pareto import (a1_nonexistence_demo, beta1_closed_form, brute_force_frontier,
                             empirical_csv, frontier_csv, optimal_string_small_freq,
                             solve_frontier_point, sweep_frontier)

from oracles import slsqp_min_beta

# alpha = 2, m = l = 1: frozen after agreement of the chart solver, the string-space
# optimiser and the brute-force envelope
FROZEN_ALPHA2_BETA = 0.19875314021532
FROZEN_ALPHA2_STRING = ([0.0, 1.0], [0.33627648, 0.66372352])


@pytest.mark.parametrize("alpha,m,ell,beta", [
    (0.0, 1.0, 1.0, 1.0),
    (1.0, 1.0, 1.0, 0.5),
    (0.5, 1.0, 1.0, 1 + math.sqrt(0.75)),
])
def test_beta1_examples(alpha, m, ell, beta):
    assert beta1_closed_form(alpha, m, ell) == pytest.approx(beta, rel=1e-7)


def test_beta1_scaling():
    # beta scales like 1/l at fixed alpha l and m/l
    for a in (0.2, 0.7, 1.0):
        assert beta1_closed_form(a / 2, 2.0, 2.0) == pytest.approx(beta1_closed_form(a, 1.0, 1.0) / 2)


def test_optimal_string_examples():
    s = optimal_string_small_freq(1.0, 1.0, 1.0)
    assert s.positions.tolist() == [0.0] and s.masses[0] == pytest.approx(0.8)
    s = optimal_string_small_freq(0.5, 1.0, 1.0)
    assert s.masses[0] == pytest.approx(1.0)
    assert s.positions[0] == pytest.approx(1 - 1 / (2 + math.sqrt(3)))


@given(st.floats(0.01, 0.999))
@settings(max_examples=40)
def test_optimal_string_is_a_root(alpha):
    s = optimal_string_small_freq(alpha, 1.0, 1.0)
    w = complex(alpha, -beta1_closed_form(alpha, 1.0, 1.0))
    assert abs(charfn_F(s, w).F) < 1e-10
    assert total_mass(s) <= 1.0 + 1e-12


def test_zero_frequency_point():
    p = solve_frontier_point(0.0, 2.0, 3.0)
    assert (p.alpha, p.beta) == (0.0, 0.5)
    assert p.string.positions.tolist() == [3.0] and p.string.masses.tolist() == [2.0]


def test_small_frequency_point():
    p = solve_frontier_point(1.0, 1.0, 1.0)
    assert p.beta == pytest.approx(0.5, abs=1e-12)
    assert p.n == 1 and p.string.masses[0] == pytest.approx(0.8)


def test_mirror_frequency():
    assert solve_frontier_point(-0.5, 1.0, 1.0).beta == pytest.approx(solve_frontier_point(0.5, 1.0, 1.0).beta)


@pytest.fixture(scope="module")
def alpha2():
    return solve_frontier_point(2.0, 1.0, 1.0)


def test_frozen_alpha2(alpha2):
    assert alpha2.beta == pytest.approx(FROZEN_ALPHA2_BETA, abs=1e-10)
    assert alpha2.string.positions.tolist() == pytest.approx(FROZEN_ALPHA2_STRING[0], abs=1e-9)
    assert alpha2.string.masses.tolist() == pytest.approx(FROZEN_ALPHA2_STRING[1], abs=1e-7)
    assert alpha2.boundary_residual < 1e-9 and alpha2.mass_residual < 1e-9


def test_alpha2_against_string_space_optimiser(alpha2):
    beta2, pos2, mu2 = slsqp_min_beta(2.0, 2, starts=40)
    assert beta2 == pytest.approx(alpha2.beta, abs=1e-8)
    assert np.sort(pos2).tolist() == pytest.approx(FROZEN_ALPHA2_STRING[0], abs=1e-5)
    # a third mass does not help
    beta3 = slsqp_min_beta(2.0, 3, starts=40, seed=3)[0]
    assert beta3 >= alpha2.beta - 1e-8


def test_alpha2_against_brute_force(alpha2):
    table = brute_force_frontier(3, 20000, 1.0, 1.0, alpha_bins=np.array([1.99, 2.01]), seed=3)
    right_edge = solve_frontier_point(2.01, 1.0, 1.0).beta
    assert table.counts[0] > 0
    assert table.min_beta[0] >= right_edge - 1e-4


def test_frontier_point_structure(alpha2):
    rep = alpha2.structure
    assert rep.ok, rep.failures()
    assert rep.checks["constraint_touching"]


def test_sweep_small_grid():
    pts = sweep_frontier([0.2, 0.5, 0.8], 1.0, 1.0)
    for p in pts:
        assert p.beta == pytest.approx(beta1_closed_form(p.alpha, 1.0, 1.0), abs=1e-10)
    assert sweep_frontier([], 1.0, 1.0) == []


def test_sweep_dominance():
    # beta_min is nonincreasing on a run of frequencies past the small-frequency range
    pts = sweep_frontier([1.6, 2.0, 2.5, 3.0], 1.0, 1.0)
    betas = [p.beta for p in pts]
    assert all(b1 > b2 for b1, b2 in zip(betas, betas[1:]))


@given(st.floats(0.05, 0.99), st.integers(0, 10_000))
@settings(max_examples=15)
def test_no_random_string_beats_the_frontier(alpha, seed):
    rng = np.random.default_rng(seed)
    b = beta1_closed_form(alpha, 1.0, 1.0)
    # random one- and two-mass strings: roots near alpha never sit below beta_1
    table = brute_force_frontier(2, 256, 1.0, 1.0, alpha_bins=np.array([alpha - 0.01, alpha + 0.01]),
                                 seed=int(rng.integers(1 << 30)))
    if table.counts[0]:
        assert table.min_beta[0] >= beta1_closed_form(min(alpha + 0.01, 1.0), 1.0, 1.0) - 1e-9
    assert b > 0


def test_empty_bins_are_nan():
    table = brute_force_frontier(1, 64, 1.0, 1.0, alpha_bins=np.array([50.0, 51.0]))
    assert table.counts[0] == 0 and math.isnan(table.min_beta[0])
    assert empirical_csv(table).splitlines()[-1].split(",")[1] == ""


def test_nonexistence_demo():
    rows = a1_nonexistence_demo(1.0, 1.0, [4.0, 16.0, 64.0])
    assert rows[0].omega_formula.imag == pytest.approx(-math.log(3.0))
    d = [r.distance for r in rows]
    assert d[0] > d[1] > d[2] > 0
    for r in rows:
        assert abs(r.omega_contour - r.omega_formula) < 1e-9


def test_nonexistence_demo_rejects_bad_density():
    with pytest.raises(ValueError):
        a1_nonexistence_demo(1.0, 1.0, [0.5])


def test_frontier_csv_columns(alpha2):
    text = frontier_csv([solve_frontier_point(0.5, 1.0, 1.0), alpha2])
    head, r1, r2 = text.splitlines()
    assert head.split(",") == ["alpha", "beta", "n", "a_1", "a_2", "mu_1", "mu_2", "source", "residual"]
    assert r1.split(",")[4] == "" and r2.split(",")[2] == "2"
