import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kreinres.measure import (Interval, LayeredDensity, MassBudget, MeasureError, StringDescription,
                              StringMeasure, a_star, description_from_dict, description_to_dict,
                              layered_measure, load_description, make_discrete_string,
                              parse_description, save_description, serialize_description,
                              total_mass, zero_string)


def test_identity_case():
    s = make_discrete_string([0.5], [1.0], 1.0)
    assert s.n == 1 and s.positions[0] == 0.5 and s.masses[0] == 1.0


def test_coincident_positions_merge():
    s = make_discrete_string([0.3, 0.3], [0.2, 0.5], 1.0)
    assert s.n == 1
    assert s.masses[0] == pytest.approx(0.7, abs=1e-15)


@pytest.mark.parametrize("pos,mass", [([0.2], [-1.0]), ([1.5], [1.0]), ([-0.1], [1.0]),
                                      ([float("nan")], [1.0]), ([0.2], [float("inf")]),
                                      ([0.1, 0.2], [1.0])])
def test_rejected_inputs(pos, mass):
    with pytest.raises(MeasureError):
        make_discrete_string(pos, mass, 1.0)


def test_zero_masses_dropped_and_sorted():
    s = make_discrete_string([0.9, 0.1, 0.5], [1.0, 2.0, 0.0], 1.0)
    assert s.positions.tolist() == [0.1, 0.9]
    assert s.masses.tolist() == [2.0, 1.0]


def test_immutable():
    s = make_discrete_string([0.5], [1.0], 1.0)
    with pytest.raises(ValueError):
        s.positions[0] = 0.1


def test_total_mass_examples():
    assert total_mass(zero_string(1.0)) == 0.0
    assert total_mass(make_discrete_string([1.0], [1.0], 1.0)) == 1.0
    m = layered_measure([[0, 1, 4.0]], 1.0, point_masses=[[0.2, 0.5]])
    assert total_mass(m) == pytest.approx(4.5)


def test_a_star_examples():
    assert a_star(zero_string(1.0)) == 1.0
    assert a_star(make_discrete_string([0.5], [1.0], 1.0)) == 0.5
    assert a_star(layered_measure([[0.25, 1, 1.0]], 1.0)) == 0.25
    # an atom at l also gives l, so "== l" does not imply a zero measure
    assert a_star(make_discrete_string([1.0], [1.0], 1.0)) == 1.0


def test_layers_validated():
    with pytest.raises(MeasureError):
        layered_measure([[0, 0.6, 1.0], [0.5, 1.0, 1.0]], 1.0)
    with pytest.raises(MeasureError):
        layered_measure([[0, 1.2, 1.0]], 1.0)
    with pytest.raises(MeasureError):
        layered_measure([[0, 0.5, -1.0]], 1.0)
    with pytest.raises(MeasureError):
        LayeredDensity(np.array([0.0, 0.5]), np.array([1.0]), Interval(1.0))
    with pytest.raises(MeasureError):
        Interval(0.0)
    with pytest.raises(MeasureError):
        MassBudget(-1.0)


def test_parts_share_interval():
    with pytest.raises(MeasureError):
        StringMeasure(zero_string(1.0), LayeredDensity.zero(Interval(2.0)))


positions = st.lists(st.floats(0, 1), min_size=0, max_size=6)


@st.composite
def atoms(draw):
    pos = draw(positions)
    # repeat some positions so merging is exercised
    pos = pos + pos[: draw(st.integers(0, len(pos)))]
    mas = draw(st.lists(st.floats(0, 3), min_size=len(pos), max_size=len(pos)))
    return pos, mas


@given(atoms())
def test_canonicalization_idempotent(a):
    s = make_discrete_string(*a, 1.0)
    again = make_discrete_string(s.positions, s.masses, 1.0)
    assert again == s


@given(atoms(), st.randoms(use_true_random=False))
def test_total_mass_permutation_invariant(a, rnd):
    pos, mas = a
    s = make_discrete_string(pos, mas, 1.0)
    idx = list(range(len(pos)))
    rnd.shuffle(idx)
    t = make_discrete_string([pos[i] for i in idx], [mas[i] for i in idx], 1.0)
    assert total_mass(t) == pytest.approx(total_mass(s), rel=1e-14, abs=1e-300)
    assert total_mass(s) == pytest.approx(math.fsum(mas), rel=1e-14, abs=1e-300)


@given(atoms())
def test_a_star_bounds(a):
    s = make_discrete_string(*a, 1.0)
    assert a_star(s) <= 1.0
    if s.n == 0:
        assert a_star(s) == 1.0
    else:
        # equals l for a nonzero measure only when the first atom sits at l
        assert a_star(s) == s.positions[0]


@given(atoms(), st.sampled_from(["json", "toml"]))
def test_description_round_trip(a, fmt):
    s = make_discrete_string(*a, 1.0)
    desc = StringDescription(StringMeasure(s, LayeredDensity.from_layers([[0.2, 0.7, 1.5]], Interval(1.0))),
                             MassBudget(2.0))
    text = serialize_description(desc, fmt)
    back = parse_description(text, fmt)
    assert back == desc
    assert serialize_description(back, fmt) == text


def test_unknown_field_named():
    with pytest.raises(MeasureError, match="point_mases"):
        description_from_dict({"length": 1.0, "point_mases": [[0.5, 1.0]]})


def test_field_errors_name_field():
    with pytest.raises(MeasureError, match="length"):
        description_from_dict({"point_masses": []})
    with pytest.raises(MeasureError, match="point_masses"):
        description_from_dict({"length": 1.0, "point_masses": [[2.0, 1.0]]})
    with pytest.raises(MeasureError, match="layers"):
        description_from_dict({"length": 1.0, "layers": [[0, 0.6, 1], [0.5, 1, 1]]})


def test_malformed_toml():
    with pytest.raises(MeasureError):
        parse_description("length = \n", "toml")


def test_file_round_trip(tmp_path):
    desc = description_from_dict({"length": 2.0, "budget": 1.0, "point_masses": [[0.5, 0.25]],
                                  "layers": [[1.0, 2.0, 0.5]]})
    for name in ("d.toml", "d.json"):
        save_description(desc, tmp_path / name)
        assert load_description(tmp_path / name) == desc
    assert json.loads((tmp_path / "d.json").read_text())["length"] == 2.0
    assert description_to_dict(desc)["point_masses"] == [[0.5, 0.25]]
