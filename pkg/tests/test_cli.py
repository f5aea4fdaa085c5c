import json
import subprocess
import sys

import pytest

from kreinres.cli import InputError, main, parse_grid, parse_region
from kreinres.measure import load_description


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture
def single_at_end(tmp_path):
    return write(tmp_path, "end.toml", "length = 1.0\npoint_masses = [[1.0, 1.0]]\n")


@pytest.fixture
def single_inside(tmp_path):
    return write(tmp_path, "mid.json", json.dumps({"length": 1.0, "budget": 1.0, "point_masses": [[0.5, 1.0]]}))


def test_parse_grid_inclusive():
    g = parse_grid("0:1:0.05")
    assert len(g) == 21 and g[0] == 0.0 and g[-1] == 1.0
    with pytest.raises(InputError):
        parse_grid("1:0:0.1")


def test_parse_region_errors():
    assert parse_region("-1,1,0.1,2").alpha_lo == -1
    with pytest.raises(InputError):
        parse_region("1,2,3")


def test_spectrum_mass_at_end(single_at_end, tmp_path):
    out = tmp_path / "s.json"
    assert main(["spectrum", "--input", str(single_at_end), "--region=-1,1,0.1,2", "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["poly"]) == 1
    r = doc["poly"][0]
    assert abs(complex(r["re"], r["im"]) + 1j) < 1e-12
    assert doc["cross_validation"]["ok"]


def test_spectrum_mass_inside(single_inside, tmp_path):
    out = tmp_path / "s.json"
    assert main(["spectrum", "--input", str(single_inside), "--region=0,2,0.1,2", "--output", str(out)]) == 0
    roots = json.loads(out.read_text())["contour"]
    assert len(roots) == 1 and abs(complex(roots[0]["re"], roots[0]["im"]) - (1 - 1j)) < 1e-10


def test_malformed_input_names_field(tmp_path, capsys):
    bad = write(tmp_path, "bad.toml", "length = 1.0\npoint_masses = [[2.0, 1.0]]\n")
    assert main(["spectrum", "--input", str(bad), "--region=0,1,0.1,1"]) == 2
    assert "point_masses" in capsys.readouterr().err
    bad = write(tmp_path, "bad2.toml", "length = 1.0\nmasses = []\n")
    assert main(["spectrum", "--input", str(bad), "--region=0,1,0.1,1"]) == 2
    assert "masses" in capsys.readouterr().err
    bad = write(tmp_path, "bad3.toml", "length = = 1\n")
    assert main(["spectrum", "--input", str(bad), "--region=0,1,0.1,1"]) == 2


def test_missing_region_is_usage_error(single_at_end):
    with pytest.raises(SystemExit) as exc:
        main(["spectrum", "--input", str(single_at_end)])
    assert exc.value.code == 2


def test_reconstruct_case1(tmp_path):
    out = tmp_path / "rec.json"
    code = main(["reconstruct", "--omega", "1,-1", "--m1", "1", "--xi", "0", "--mass", "1",
                 "--length", "1", "--output", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["positions"] == pytest.approx([0.5]) and doc["masses"] == pytest.approx([1.0])
    assert doc["structure"]["ok"]
    assert (tmp_path / "rec_trajectory.dat").exists() and (tmp_path / "rec_hyperbola.dat").exists()


def test_reconstruct_budget_from_input(single_inside, capsys):
    assert main(["reconstruct", "--input", str(single_inside), "--omega", "1,-1", "--m1", "1", "--xi", "0"]) == 0


def test_reconstruct_infeasible_certificate(capsys):
    code = main(["reconstruct", "--omega", "3.85,-1.46", "--m1", "0.56", "--xi", "-0.7",
                 "--mass", "1", "--length", "1"])
    assert code == 3
    cert = json.loads(capsys.readouterr().out)["infeasible"]
    assert cert["reason"] == "negative interior mass"


def test_reconstruct_bad_quadrant():
    assert main(["reconstruct", "--omega", "1,1", "--m1", "1", "--xi", "0", "--mass", "1", "--length", "1"]) == 2


def test_pareto_grid_and_stability(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["pareto", "--alpha", "0:1:0.05", "--output", str(a)]) == 0
    assert main(["pareto", "--alpha", "0:1:0.05", "--output", str(b)]) == 0
    lines = a.read_text().splitlines()
    assert len(lines) == 22 and lines[0].startswith("alpha,beta,n")
    assert a.read_bytes() == b.read_bytes()


def test_pareto_empirical(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["pareto", "--alpha", "0:1:0.5", "--empirical", "2000", "--n-max", "2", "--output", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "alpha_bin_center,min_beta,sample_count"


def test_pareto_empty_grid_is_input_error():
    assert main(["pareto", "--alpha", "0:1:0", "--mass", "1"]) == 2


@pytest.mark.parametrize("suite", ["small-freq", "perturbation"])
def test_verify_suites(suite, capsys):
    assert main(["verify", "--suite", suite]) == 0
    assert "ok" in capsys.readouterr().out


def test_verify_unknown_suite():
    assert main(["verify", "--suite", "nope"]) == 2


def test_round_trip_files(single_inside, tmp_path):
    desc = load_description(single_inside)
    from kreinres.measure import save_description
    toml_path = tmp_path / "copy.toml"
    save_description(desc, toml_path)
    assert load_description(toml_path) == desc


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "kreinres.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "spectrum" in r.stdout
