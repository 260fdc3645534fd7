import math

import numpy as np
import pytest

from sumext.measures import AtomicMeasure, Box, InputError, normalize, read_atoms


def test_normalize_two_atoms():
    mu = normalize([[-5.0], [5.0]], [1.0, 1.0], [0.0, 1.0], 1, 2.0)
    assert np.allclose(mu.locations.ravel(), [0.45, 0.55])
    assert mu.frame.scale == pytest.approx(100.0)
    assert np.allclose(mu.frame.inverse(mu.locations).ravel(), [-5, 5])


def test_normalize_single_atom_goes_to_center():
    mu = normalize([[3.0, -1.0]], [2.0], [1.0], 1, 3.0)
    assert np.allclose(mu.locations, [[0.5, 0.5]])


def test_normalize_empty_is_an_error():
    with pytest.raises(InputError):
        normalize(np.zeros((0, 1)), [], [], 1, 2.0)


def test_duplicates_merge():
    mu = normalize([[0.0], [0.0], [1.0]], [1.0, 3.0, 1.0], [0.0, 4.0, 0.0], 1, 2.0)
    assert len(mu) == 2
    assert mu.values[0] == pytest.approx(3.0)
    assert mu.merge_log


def test_duplicate_infinite_conflict():
    with pytest.raises(InputError, match="infeasible"):
        normalize([[0.0], [0.0]], [math.inf, math.inf], [0.0, 1.0], 1, 2.0)


def test_restrict_and_mass():
    mu = AtomicMeasure(np.array([[0.1], [0.2], [0.8]]), [2.0, 3.0, 1.0], [0, 0, 0])
    assert len(mu.restrict(Box([0.0], [0.5]))) == 2
    assert len(mu.restrict(Box([0.3], [0.5]))) == 0
    assert mu.mass(Box([0.0], [0.5])) == 5.0
    assert mu.mass(Box([0.3], [0.5])) == 0.0
    inf = AtomicMeasure(np.array([[0.1]]), [math.inf], [0.0])
    assert math.isinf(inf.mass(Box([0.0], [1.0])))


def test_scale():
    mu = AtomicMeasure(np.array([[0.1]]), [4.0], [1.0])
    assert mu.scale(1.0, 2.0).weights[0] == 4.0
    assert mu.scale(3.0, 2.0).weights[0] == 36.0
    with pytest.raises(ValueError):
        mu.scale(0.0, 2.0)


def test_csv_errors_name_the_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,weight,value\n0,1,0\n1,-1,3\n")
    with pytest.raises(InputError, match=r"bad.csv:3"):
        read_atoms(p)


def test_json_reader(tmp_path):
    p = tmp_path / "a.json"
    p.write_text('[{"x": [0.0], "w": "inf", "f": 1}, {"x": [1.0], "w": 2, "f": 0}]')
    x, w, f = read_atoms(p)
    assert x.shape == (2, 1) and math.isinf(w[0]) and f[0] == 1.0
