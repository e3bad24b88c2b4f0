from pathlib import Path

import numpy as np
import pytest

from icann.datasets import (
    DegenerateData,
    MonotonicityError,
    ParseError,
    AnalyticMaterial,
    add_noise,
    denormalize,
    example1,
    generate_reference,
    ingest_csv,
    normalize,
    path_of,
    stress_max,
    uniaxial_experiment,
    write_csv,
)
from icann.drivers import surrogate_training_path

FIXTURE = Path(__file__).parent / "fixtures" / "vhb_uniaxial.csv"


@pytest.fixture(scope="module")
def exp1():
    return generate_reference(example1(), surrogate_training_path(), label="ex1")


def test_reference_shapes(exp1):
    assert exp1.S.shape == (341, 6) and exp1.F.shape == (341, 3, 3)
    assert exp1.s_max == 1.0 and not exp1.uniaxial
    np.testing.assert_array_equal(exp1.S[0], 0.0)


def test_csv_roundtrip_is_lossless(exp1, tmp_path):
    e = normalize(exp1)
    write_csv(e, tmp_path / "a.csv")
    back = ingest_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.t, e.t)
    np.testing.assert_array_equal(back.F, e.F)
    np.testing.assert_array_equal(back.S, e.S)
    assert back.s_max == e.s_max and back.label == "ex1"
    assert back.meta == e.meta
    np.testing.assert_array_equal(path_of(back).C, path_of(e).C)


def test_normalize_roundtrip(exp1):
    e = normalize(exp1)
    assert stress_max(e) == 1.0
    assert e.s_max == stress_max(exp1)
    np.testing.assert_array_max_ulp(denormalize(e).S, exp1.S, maxulp=1)
    twice = normalize(e)
    assert twice.s_max == e.s_max


def test_noise_statistics(exp1):
    n = add_noise(exp1, seed=3)
    resid = (n.S - exp1.S).ravel()
    sigma = 0.02 * stress_max(exp1)
    assert abs(resid.mean()) < 4 * sigma / np.sqrt(resid.size)
    assert resid.std() == pytest.approx(sigma, rel=0.05)
    np.testing.assert_array_equal(add_noise(exp1, seed=3).S, n.S)
    assert add_noise(exp1, 0.0) is exp1
    with pytest.raises(ValueError):
        add_noise(exp1, -1.0)


def test_degenerate_data():
    e = uniaxial_experiment([0.0, 1.0], [1.0, 1.1], [0.0, 0.0])
    with pytest.raises(DegenerateData):
        normalize(e)


def test_uniaxial_roundtrip(tmp_path):
    e = uniaxial_experiment([0.0, 0.3, 1.1], [1.0, 1.2, 1.1], [0.0, 2.5, 1.0], "u", stress_unit="kPa")
    write_csv(e, tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "t,F11,S11"
    back = ingest_csv(tmp_path / "u.csv")
    assert back.uniaxial and back.stress_unit == "kPa"
    np.testing.assert_array_equal(back.stretch, e.stretch)
    np.testing.assert_array_equal(back.S[:, 0], e.S[:, 0])
    with pytest.raises(ValueError):
        path_of(back)


def test_vhb_fixture():
    e = ingest_csv(FIXTURE)
    assert e.uniaxial and e.stress_unit == "kPa"
    assert np.ptp(np.diff(e.t)) > 0.1  # irregular sampling
    n = normalize(e)
    assert n.s_max == 27.988124
    # scaling there and back is exact up to one rounding
    np.testing.assert_array_max_ulp(denormalize(n).S[:, 0], e.S[:, 0], maxulp=1)


@pytest.mark.parametrize(
    "text,exc,line",
    [
        ("", ParseError, 1),
        ("a,b,c\n1,2,3\n", ParseError, 1),
        ("t,F11,S11\n0,1,0\n1,1\n", ParseError, 3),
        ("t,F11,S11\n0,1,0\n1,x,2\n", ParseError, 3),
        ("t,F11,S11\n0,1,0\n1,nan,2\n", ParseError, 3),
        ("t,F11,S11\n", ParseError, 2),
        ("t,F11,S11\n0,1,0\n0,1.1,2\n", MonotonicityError, None),
    ],
)
def test_ingest_errors(tmp_path, text, exc, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(exc) as info:
        ingest_csv(p)
    if line is not None:
        assert info.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        ingest_csv(tmp_path / "nope.csv")


def test_analytic_material_validation():
    with pytest.raises(ValueError):
        AnalyticMaterial(-1.0, 1.0, "none")
    with pytest.raises(ValueError):
        AnalyticMaterial(1.0, 1.0, "tresca")
