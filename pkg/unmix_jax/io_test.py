import math

import numpy as np
import pytest
from jax import numpy as jnp
from jax import random as jr

from unmix_jax.errors import BadMagic, EmptyFile, IoError, ParseError, TruncatedFile, VersionUnsupported
from unmix_jax.io import (read_abundance, read_cube, read_curve_csv, read_library_csv, write_abundance, write_cube,
                          write_curve_csv, write_library_csv)
from unmix_jax.metrics import ConvergenceCurve
from unmix_jax.model import AbundanceMatrix, ImageCube
from unmix_jax.simdata import SpectralLibrary, synthetic_library


def test_read_library(tmp_path):
    path = tmp_path / "lib.csv"
    path.write_text("soil,grass\n0.1,0.2\n0.3,0.4\n0.5,0.6\n")
    lib = read_library_csv(path)
    assert lib.signatures.shape == (3, 2)
    assert lib.names == ("soil", "grass")
    assert lib.wavelengths is None
    assert jnp.allclose(lib.signatures[:, 1], jnp.array([0.2, 0.4, 0.6]))


def test_read_library_with_wavelengths(tmp_path):
    path = tmp_path / "lib.csv"
    path.write_text("wavelength,a,b\n400,1,2\n500,3,4\n")
    lib = read_library_csv(path)
    assert lib.signatures.shape == (2, 2)
    assert jnp.array_equal(lib.wavelengths, jnp.array([400.0, 500.0]))
    assert lib.names == ("a", "b")


def test_read_library_without_header(tmp_path):
    path = tmp_path / "lib.csv"
    path.write_text("1,2,3\n4,5,6\n")
    lib = read_library_csv(path)
    assert lib.signatures.shape == (2, 3)
    assert len(lib.names) == 3


def test_library_round_trip(tmp_path, seed=0):
    lib = synthetic_library(n_bands=30, n_signatures=5, seed=seed)
    write_library_csv(lib, tmp_path / "lib.csv")
    again = read_library_csv(tmp_path / "lib.csv")
    assert again.names == lib.names
    assert jnp.array_equal(again.signatures, lib.signatures)
    assert jnp.array_equal(again.wavelengths, lib.wavelengths)


def test_library_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(ParseError) as err:
        read_library_csv(path)
    assert (err.value.line, err.value.col) == (3, 2)

    path.write_text("")
    with pytest.raises(EmptyFile):
        read_library_csv(path)
    path.write_text("a,b\n")
    with pytest.raises(EmptyFile):
        read_library_csv(path)
    with pytest.raises(IoError):
        read_library_csv(tmp_path / "missing.csv")


def test_library_ragged_row(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("a,b\n1,2\n3,4,5\n")
    with pytest.raises(ParseError) as err:
        read_library_csv(path)
    assert (err.value.line, err.value.col) == (3, 3)


@pytest.mark.parametrize("cell", ["nan", "inf", "-inf", "NaN"])
def test_library_non_finite_cell(tmp_path, cell):
    path = tmp_path / "nonfinite.csv"
    path.write_text(f"a,b\n1,{cell}\n3,4\n")
    with pytest.raises(ParseError) as err:
        read_library_csv(path)
    assert (err.value.line, err.value.col) == (2, 2)
    assert err.value.value == cell


def test_cube_round_trip(tmp_path, seed=1):
    data = jr.normal(jr.PRNGKey(seed), (7, 12))
    cube = ImageCube.from_array(data, shape=(3, 4), wavelengths=jnp.linspace(400.0, 1000.0, 7))
    write_cube(tmp_path / "x.cube", cube)
    again = read_cube(tmp_path / "x.cube")
    assert jnp.array_equal(again.data, cube.data)
    assert jnp.array_equal(again.wavelengths, cube.wavelengths)
    assert again.shape == (3, 4)
    assert (tmp_path / "x.cube").stat().st_size == 24 + 8 * 7 + 8 * 7 * 12


def test_tiny_cube_round_trip(tmp_path):
    cube = ImageCube.from_array(jnp.array([[0.1]]))
    write_cube(tmp_path / "x.cube", cube)
    again = read_cube(tmp_path / "x.cube")
    assert jnp.array_equal(again.data, cube.data)
    assert again.wavelengths is None


def test_pixel_major_layout(tmp_path):
    cube = ImageCube.from_array(jnp.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]), shape=(1, 2))
    write_cube(tmp_path / "x.cube", cube)
    payload = np.frombuffer((tmp_path / "x.cube").read_bytes()[24:], dtype="<f8")
    assert payload.tolist() == [1.0, 3.0, 5.0, 2.0, 4.0, 6.0]


def test_abundance_round_trip(tmp_path, seed=2):
    for m in (1, 4):
        A = AbundanceMatrix.from_array(jr.uniform(jr.PRNGKey(seed), (m, 6)), shape=(2, 3))
        write_abundance(tmp_path / "a.truth", A)
        again = read_abundance(tmp_path / "a.truth")
        assert jnp.array_equal(again.data, A.data)
        assert again.shape == (2, 3)


def test_binary_errors(tmp_path):
    cube = ImageCube.from_array(jnp.ones((3, 4)), shape=(2, 2))
    path = tmp_path / "x.cube"
    write_cube(path, cube)
    with pytest.raises(BadMagic):
        read_abundance(path)

    payload = path.read_bytes()
    path.write_bytes(payload[:-8])
    with pytest.raises(TruncatedFile) as err:
        read_cube(path)
    assert err.value.actual_bytes == len(payload) - 8

    path.write_bytes(payload[:10])
    with pytest.raises(TruncatedFile):
        read_cube(path)

    path.write_bytes(payload[:4] + np.array([2], dtype="<u4").tobytes() + payload[8:])
    with pytest.raises(VersionUnsupported) as err:
        read_cube(path)
    assert err.value.version == 2


def make_curve(with_refs=True):
    return ConvergenceCurve(sweep=np.array([0, 1, 2]),
                            time_s=np.array([0.0, 0.125, 0.25]),
                            objective=np.array([3.0, 2.5, 1.0 / 3.0]),
                            re_db=np.array([-10.0, -50.5, -math.inf]) if with_refs else None,
                            nmse_db=None,
                            unconverged=np.array([5, 1, 0]) if with_refs else None)


def test_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    write_curve_csv(make_curve(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sweep,time_s,objective,re_db,nmse_db,unconverged"
    assert len(lines) == 4
    assert lines[3].split(",")[3] == "-inf"
    assert lines[3].split(",")[4] == ""

    again = read_curve_csv(path)
    curve = make_curve()
    assert np.array_equal(again.sweep, curve.sweep)
    assert np.array_equal(again.objective, curve.objective)
    assert np.array_equal(again.re_db, curve.re_db)
    assert np.array_equal(again.unconverged, curve.unconverged)
    assert again.nmse_db is None


def test_curve_csv_missing_columns(tmp_path):
    path = tmp_path / "curve.csv"
    write_curve_csv(make_curve(with_refs=False), path)
    again = read_curve_csv(path)
    assert again.re_db is None
    assert again.unconverged is None


def test_empty_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    write_curve_csv(ConvergenceCurve.empty(), path)
    assert path.read_text().splitlines() == ["sweep,time_s,objective,re_db,nmse_db,unconverged"]
    with pytest.raises(IoError):
        write_curve_csv(ConvergenceCurve.empty(), tmp_path / "missing" / "curve.csv")
