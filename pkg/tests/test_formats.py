import numpy as np
import pytest

from gcm import formats
from gcm.exceptions import ConfigError, DimensionMismatch
from gcm.model import CovarianceTriple, SpectralModel


def test_spectrum_round_trip(tmp_path):
    model = SpectralModel(np.array([3.0, 1.0, 0.25]), np.array([0.5, 0.0, 1 / 3]), 2.0, 1.5)
    path = tmp_path / "spec.csv"
    formats.write_spectrum(model, path)
    text = path.read_text()
    assert text.splitlines()[:2] == ["# rho=2.0 gamma=1.5 d=3", "omega,teacher_projection"]
    back = formats.read_spectrum(path)
    np.testing.assert_array_equal(back.eigenvalues, model.eigenvalues)
    np.testing.assert_array_equal(back.teacher_projection, model.teacher_projection)
    assert (back.rho, back.gamma) == (2.0, 1.5)


def test_spectrum_errors():
    with pytest.raises(ConfigError):
        formats.spectrum_from_csv("")
    with pytest.raises(ConfigError):
        formats.spectrum_from_csv("omega,teacher_projection\n1,1\n")
    with pytest.raises(DimensionMismatch):
        formats.spectrum_from_csv("# rho=1 gamma=1 d=2\nomega,teacher_projection\n1,1\n")


def test_matrix_csv_round_trip_is_exact():
    mat = np.random.default_rng(0).standard_normal((4, 3))
    back = formats.matrix_from_csv(formats.matrix_to_csv(mat))
    np.testing.assert_array_equal(back, mat)


def test_matrix_csv_errors():
    with pytest.raises(ConfigError):
        formats.matrix_from_csv("1,2\n")
    with pytest.raises(DimensionMismatch):
        formats.matrix_from_csv("# rows=2 cols=2\n1,2\n")
    with pytest.raises(DimensionMismatch):
        formats.matrix_from_csv("# rows=1 cols=2\n1,2,3\n")


def test_binary_layout():
    mat = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    blob = formats.matrix_to_bytes(mat)
    assert blob[:8] == b"GCMMAT01"
    assert int.from_bytes(blob[8:16], "little") == 2
    assert int.from_bytes(blob[16:24], "little") == 3
    assert np.frombuffer(blob[24:32], "<f8")[0] == 1.0
    assert len(blob) == 24 + 6 * 8
    np.testing.assert_array_equal(formats.matrix_from_bytes(blob), mat)
    with pytest.raises(ConfigError):
        formats.matrix_from_bytes(b"NOTAMAT!" + blob[8:])
    with pytest.raises(DimensionMismatch):
        formats.matrix_from_bytes(blob[:-8])


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal((10, 4)), rng.standard_normal(10)
    formats.write_dataset(x, y, tmp_path / "data.bin")
    fx, fy = formats.read_dataset(tmp_path / "data.bin")
    np.testing.assert_array_equal(fx, x)
    np.testing.assert_array_equal(fy, y)
    formats.write_matrix(np.ones((3, 1)), tmp_path / "short.csv")
    with pytest.raises(DimensionMismatch):
        formats.read_dataset(tmp_path / "short.csv")


@pytest.mark.parametrize("binary", [False, True])
def test_triple_bundle_round_trip(tmp_path, binary):
    rng = np.random.default_rng(2)
    g = rng.standard_normal((7, 9))
    full = g @ g.T / 7 + 0.1 * np.eye(7)
    tr = CovarianceTriple(full[:4, :4], full[:4, 4:], full[4:, 4:], rng.standard_normal(4))
    formats.write_triple(tr, tmp_path / "bundle", binary=binary)
    back = formats.read_triple(tmp_path / "bundle")
    for name in ("psi", "phi", "omega", "theta0"):
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))


def test_incomplete_bundle(tmp_path):
    (tmp_path / "b").mkdir()
    with pytest.raises(ConfigError):
        formats.read_triple(tmp_path / "b")
