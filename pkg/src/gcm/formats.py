"""File formats for spectra, matrices and datasets.

Spectrum CSV::

    # rho=<float> gamma=<float> d=<int>
    omega,teacher_projection
    <omega_1>,<t_1>
    ...

Matrix CSV: a ``# rows=<R> cols=<C>`` line followed by R comma-separated
rows. Datasets use the same layout with the label in the last column.

Matrix binary: the 8 ASCII bytes ``GCMMAT01``, then rows and cols as
little-endian int64, then ``rows * cols`` little-endian float64 values in
row-major order.

A covariance bundle is a directory holding ``psi``, ``phi``, ``omega`` and
``theta0`` (a 1 x p or p x 1 matrix), each as ``.csv`` or ``.bin``.
"""

from __future__ import annotations

import csv
import io
import re
import struct
from pathlib import Path

import numpy as np

from .curves import format_float
from .exceptions import ConfigError, DimensionMismatch
from .model import CovarianceTriple, SpectralModel

MAGIC = b"GCMMAT01"
_HEADER_RE = re.compile(r"#\s*rows\s*=\s*(\d+)\s+cols\s*=\s*(\d+)")
_SPECTRUM_RE = re.compile(r"#\s*rho\s*=\s*(\S+)\s+gamma\s*=\s*(\S+)\s+d\s*=\s*(\d+)")


def spectrum_to_csv(model: SpectralModel) -> str:
    buf = io.StringIO()
    buf.write(f"# rho={format_float(model.rho)} gamma={format_float(model.gamma)} d={model.d}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("omega", "teacher_projection"))
    for w, t in zip(model.eigenvalues, model.teacher_projection):
        writer.writerow((format_float(w), format_float(t)))
    return buf.getvalue()


def spectrum_from_csv(text: str) -> SpectralModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("empty spectrum file")
    match = _SPECTRUM_RE.match(lines[0])
    if not match:
        raise ConfigError("spectrum file must start with '# rho=<v> gamma=<v> d=<n>'")
    rho, gamma, d = float(match.group(1)), float(match.group(2)), int(match.group(3))
    if [h.strip() for h in lines[1].split(",")] != ["omega", "teacher_projection"]:
        raise ConfigError("spectrum header must be 'omega,teacher_projection'")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:]], dtype=float).reshape(-1, 2)
    if data.shape[0] != d:
        raise DimensionMismatch(f"spectrum declares d={d} but has {data.shape[0]} rows")
    return SpectralModel(data[:, 0], data[:, 1], rho, gamma)


def write_spectrum(model: SpectralModel, path) -> None:
    Path(path).write_text(spectrum_to_csv(model))


def read_spectrum(path) -> SpectralModel:
    return spectrum_from_csv(Path(path).read_text())


def matrix_to_csv(mat: np.ndarray) -> str:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    buf = io.StringIO()
    buf.write(f"# rows={mat.shape[0]} cols={mat.shape[1]}\n")
    for row in mat:
        buf.write(",".join(format_float(x) for x in row) + "\n")
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    match = _HEADER_RE.match(lines[0]) if lines else None
    if not match:
        raise ConfigError("matrix CSV must start with '# rows=<R> cols=<C>'")
    rows, cols = int(match.group(1)), int(match.group(2))
    body = lines[1:]
    if len(body) != rows:
        raise DimensionMismatch(f"header declares {rows} rows, found {len(body)}")
    mat = np.empty((rows, cols))
    for i, ln in enumerate(body):
        vals = ln.split(",")
        if len(vals) != cols:
            raise DimensionMismatch(f"row {i} has {len(vals)} values, expected {cols}")
        mat[i] = [float(v) for v in vals]
    return mat


def matrix_to_bytes(mat: np.ndarray) -> bytes:
    mat = np.atleast_2d(np.asarray(mat, dtype="<f8"))
    return MAGIC + struct.pack("<qq", *mat.shape) + np.ascontiguousarray(mat).tobytes()


def matrix_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:8] != MAGIC:
        raise ConfigError("not a GCMMAT01 binary matrix")
    rows, cols = struct.unpack("<qq", blob[8:24])
    payload = blob[24:]
    if len(payload) != 8 * rows * cols:
        raise DimensionMismatch(f"binary matrix declares {rows}x{cols} but holds {len(payload) // 8} values")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)


def write_matrix(mat: np.ndarray, path) -> None:
    path = Path(path)
    if path.suffix == ".bin":
        path.write_bytes(matrix_to_bytes(mat))
    else:
        path.write_text(matrix_to_csv(mat))


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".bin":
        return matrix_from_bytes(path.read_bytes())
    return matrix_from_csv(path.read_text())


def read_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Features and labels from a matrix file whose last column is the label."""
    mat = read_matrix(path)
    if mat.shape[1] < 2:
        raise DimensionMismatch("dataset needs at least one feature column and a label column")
    return mat[:, :-1], mat[:, -1]


def write_dataset(features: np.ndarray, labels: np.ndarray, path) -> None:
    write_matrix(np.column_stack([features, labels]), path)


def _bundle_file(directory: Path, name: str) -> Path:
    for suffix in (".bin", ".csv"):
        candidate = directory / (name + suffix)
        if candidate.exists():
            return candidate
    raise ConfigError(f"bundle {directory} has no {name}.bin or {name}.csv")


def read_triple(directory) -> CovarianceTriple:
    directory = Path(directory)
    parts = {name: read_matrix(_bundle_file(directory, name)) for name in ("psi", "phi", "omega", "theta0")}
    return CovarianceTriple(parts["psi"], parts["phi"], parts["omega"], parts["theta0"].ravel())


def write_triple(triple: CovarianceTriple, directory, binary: bool = False) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    suffix = ".bin" if binary else ".csv"
    for name in ("psi", "phi", "omega"):
        write_matrix(getattr(triple, name), directory / (name + suffix))
    write_matrix(triple.theta0[None, :], directory / ("theta0" + suffix))
