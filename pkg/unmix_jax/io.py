"""File formats: spectral library CSV, binary cube/abundance files, curve CSV.

Binary layout (all integers little-endian u32, all reals little-endian f64):

    magic       4 bytes, b"SUCB" (cube) or b"SUAB" (abundances)
    version     1
    n_channels  bands (cube) or endmembers (abundances)
    rows, cols  spatial shape
    flags       bit 0: wavelengths follow the header
    [wavelengths]  n_channels values
    data        rows * cols pixels, each with its n_channels values contiguous
"""
import logging
import math
import re
from pathlib import Path

import numpy as np
import pandas as pd

from unmix_jax.errors import (BadMagic, EmptyFile, IoError, ParseError, TruncatedFile, VersionUnsupported)
from unmix_jax.metrics import CURVE_COLUMNS, ConvergenceCurve
from unmix_jax.model import AbundanceMatrix, ImageCube
from unmix_jax.simdata import SpectralLibrary

logger = logging.getLogger(__name__)

CUBE_MAGIC = b"SUCB"
ABUNDANCE_MAGIC = b"SUAB"
FORMAT_VERSION = 1
HEADER_BYTES = 24
FLAG_WAVELENGTHS = 1
FLOAT_FORMAT = "%.17g"


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoError(path, e.strerror or str(e))


def _write_bytes(path, payload):
    try:
        Path(path).write_bytes(payload)
    except OSError as e:
        raise IoError(path, e.strerror or str(e))


def _parse_float(value):
    """Finite float, or None."""
    try:
        parsed = float(value)
    except ValueError:
        return None
    return parsed if math.isfinite(parsed) else None


def _parser_error(path, e):
    # pandas reports ragged rows as "Expected 2 fields in line 3, saw 3"
    match = re.search(r"Expected (\d+) fields in line (\d+), saw (\d+)", str(e))
    if match is None:
        return ParseError(path, 0, 0, str(e))
    expected, line, _ = (int(v) for v in match.groups())
    return ParseError(path, line, expected + 1, "<extra field>")


def read_library_csv(path) -> SpectralLibrary:
    """Read signatures stored one per column, one band per row.

    The first row is a header of names when any of its cells is not a number.
    A header cell `wavelength` in the first column marks that column as
    wavelengths in nm.

    Raises:
        EmptyFile: no data rows.
        ParseError: a data cell is not a finite number, or a row has too many
            fields (line and column are 1-based).
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise EmptyFile(path)
    except pd.errors.ParserError as e:
        raise _parser_error(path, e)
    except OSError as e:
        raise IoError(path, e.strerror or str(e))

    cells = raw.to_numpy()
    header = None
    if len(cells) and any(_parse_float(v) is None for v in cells[0]):
        header, cells = [str(v).strip() for v in cells[0]], cells[1:]
    if len(cells) == 0:
        raise EmptyFile(path)

    first_line = 2 if header is not None else 1
    values = np.empty(cells.shape, dtype=np.float64)
    for r, row in enumerate(cells):
        for c, value in enumerate(row):
            parsed = _parse_float(value)
            if parsed is None:
                raise ParseError(path, first_line + r, c + 1, value)
            values[r, c] = parsed

    wavelengths = None
    names = header
    if header is not None and header[0].lower() == "wavelength":
        wavelengths, values, names = values[:, 0], values[:, 1:], header[1:]
    if values.shape[1] == 0:
        raise EmptyFile(path)
    logger.debug("read library %s: %d bands, %d signatures", path, *values.shape)
    return SpectralLibrary.from_array(values, names=names, wavelengths=wavelengths)


def write_library_csv(lib: SpectralLibrary, path, header=True):
    """Write a library readable by `read_library_csv`, 17 significant digits."""
    frame = pd.DataFrame(np.asarray(lib.signatures), columns=list(lib.names))
    if lib.wavelengths is not None:
        frame.insert(0, "wavelength", np.asarray(lib.wavelengths))
    try:
        frame.to_csv(path, index=False, header=header, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise IoError(path, e.strerror or str(e))


def _pack(magic, data, shape, wavelengths=None):
    data = np.asarray(data, dtype="<f8")
    n_channels = data.shape[0]
    flags = FLAG_WAVELENGTHS if wavelengths is not None else 0
    header = np.array([FORMAT_VERSION, n_channels, shape[0], shape[1], flags], dtype="<u4")
    parts = [magic, header.tobytes()]
    if wavelengths is not None:
        parts.append(np.asarray(wavelengths, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(data.T).tobytes())
    return b"".join(parts)


def _unpack(path, magic):
    payload = _read_bytes(path)
    if len(payload) < HEADER_BYTES:
        if len(payload) >= 4 and payload[:4] != magic:
            raise BadMagic(path, payload[:4], magic)
        raise TruncatedFile(path, HEADER_BYTES, len(payload))
    if payload[:4] != magic:
        raise BadMagic(path, payload[:4], magic)

    version, n_channels, rows, cols, flags = (int(v) for v in np.frombuffer(payload, dtype="<u4", count=5, offset=4))
    if version != FORMAT_VERSION:
        raise VersionUnsupported(path, version)
    has_wavelengths = bool(flags & FLAG_WAVELENGTHS)
    expected = HEADER_BYTES + 8 * n_channels * (int(has_wavelengths) + rows * cols)
    if len(payload) != expected:
        raise TruncatedFile(path, expected, len(payload))

    offset = HEADER_BYTES
    wavelengths = None
    if has_wavelengths:
        wavelengths = np.frombuffer(payload, dtype="<f8", count=n_channels, offset=offset).astype(np.float64)
        offset += 8 * n_channels
    data = np.frombuffer(payload, dtype="<f8", count=n_channels * rows * cols, offset=offset)
    data = data.reshape(rows * cols, n_channels).T.astype(np.float64)
    return data, (rows, cols), wavelengths


def write_cube(path, cube: ImageCube):
    _write_bytes(path, _pack(CUBE_MAGIC, cube.data, cube.shape, cube.wavelengths))


def read_cube(path) -> ImageCube:
    """Raises BadMagic, TruncatedFile or VersionUnsupported on malformed files."""
    data, shape, wavelengths = _unpack(path, CUBE_MAGIC)
    return ImageCube.from_array(data, shape=shape, wavelengths=wavelengths)


def write_abundance(path, A: AbundanceMatrix):
    _write_bytes(path, _pack(ABUNDANCE_MAGIC, A.data, A.shape))


def read_abundance(path) -> AbundanceMatrix:
    data, shape, _ = _unpack(path, ABUNDANCE_MAGIC)
    return AbundanceMatrix.from_array(data, shape=shape)


def write_curve_csv(curve: ConvergenceCurve, path):
    """Header `sweep,time_s,objective,re_db,nmse_db,unconverged`; missing values
    are empty cells and minus infinity is written as `-inf`."""
    columns = {}
    for name in CURVE_COLUMNS:
        values = getattr(curve, name)
        columns[name] = np.full(len(curve.sweep), math.nan) if values is None else np.asarray(values)
    frame = pd.DataFrame(columns, columns=list(CURVE_COLUMNS))
    try:
        frame.to_csv(path, index=False, na_rep="", float_format=FLOAT_FORMAT)
    except OSError as e:
        raise IoError(path, e.strerror or str(e))


def read_curve_csv(path) -> ConvergenceCurve:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise EmptyFile(path)
    except OSError as e:
        raise IoError(path, e.strerror or str(e))

    def _column(name, dtype=np.float64):
        if name not in frame or (len(frame) and frame[name].isna().all()):
            return None
        return frame[name].to_numpy(dtype=dtype)

    return ConvergenceCurve(sweep=frame["sweep"].to_numpy(dtype=np.int64),
                            time_s=frame["time_s"].to_numpy(dtype=np.float64),
                            objective=frame["objective"].to_numpy(dtype=np.float64),
                            re_db=_column("re_db"),
                            nmse_db=_column("nmse_db"),
                            unconverged=_column("unconverged", np.int64))
