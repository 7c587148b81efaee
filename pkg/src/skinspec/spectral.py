"""Wavelength grids, sampled spectra and tabulated spectral data.

Every other module discretises its spectral quantities on a shared
:class:`WavelengthGrid`. Tabulated reference data (extinction coefficients,
illuminants, sensitivities) is carried as :class:`TabulatedFunction` and
moved onto a grid with :func:`resample`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

DEFAULT_LAMBDA_MIN = 400.0
DEFAULT_LAMBDA_MAX = 700.0
DEFAULT_CHANNEL_COUNT = 31


class GridMismatchError(ValueError):
    """Two spectral quantities live on different wavelength grids."""


class OutOfRangeError(ValueError):
    """A grid sample falls outside a table and extrapolation is disabled."""


class TableParseError(ValueError):
    """A spectral table stream could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TableMonotonicityError(ValueError):
    """Tabulated wavelengths are not strictly increasing."""


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class WavelengthGrid:
    """Evenly spaced closed wavelength interval with ``count`` samples."""

    lambda_min: float
    lambda_max: float
    count: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"grid needs at least 2 samples, got {self.count}")
        if not (self.lambda_min < self.lambda_max):
            raise ValueError(
                f"lambda_min must be < lambda_max, got "
                f"[{self.lambda_min}, {self.lambda_max}]"
            )
        object.__setattr__(self, "count", int(self.count))

    @property
    def step(self) -> float:
        return (self.lambda_max - self.lambda_min) / (self.count - 1)

    @property
    def samples(self) -> np.ndarray:
        """All sample wavelengths; endpoints are hit exactly."""
        out = np.linspace(self.lambda_min, self.lambda_max, self.count)
        out.setflags(write=False)
        return out

    def sample(self, i: int) -> float:
        if not 0 <= i < self.count:
            raise IndexError(f"sample index {i} outside [0, {self.count})")
        return float(self.samples[i])


def make_grid(lambda_min: float, lambda_max: float, count: int) -> WavelengthGrid:
    """Validated constructor for :class:`WavelengthGrid`."""
    return WavelengthGrid(float(lambda_min), float(lambda_max), count)


def default_grid() -> WavelengthGrid:
    """The 400-700 nm, 31 channel working grid (10 nm step)."""
    return make_grid(DEFAULT_LAMBDA_MIN, DEFAULT_LAMBDA_MAX, DEFAULT_CHANNEL_COUNT)


@dataclass(frozen=True)
class Spectrum:
    """Non-negative spectral samples bound to a grid.

    The unit is context dependent (radiance, SPD, reflectance or an
    absorption coefficient); use :meth:`reflectance` when constructing a
    quantity that must additionally stay within [0, 1].
    """

    grid: WavelengthGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != self.grid.count:
            raise ValueError(
                f"expected {self.grid.count} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum contains non-finite values")
        if np.any(values < 0):
            raise ValueError("spectrum contains negative values")
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def reflectance(cls, grid: WavelengthGrid, values) -> "Spectrum":
        """Construct a reflectance spectrum, enforcing values in [0, 1]."""
        arr = np.asarray(values, dtype=np.float64)
        if np.any(arr > 1.0 + 1e-12):
            raise ValueError(f"reflectance exceeds 1 (max {arr.max():g})")
        return cls(grid, np.minimum(arr, 1.0))

    def __len__(self) -> int:
        return self.grid.count


def require_same_grid(a: WavelengthGrid, b: WavelengthGrid, what: str = "spectra"):
    if a != b:
        raise GridMismatchError(f"{what} are on different grids: {a} vs {b}")


@dataclass(frozen=True)
class TabulatedFunction:
    """Measured spectral data as (wavelength, value) pairs.

    Wavelengths must be strictly increasing; evaluation is piecewise
    linear, with optional constant (endpoint-hold) extrapolation.
    """

    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if wl.ndim != 1 or vals.ndim != 1 or wl.shape != vals.shape:
            raise ValueError("wavelengths and values must be 1-D and equal length")
        if wl.shape[0] < 2:
            raise ValueError("a table needs at least 2 entries")
        if not (np.all(np.isfinite(wl)) and np.all(np.isfinite(vals))):
            raise ValueError("table contains non-finite entries")
        if np.any(np.diff(wl) <= 0):
            bad = int(np.flatnonzero(np.diff(wl) <= 0)[0])
            raise TableMonotonicityError(
                f"wavelengths must be strictly increasing; entry {bad + 1} "
                f"({wl[bad + 1]:g} nm) does not increase past {wl[bad]:g} nm"
            )
        object.__setattr__(self, "wavelengths", _freeze(wl))
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def lambda_min(self) -> float:
        return float(self.wavelengths[0])

    @property
    def lambda_max(self) -> float:
        return float(self.wavelengths[-1])

    def __call__(self, lam, extrapolate: bool = False) -> np.ndarray:
        """Piecewise-linear evaluation at ``lam`` (scalar or array)."""
        lam = np.asarray(lam, dtype=np.float64)
        if not extrapolate:
            if np.any(lam < self.lambda_min) or np.any(lam > self.lambda_max):
                raise OutOfRangeError(
                    f"query outside tabulated range "
                    f"[{self.lambda_min:g}, {self.lambda_max:g}] nm"
                )
        return np.interp(lam, self.wavelengths, self.values)


def resample(f: TabulatedFunction, grid: WavelengthGrid,
             extrapolate: bool = False) -> Spectrum:
    """Put a table onto a grid by piecewise-linear interpolation.

    With ``extrapolate`` enabled, samples outside the table hold the
    nearest endpoint value; otherwise they raise :class:`OutOfRangeError`.
    """
    return Spectrum(grid, f(grid.samples, extrapolate=extrapolate))


Source = Union[str, Path, bytes, IO]


def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8")
    if isinstance(source, bytes):
        return source.decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _parse_csv_columns(source: Source) -> tuple[np.ndarray, np.ndarray]:
    """Parse a wavelength-first CSV into (wavelengths, value columns).

    The header line is optional and detected by a non-numeric first token.
    Accepts LF or CRLF endings and skips blank lines.
    """
    text = _read_text(source)
    rows: list[list[float]] = []
    ncols = None
    saw_content = False
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r").strip()
        if not line:
            continue
        tokens = [t.strip() for t in line.split(",")]
        if not saw_content and not _is_number(tokens[0]):
            saw_content = True  # header line
            continue
        saw_content = True
        if len(tokens) < 2:
            raise TableParseError("expected at least 2 comma-separated columns",
                                  lineno)
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise TableParseError(f"non-numeric value in {tokens!r}", lineno) from None
        if ncols is None:
            ncols = len(row)
        elif len(row) != ncols:
            raise TableParseError(
                f"expected {ncols} columns, got {len(row)}", lineno)
        rows.append(row)
    if len(rows) < 2:
        raise TableParseError("table needs at least 2 data rows", len(rows) + 1)
    data = np.asarray(rows, dtype=np.float64)
    return data[:, 0], data[:, 1:]


def load_table(source: Source) -> TabulatedFunction:
    """Load a 2-column ``wavelength_nm,value`` CSV."""
    wl, cols = _parse_csv_columns(source)
    if cols.shape[1] != 1:
        raise TableParseError(
            f"expected exactly one value column, got {cols.shape[1]}", 1)
    return TabulatedFunction(wl, cols[:, 0])


def load_tables(source: Source, expect_columns: int | None = None
                ) -> list[TabulatedFunction]:
    """Load a multi-column CSV as one table per value column."""
    wl, cols = _parse_csv_columns(source)
    if expect_columns is not None and cols.shape[1] != expect_columns:
        raise TableParseError(
            f"expected {expect_columns} value columns, got {cols.shape[1]}", 1)
    return [TabulatedFunction(wl, cols[:, i]) for i in range(cols.shape[1])]
