"""Locate and load the reference tables bundled in the repo data/ directory."""

from __future__ import annotations

import os
from pathlib import Path

from .spectral import TabulatedFunction, load_table, load_tables

_ENV_VAR = "SKINSPEC_DATA"


def data_dir() -> Path:
    """Bundled data directory; override with the SKINSPEC_DATA env var."""
    override = os.environ.get(_ENV_VAR)
    if override:
        return Path(override)
    return Path(__file__).resolve().parents[2] / "data"


def data_path(name: str) -> Path:
    path = data_dir() / name
    if not path.is_file():
        raise FileNotFoundError(
            f"bundled data file {name!r} not found under {data_dir()} "
            f"(set {_ENV_VAR} to point at the data directory)"
        )
    return path


def load_hb_oxy() -> TabulatedFunction:
    return load_table(data_path("hb_oxy.csv"))


def load_hb_deoxy() -> TabulatedFunction:
    return load_table(data_path("hb_deoxy.csv"))


def load_cmf() -> list[TabulatedFunction]:
    """CIE 1931 colour matching functions as [x, y, z] tables."""
    return load_tables(data_path("cie_1931_cmf.csv"), expect_columns=3)


def load_d65() -> TabulatedFunction:
    return load_table(data_path("d65.csv"))
