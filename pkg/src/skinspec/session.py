"""Decomposition directories and the shared decompose/edit/render flow.

A decomposition directory is the on-disk unit the CLI writes and the HTTP
service registers:

    out/
      manifest.json   config (resolved), config hash, seeds, versions
      report.json     dimensions, error statistics, status counts
      cube.msc        the observed cube, resampled to the session grid
      maps/           flat little-endian arrays, row-major height x width
        i_d.bin i_s.bin f_mel.bin f_blood.bin   float32
        probability.bin rel_error.bin           float32
        status.bin                              uint8

The CLI and the service both call `edited_png` / `view_png` here, so a
script renders to the same PNG bytes through either entry point by
construction rather than by coincidence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import (
    ToolkitConfig,
    config_from_dict,
    config_hash,
    config_to_dict,
)
from .cube import MultispectralCube, load_cube, resample_cube, save_cube
from .datafiles import load_d65
from .editing import EditScript, apply_edit, recompose
from .fitting import (
    FitStatus,
    ParameterMaps,
    STATUS_CODES,
    fit_image,
)
from .rendering import (
    CameraSensitivity,
    ColorPipeline,
    build_pipeline,
    png_bytes,
    render_image,
)
from .segmentation import MlpModel, load_model, predict_map
from .skin import SkinOptics
from .spectral import Spectrum, load_tables, resample

MANIFEST_NAME = "manifest.json"
REPORT_NAME = "report.json"
CUBE_NAME = "cube.msc"
MAPS_DIR = "maps"

FLOAT_MAP_FILES = ("i_d", "i_s", "f_mel", "f_blood", "probability",
                   "rel_error")

_OK_CODES = (STATUS_CODES[FitStatus.CONVERGED],
             STATUS_CODES[FitStatus.MAX_ITER])


@dataclass(frozen=True)
class Runtime:
    """Everything derivable from a config: illuminant, optics, pipeline."""

    config: ToolkitConfig
    illuminant: Spectrum
    optics: SkinOptics
    pipeline: ColorPipeline


def load_illuminant(cfg: ToolkitConfig) -> Spectrum:
    """Builtin daylight (mean-normalized) or a user CSV taken as supplied."""
    if cfg.illuminant == "d65":
        spd = resample(load_d65(), cfg.grid)
        return Spectrum(cfg.grid, spd.values / spd.values.mean())
    tables = load_tables(Path(cfg.illuminant), expect_columns=1)
    return Spectrum(cfg.grid, resample(tables[0], cfg.grid).values)


def build_runtime(cfg: ToolkitConfig) -> Runtime:
    illuminant = load_illuminant(cfg)
    optics = SkinOptics.build(cfg.grid, constants=cfg.optics)
    if cfg.render.camera is None:
        sens = CameraSensitivity.from_cie_cmf(cfg.grid)
    else:
        sens = CameraSensitivity.from_csv(Path(cfg.render.camera), cfg.grid)
    pipeline = build_pipeline(sens, illuminant, gamma=cfg.render.gamma,
                              reapply_illuminant=cfg.render.reapply_illuminant)
    return Runtime(config=cfg, illuminant=illuminant, optics=optics,
                   pipeline=pipeline)


def probability_from_status(status: np.ndarray) -> np.ndarray:
    """Fallback skin probability when no classifier is configured.

    Pixels the fitter explained (converged or ran out of iterations while
    still fitting) count as skin; dark and failed pixels do not.
    """
    return np.isin(status, _OK_CODES).astype(np.float64)


def decompose_cube(cube: MultispectralCube, runtime: Runtime,
                   model: MlpModel | None = None) -> ParameterMaps:
    maps = fit_image(cube, runtime.illuminant, runtime.optics,
                     opts=runtime.config.fit,
                     workers=runtime.config.workers)
    if model is not None:
        predict_map(model, cube, maps)
    else:
        maps.skin_probability = probability_from_status(maps.status)
    return maps


def build_report(maps: ParameterMaps) -> dict:
    prob = maps.skin_probability
    skin = prob >= 0.5
    counts = {status.value: int(np.sum(maps.status == code))
              for status, code in STATUS_CODES.items()}
    mean_err = (float(np.mean(maps.rel_error[skin])) if np.any(skin)
                else None)
    return {
        "width": maps.width,
        "height": maps.height,
        "skin_pixels": int(np.sum(skin)),
        "mean_relative_spectral_error": mean_err,
        "status_counts": counts,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def build_manifest(cfg: ToolkitConfig) -> dict:
    return {
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seeds": {"segment": cfg.segment.seed},
        "versions": {
            "skinspec": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "cube_format": 1,
            "model_format": 1,
        },
    }


def write_decomposition(out_dir: str | Path, cube: MultispectralCube,
                        maps: ParameterMaps, cfg: ToolkitConfig) -> Path:
    out = Path(out_dir)
    (out / MAPS_DIR).mkdir(parents=True, exist_ok=True)
    _write_json(out / MANIFEST_NAME, build_manifest(cfg))
    _write_json(out / REPORT_NAME, build_report(maps))
    save_cube(cube, out / CUBE_NAME)
    for name in FLOAT_MAP_FILES:
        values = (maps.skin_probability if name == "probability"
                  else maps.rel_error if name == "rel_error"
                  else maps.map_by_name(name))
        path = out / MAPS_DIR / f"{name}.bin"
        path.write_bytes(np.ascontiguousarray(values, dtype="<f4").tobytes())
    (out / MAPS_DIR / "status.bin").write_bytes(
        np.ascontiguousarray(maps.status, dtype=np.uint8).tobytes())
    return out


@dataclass(frozen=True)
class Decomposition:
    path: Path
    config: ToolkitConfig
    manifest: dict
    report: dict
    cube: MultispectralCube
    maps: ParameterMaps


def read_decomposition(path: str | Path) -> Decomposition:
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{root} is not a decomposition directory "
                                f"(no {MANIFEST_NAME})")
    manifest = json.loads(manifest_path.read_text())
    report = json.loads((root / REPORT_NAME).read_text())
    cfg = config_from_dict(manifest["config"])
    cube = load_cube(root / CUBE_NAME)
    h, w = cube.height, cube.width
    maps = ParameterMaps.empty(w, h)

    def read_f32(name: str) -> np.ndarray:
        blob = (root / MAPS_DIR / f"{name}.bin").read_bytes()
        arr = np.frombuffer(blob, dtype="<f4")
        if arr.size != h * w:
            raise ValueError(f"map '{name}' has {arr.size} values, "
                             f"expected {h * w}")
        return arr.reshape(h, w).astype(np.float64)

    maps.diffuse[:] = read_f32("i_d")
    maps.specular[:] = read_f32("i_s")
    maps.f_mel[:] = read_f32("f_mel")
    maps.f_blood[:] = read_f32("f_blood")
    maps.rel_error[:] = read_f32("rel_error")
    maps.skin_probability = read_f32("probability")
    status = np.frombuffer((root / MAPS_DIR / "status.bin").read_bytes(),
                           dtype=np.uint8)
    if status.size != h * w:
        raise ValueError("status map size disagrees with cube")
    maps.status[:] = status.reshape(h, w)
    return Decomposition(path=root, config=cfg, manifest=manifest,
                         report=report, cube=cube, maps=maps)


def runtime_for(dec: Decomposition) -> Runtime:
    return build_runtime(dec.config)


def reconstruction_cube(dec: Decomposition, runtime: Runtime,
                        maps: ParameterMaps | None = None
                        ) -> MultispectralCube:
    maps = maps if maps is not None else dec.maps
    return recompose(maps, runtime.illuminant, runtime.optics, dec.cube)


def view_png(dec: Decomposition, runtime: Runtime, view: str) -> bytes:
    """Rendered PNG of a session view: 'reconstruction' or 'input'."""
    if view == "input":
        cube = dec.cube
    elif view == "reconstruction":
        cube = reconstruction_cube(dec, runtime)
    else:
        raise ValueError(f"unknown view '{view}'")
    return png_bytes(render_image(runtime.pipeline, cube))


def edited_png(dec: Decomposition, runtime: Runtime,
               script: EditScript) -> bytes:
    edited = apply_edit(dec.maps, script)
    cube = reconstruction_cube(dec, runtime, maps=edited)
    return png_bytes(render_image(runtime.pipeline, cube))


def load_session_model(dec: Decomposition) -> MlpModel | None:
    if dec.config.segment.model is None:
        return None
    return load_model(Path(dec.config.segment.model))


def update_probability(dec: Decomposition, prob: np.ndarray) -> None:
    """Rewrite the probability map and the error report in place."""
    maps = dec.maps
    maps.skin_probability = np.asarray(prob, dtype=np.float64)
    (dec.path / MAPS_DIR / "probability.bin").write_bytes(
        np.ascontiguousarray(prob, dtype="<f4").tobytes())
    _write_json(dec.path / REPORT_NAME, build_report(maps))


def with_config(dec: Decomposition, cfg: ToolkitConfig) -> Decomposition:
    return replace(dec, config=cfg)
