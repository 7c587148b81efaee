"""JSON run configuration shared by the CLI and the HTTP service.

A config file is a single JSON object with optional sections `optics`,
`fit`, `render`, `segment` plus the top-level keys `grid`, `illuminant`
and `workers`. Every key has a default, so `{}` is a valid config. Unknown
keys are rejected by name rather than silently ignored; typos in a
constant override would otherwise change results without a trace.

The resolved config serializes to a canonical dict whose SHA-256 digest is
stored in output manifests, so identical settings hash identically no
matter how sparsely the source file was written.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path

from .fitting import FitOptions, default_seeds
from .skin import OpticsConstants
from .spectral import WavelengthGrid, default_grid


class ConfigError(ValueError):
    """Bad configuration; the message names the offending key."""


@dataclass(frozen=True)
class RenderSettings:
    gamma: float = 2.4
    camera: str | None = None        # CSV path; None = standard observer
    reapply_illuminant: bool = False


@dataclass(frozen=True)
class SegmentSettings:
    model: str | None = None         # path to trained weights, if any
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    validation_fraction: float = 0.1


@dataclass(frozen=True)
class ToolkitConfig:
    grid: WavelengthGrid = field(default_factory=default_grid)
    illuminant: str = "d65"          # builtin name or CSV path
    workers: int = 1
    optics: OpticsConstants = field(default_factory=OpticsConstants)
    fit: FitOptions = field(default_factory=FitOptions)
    render: RenderSettings = field(default_factory=RenderSettings)
    segment: SegmentSettings = field(default_factory=SegmentSettings)


def default_config() -> ToolkitConfig:
    return ToolkitConfig()


def _expect_object(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"'{where}' must be a JSON object")
    return dict(value)  # copy so keys can be popped destructively


def _reject_leftovers(section: dict, where: str) -> None:
    if section:
        key = sorted(section)[0]
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown config key '{prefix}{key}'")


def _number(section: dict, key: str, where: str, default,
            minimum=None, allow_none=False):
    if key not in section:
        return default
    value = section.pop(key)
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}.{key}' must be a number")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{where}.{key}' must be >= {minimum}")
    return float(value)


def _integer(section: dict, key: str, where: str, default, minimum=1):
    if key not in section:
        return default
    value = section.pop(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{where}.{key}' must be an integer")
    if value < minimum:
        raise ConfigError(f"'{where}.{key}' must be >= {minimum}")
    return value


def _boolean(section: dict, key: str, where: str, default):
    if key not in section:
        return default
    value = section.pop(key)
    if not isinstance(value, bool):
        raise ConfigError(f"'{where}.{key}' must be true or false")
    return value


def _string_or_none(section: dict, key: str, where: str, default):
    if key not in section:
        return default
    value = section.pop(key)
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"'{where}.{key}' must be a string or null")
    return value


def _parse_grid(value) -> WavelengthGrid:
    section = _expect_object(value, "grid")
    for key in ("lambda_min", "lambda_max", "count"):
        if key not in section:
            raise ConfigError(f"missing config key 'grid.{key}'")
    lo = _number(section, "lambda_min", "grid", None)
    hi = _number(section, "lambda_max", "grid", None)
    count = _integer(section, "count", "grid", None, minimum=1)
    _reject_leftovers(section, "grid")
    try:
        return WavelengthGrid(lo, hi, count)
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from None


def _parse_optics(value) -> OpticsConstants:
    section = _expect_object(value, "optics")
    overrides = {}
    known = {f.name for f in dataclass_fields(OpticsConstants)}
    for key in list(section):
        if key not in known:
            raise ConfigError(f"unknown config key 'optics.{key}'")
        raw = section.pop(key)
        if key == "baseline_params":
            if (not isinstance(raw, list) or len(raw) != 4
                    or any(isinstance(v, bool) or
                           not isinstance(v, (int, float)) for v in raw)):
                raise ConfigError("'optics.baseline_params' must be a list "
                                  "of 4 numbers")
            overrides[key] = tuple(float(v) for v in raw)
        else:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ConfigError(f"'optics.{key}' must be a number")
            overrides[key] = float(raw)
    try:
        return OpticsConstants(**overrides)
    except ValueError as err:
        raise ConfigError(f"optics: {err}") from None


def _parse_fit(value) -> FitOptions:
    section = _expect_object(value, "fit")
    max_iterations = _integer(section, "max_iterations", "fit",
                              FitOptions().max_iterations)
    tolerances = _expect_object(section.pop("tolerances", {}), "fit.tolerances")
    gradient = _number(tolerances, "gradient", "fit.tolerances",
                       FitOptions().gradient_tolerance, minimum=0.0)
    step = _number(tolerances, "step", "fit.tolerances",
                   FitOptions().step_tolerance, minimum=0.0)
    _reject_leftovers(tolerances, "fit.tolerances")
    multistart = _boolean(section, "multistart", "fit", True)
    dark = _number(section, "dark_threshold", "fit", None,
                   minimum=0.0, allow_none=True)
    _reject_leftovers(section, "fit")
    seeds = default_seeds() if multistart else default_seeds()[:1]
    try:
        return FitOptions(max_iterations=max_iterations,
                          gradient_tolerance=gradient,
                          step_tolerance=step,
                          multistart_seeds=seeds,
                          dark_pixel_threshold=dark)
    except ValueError as err:
        raise ConfigError(f"fit: {err}") from None


def _parse_render(value) -> RenderSettings:
    section = _expect_object(value, "render")
    gamma = _number(section, "gamma", "render", RenderSettings().gamma)
    if gamma is None or gamma <= 0:
        raise ConfigError("'render.gamma' must be > 0")
    camera = _string_or_none(section, "camera", "render", None)
    reapply = _boolean(section, "reapply_illuminant", "render", False)
    _reject_leftovers(section, "render")
    return RenderSettings(gamma=gamma, camera=camera,
                          reapply_illuminant=reapply)


def _parse_segment(value) -> SegmentSettings:
    section = _expect_object(value, "segment")
    defaults = SegmentSettings()
    model = _string_or_none(section, "model", "segment", None)
    seed = _integer(section, "seed", "segment", defaults.seed, minimum=0)
    lr = _number(section, "learning_rate", "segment",
                 defaults.learning_rate)
    if lr is None or lr <= 0:
        raise ConfigError("'segment.learning_rate' must be > 0")
    batch = _integer(section, "batch_size", "segment", defaults.batch_size)
    epochs = _integer(section, "max_epochs", "segment", defaults.max_epochs)
    patience = _integer(section, "patience", "segment", defaults.patience)
    val = _number(section, "validation_fraction", "segment",
                  defaults.validation_fraction, minimum=0.0)
    if val >= 1.0:
        raise ConfigError("'segment.validation_fraction' must be < 1")
    _reject_leftovers(section, "segment")
    return SegmentSettings(model=model, seed=seed, learning_rate=lr,
                           batch_size=batch, max_epochs=epochs,
                           patience=patience, validation_fraction=val)


def config_from_dict(raw: dict) -> ToolkitConfig:
    top = _expect_object(raw, "config")
    grid = (_parse_grid(top.pop("grid")) if "grid" in top else default_grid())
    illuminant = top.pop("illuminant", "d65")
    if not isinstance(illuminant, str) or not illuminant:
        raise ConfigError("'illuminant' must be a non-empty string")
    workers = _integer(top, "workers", "", 1)
    optics = (_parse_optics(top.pop("optics")) if "optics" in top
              else OpticsConstants())
    fit = _parse_fit(top.pop("fit")) if "fit" in top else FitOptions()
    render = (_parse_render(top.pop("render")) if "render" in top
              else RenderSettings())
    segment = (_parse_segment(top.pop("segment")) if "segment" in top
               else SegmentSettings())
    _reject_leftovers(top, "")
    return ToolkitConfig(grid=grid, illuminant=illuminant, workers=workers,
                         optics=optics, fit=fit, render=render,
                         segment=segment)


def parse_config(text: str | bytes) -> ToolkitConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    return config_from_dict(raw)


def load_config(path: str | Path | None) -> ToolkitConfig:
    if path is None:
        return default_config()
    return parse_config(Path(path).read_text())


def config_to_dict(cfg: ToolkitConfig) -> dict:
    """Fully resolved canonical form; the basis for hashing and manifests."""
    return {
        "grid": {"lambda_min": cfg.grid.lambda_min,
                 "lambda_max": cfg.grid.lambda_max,
                 "count": cfg.grid.count},
        "illuminant": cfg.illuminant,
        "workers": cfg.workers,
        "optics": {
            "epidermis_thickness": cfg.optics.epidermis_thickness,
            "melanin_prefactor": cfg.optics.melanin_prefactor,
            "melanin_exponent": cfg.optics.melanin_exponent,
            "baseline_params": list(cfg.optics.baseline_params),
            "hb_concentration": cfg.optics.hb_concentration,
            "hb_molar_mass": cfg.optics.hb_molar_mass,
            "oxygenation_fraction": cfg.optics.oxygenation_fraction,
            "scatter_mie_prefactor": cfg.optics.scatter_mie_prefactor,
            "scatter_rayleigh_prefactor": cfg.optics.scatter_rayleigh_prefactor,
            "km_k_coeff": cfg.optics.km_k_coeff,
            "km_s_coeff": cfg.optics.km_s_coeff,
        },
        "fit": {
            "max_iterations": cfg.fit.max_iterations,
            "tolerances": {"gradient": cfg.fit.gradient_tolerance,
                           "step": cfg.fit.step_tolerance},
            "multistart": len(cfg.fit.multistart_seeds) > 1,
            "dark_threshold": cfg.fit.dark_pixel_threshold,
        },
        "render": {
            "gamma": cfg.render.gamma,
            "camera": cfg.render.camera,
            "reapply_illuminant": cfg.render.reapply_illuminant,
        },
        "segment": {
            "model": cfg.segment.model,
            "seed": cfg.segment.seed,
            "learning_rate": cfg.segment.learning_rate,
            "batch_size": cfg.segment.batch_size,
            "max_epochs": cfg.segment.max_epochs,
            "patience": cfg.segment.patience,
            "validation_fraction": cfg.segment.validation_fraction,
        },
    }


def config_hash(cfg: ToolkitConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
