"""Declarative edits on fitted parameter maps and recomposition of the
edited radiance against the observed background.

Scripts are ordered lists of operations; each touches one target map,
optionally restricted to a region mask. After an operation the edited
region is clamped back into the target's valid range, so edited maps stay
biophysically meaningful. Pixels outside the region are bitwise untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import median_filter

from .cube import MultispectralCube
from .fitting import ParameterMaps
from .skin import F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN, SkinOptics
from .spectral import Spectrum, require_same_grid

TARGETS = ("f_mel", "f_blood", "i_d", "i_s")
KINDS = ("scale", "offset", "median_filter", "set_constant")

# clamp ranges per target; None means unbounded above
TARGET_RANGES = {
    "f_mel": (F_MEL_MIN, F_MEL_MAX),
    "f_blood": (F_BLOOD_MIN, F_BLOOD_MAX),
    "i_d": (0.0, None),
    "i_s": (0.0, None),
}


class ScriptError(ValueError):
    """Invalid edit script contents."""


@dataclass(frozen=True)
class EditOp:
    target: str
    kind: str
    value: float
    mask: np.ndarray | None = None  # bool (H, W); None = whole image

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ScriptError(f"unknown target {self.target!r}, "
                              f"expected one of {TARGETS}")
        if self.kind not in KINDS:
            raise ScriptError(f"unknown kind {self.kind!r}, "
                              f"expected one of {KINDS}")
        value = self.value
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScriptError(f"op value must be a number, got {value!r}")
        value = float(value)
        if not np.isfinite(value):
            raise ScriptError("op value must be finite")
        if self.kind == "scale" and value < 0:
            raise ScriptError("scale factor must be >= 0")
        if self.kind == "median_filter":
            if value != int(value) or int(value) < 3 or int(value) % 2 == 0:
                raise ScriptError("median_filter window must be an odd "
                                  "integer >= 3")
        if self.kind == "set_constant":
            lo, hi = TARGET_RANGES[self.target]
            if value < lo or (hi is not None and value > hi):
                raise ScriptError(
                    f"set_constant value {value} outside valid range for "
                    f"{self.target}")
        if self.mask is not None:
            mask = np.asarray(self.mask)
            if mask.ndim != 2:
                raise ScriptError("mask must be a 2-D array")
            object.__setattr__(self, "mask", mask.astype(bool))
        object.__setattr__(self, "value", value)


@dataclass(frozen=True)
class EditScript:
    ops: tuple[EditOp, ...]

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))

    def __len__(self) -> int:
        return len(self.ops)

    @classmethod
    def empty(cls) -> "EditScript":
        return cls(ops=())


MaskLoader = Callable[[str], np.ndarray]


def parse_script(text: str | bytes,
                 mask_loader: MaskLoader | None = None) -> EditScript:
    """Parse the JSON wire form.

    Each element: {"target": ..., "kind": ..., "value": ...} plus an
    optional "mask" naming a resource resolved by `mask_loader` to a 2-D
    array (nonzero / >= 128 means selected).
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScriptError(f"script is not valid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise ScriptError("script must be a JSON array of operations")
    ops = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ScriptError(f"op {i} must be an object")
        unknown = set(entry) - {"target", "kind", "value", "mask"}
        if unknown:
            raise ScriptError(f"op {i} has unknown keys {sorted(unknown)}")
        missing = {"target", "kind", "value"} - set(entry)
        if missing:
            raise ScriptError(f"op {i} is missing keys {sorted(missing)}")
        mask = None
        if "mask" in entry and entry["mask"] is not None:
            if mask_loader is None:
                raise ScriptError(f"op {i} references a mask but no mask "
                                  "loader is available")
            if not isinstance(entry["mask"], str):
                raise ScriptError(f"op {i} mask must be a string")
            mask = mask_from_image(mask_loader(entry["mask"]))
        ops.append(EditOp(target=entry["target"], kind=entry["kind"],
                          value=entry["value"], mask=mask))
    return EditScript(ops=tuple(ops))


def mask_from_image(img: np.ndarray) -> np.ndarray:
    """8-bit mask image to boolean: values >= 128 select the region."""
    img = np.asarray(img)
    if img.ndim == 3:
        img = img[..., 0]
    if img.ndim != 2:
        raise ScriptError("mask image must be 2-D (grayscale)")
    if img.dtype == bool:
        return img
    return img >= 128


def script_to_json(script: EditScript) -> str:
    """Inverse of parse_script for mask-free scripts (stable key order)."""
    entries = []
    for op in script.ops:
        if op.mask is not None:
            raise ScriptError("cannot serialize an in-memory mask; "
                              "scripts with masks must reference files")
        value = int(op.value) if op.kind == "median_filter" else op.value
        entries.append({"target": op.target, "kind": op.kind, "value": value})
    return json.dumps(entries, sort_keys=True)


def _clamp_region(arr: np.ndarray, target: str, region: np.ndarray) -> None:
    lo, hi = TARGET_RANGES[target]
    arr[region] = np.clip(arr[region], lo, hi if hi is not None else np.inf)


def apply_edit(maps: ParameterMaps, script: EditScript) -> ParameterMaps:
    """Run the script; input maps are never mutated."""
    out = maps.copy()
    shape = (maps.height, maps.width)
    for i, op in enumerate(script.ops):
        if op.mask is not None and op.mask.shape != shape:
            raise ScriptError(f"op {i} mask shape {op.mask.shape} does not "
                              f"match maps {shape}")
        region = op.mask if op.mask is not None else np.ones(shape, dtype=bool)
        arr = out.map_by_name(op.target)
        if op.kind == "scale":
            arr[region] = arr[region] * op.value
        elif op.kind == "offset":
            arr[region] = arr[region] + op.value
        elif op.kind == "set_constant":
            arr[region] = op.value
        else:  # median_filter, edge replication at borders
            filtered = median_filter(arr, size=int(op.value), mode="nearest")
            arr[region] = filtered[region]
        _clamp_region(arr, op.target, region)
    return out


def recompose(maps: ParameterMaps, illuminant: Spectrum, optics: SkinOptics,
              l_obs: MultispectralCube) -> MultispectralCube:
    """Blend model radiance from the maps with the observed cube.

    Per pixel: p * e * (i_d * r(f_mel, f_blood) + i_s) + (1 - p) * l_obs,
    p being the skin probability. Non-skin pixels therefore keep their
    observed spectra.
    """
    if maps.skin_probability is None:
        raise ValueError("recompose requires a skin probability map")
    require_same_grid(illuminant.grid, optics.grid, "illuminant and optics")
    require_same_grid(illuminant.grid, l_obs.grid, "illuminant and cube")
    if (maps.height, maps.width) != (l_obs.height, l_obs.width):
        raise ValueError("maps and cube dimensions disagree")

    refl = optics.reflectance(maps.f_mel[..., None], maps.f_blood[..., None])
    skin_term = illuminant.values * (maps.diffuse[..., None] * refl
                                     + maps.specular[..., None])
    p = maps.skin_probability[..., None]
    blended = p * skin_term + (1.0 - p) * l_obs.data.astype(np.float64)
    return MultispectralCube.from_array(
        np.clip(blended, 0.0, None).astype(np.float32), l_obs.grid)
