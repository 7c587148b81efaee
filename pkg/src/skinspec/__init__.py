"""Biophysical decomposition and editing of multispectral skin images."""

__version__ = "0.1.0"

from .spectral import (
    GridMismatchError,
    Spectrum,
    TabulatedFunction,
    WavelengthGrid,
    default_grid,
    load_table,
    load_tables,
    make_grid,
    resample,
)
from .skin import (
    BioParams,
    ChromophoreTables,
    OpticsConstants,
    SkinOptics,
    SkinParams,
    bio_midpoint,
    radiance,
    radiance_jacobian,
    skin_reflectance,
)
from .fitting import (
    FitOptions,
    FitResult,
    FitStatus,
    OracleFitter,
    ParameterMaps,
    UnconstrainedParams,
    fit_image,
    fit_pixel,
    oracle_fit,
    to_constrained,
    to_unconstrained,
)
from .cube import (
    CubeParseError,
    MultispectralCube,
    NegativeRadianceError,
    load_cube,
    resample_cube,
    save_cube,
)
from .segmentation import (
    LabelledPixelSet,
    MlpModel,
    TrainConfig,
    features_from,
    forward,
    load_model,
    predict_map,
    save_model,
    train,
)
from .editing import (
    EditOp,
    EditScript,
    ScriptError,
    apply_edit,
    parse_script,
    recompose,
)
from .rendering import (
    CameraSensitivity,
    ColorPipeline,
    build_pipeline,
    gamut_swatch,
    render_image,
    render_pixel,
    write_png,
)
from .config import (
    ConfigError,
    RenderSettings,
    SegmentSettings,
    ToolkitConfig,
    config_hash,
    config_to_dict,
    default_config,
    load_config,
    parse_config,
)
from .session import (
    Decomposition,
    Runtime,
    build_runtime,
    decompose_cube,
    read_decomposition,
    write_decomposition,
)

# skinspec.cli and skinspec.service are import-on-demand so the numeric
# core does not drag in the web stack.

__all__ = [
    "__version__",
    "BioParams",
    "CameraSensitivity",
    "ChromophoreTables",
    "ColorPipeline",
    "ConfigError",
    "CubeParseError",
    "Decomposition",
    "EditOp",
    "EditScript",
    "FitOptions",
    "FitResult",
    "FitStatus",
    "GridMismatchError",
    "LabelledPixelSet",
    "MlpModel",
    "MultispectralCube",
    "NegativeRadianceError",
    "OpticsConstants",
    "OracleFitter",
    "ParameterMaps",
    "RenderSettings",
    "Runtime",
    "ScriptError",
    "SegmentSettings",
    "SkinOptics",
    "SkinParams",
    "Spectrum",
    "TabulatedFunction",
    "ToolkitConfig",
    "TrainConfig",
    "UnconstrainedParams",
    "WavelengthGrid",
    "apply_edit",
    "bio_midpoint",
    "build_pipeline",
    "build_runtime",
    "config_hash",
    "config_to_dict",
    "decompose_cube",
    "default_config",
    "default_grid",
    "features_from",
    "fit_image",
    "fit_pixel",
    "forward",
    "gamut_swatch",
    "load_config",
    "load_cube",
    "load_model",
    "load_table",
    "load_tables",
    "make_grid",
    "oracle_fit",
    "parse_config",
    "parse_script",
    "predict_map",
    "radiance",
    "radiance_jacobian",
    "read_decomposition",
    "recompose",
    "render_image",
    "render_pixel",
    "resample",
    "resample_cube",
    "save_cube",
    "save_model",
    "skin_reflectance",
    "to_constrained",
    "to_unconstrained",
    "train",
    "write_decomposition",
    "write_png",
]
