"""Command line entry points.

Exit codes: 0 success, 2 unreadable or malformed input data (cubes,
scripts, masks, models, data lists), 3 configuration problems, 4 numeric
failure on more than half of the fitted pixels.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .cube import CubeParseError, load_cube, resample_cube
from .editing import ScriptError, parse_script
from .fitting import FitStatus, STATUS_CODES
from .rendering import (
    WhitePointError,
    gamut_swatch,
    png_bytes,
    read_png,
    render_image,
    write_png,
)
from .segmentation import (
    LabelledPixelSet,
    ModelParseError,
    TrainConfig,
    labelled_set_from_mask,
    load_model,
    predict_map,
    save_model,
    train,
)
from .session import (
    build_runtime,
    decompose_cube,
    edited_png,
    read_decomposition,
    runtime_for,
    update_probability,
    view_png,
    write_decomposition,
)
from .spectral import TableParseError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


class NumericFailureError(RuntimeError):
    """The fit blew up on most of the image."""


class InputParseError(ValueError):
    """Malformed auxiliary input (data lists and similar)."""


_PARSE_ERRORS = (CubeParseError, ScriptError, ModelParseError,
                 TableParseError, InputParseError, FileNotFoundError,
                 IsADirectoryError, NotADirectoryError)


def _directory_mask_loader(base: Path):
    def load(name: str) -> np.ndarray:
        path = Path(name)
        if not path.is_absolute():
            path = base / path
        return read_png(path)
    return load


def cmd_decompose(args) -> int:
    cfg = load_config(args.config)
    runtime = build_runtime(cfg)
    cube = resample_cube(load_cube(args.cube), cfg.grid)
    model = (load_model(Path(cfg.segment.model))
             if cfg.segment.model is not None else None)
    maps = decompose_cube(cube, runtime, model)
    out = write_decomposition(args.out, cube, maps, cfg)
    failed = float(np.mean(maps.status == STATUS_CODES[FitStatus.FAILED]))
    if failed > 0.5:
        raise NumericFailureError(
            f"fit failed on {failed:.0%} of pixels; see {out}")
    skin = maps.skin_probability >= 0.5
    err = float(np.mean(maps.rel_error[skin])) if np.any(skin) else float("nan")
    print(f"wrote {out} (mean relative spectral error over skin: {err:.4%})")
    return EXIT_OK


def cmd_edit(args) -> int:
    dec = read_decomposition(args.dir)
    runtime = runtime_for(dec)
    script_path = Path(args.script)
    script = parse_script(script_path.read_text(),
                          mask_loader=_directory_mask_loader(script_path.parent))
    Path(args.out).write_bytes(edited_png(dec, runtime, script))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    target = Path(args.target)
    if target.is_dir():
        dec = read_decomposition(target)
        runtime = runtime_for(dec)
        png = view_png(dec, runtime, args.view)
    else:
        cfg = load_config(args.config)
        runtime = build_runtime(cfg)
        cube = resample_cube(load_cube(target), cfg.grid)
        png = png_bytes(render_image(runtime.pipeline, cube))
    Path(args.out).write_bytes(png)
    print(f"wrote {args.out}")
    return EXIT_OK


def _parse_data_list(path: Path) -> list[tuple[Path, Path]]:
    """Lines of `<decomposition dir>,<mask png>`; `#` starts a comment."""
    entries = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not all(parts):
            raise InputParseError(
                f"{path}:{lineno}: expected '<dir>,<mask.png>'")
        entries.append((_resolve(parts[0], path.parent),
                        _resolve(parts[1], path.parent)))
    if not entries:
        raise InputParseError(f"{path}: no training entries")
    return entries


def _resolve(name: str, base: Path) -> Path:
    path = Path(name)
    return path if path.is_absolute() else base / path


def cmd_segment_train(args) -> int:
    cfg = load_config(args.config)
    parts = []
    for dir_path, mask_path in _parse_data_list(Path(args.data)):
        dec = read_decomposition(dir_path)
        mask = read_png(mask_path)
        parts.append(labelled_set_from_mask(dec.cube, dec.maps, mask))
    data = LabelledPixelSet.concatenate(parts)
    settings = cfg.segment
    result = train(data,
                   TrainConfig(learning_rate=settings.learning_rate,
                               batch_size=settings.batch_size,
                               max_epochs=settings.max_epochs,
                               patience=settings.patience,
                               validation_fraction=settings.validation_fraction),
                   seed=settings.seed)
    save_model(result.model, args.out)
    print(f"wrote {args.out} (train accuracy {result.train_accuracy:.2%}, "
          f"validation accuracy {result.validation_accuracy:.2%})")
    return EXIT_OK


def cmd_segment_apply(args) -> int:
    dec = read_decomposition(args.dir)
    model = load_model(Path(args.model))
    prob = predict_map(model, dec.cube, dec.maps)
    update_probability(dec, prob)
    print(f"updated {dec.path} "
          f"({int(np.sum(prob >= 0.5))} pixels classified as skin)")
    return EXIT_OK


def cmd_swatch(args) -> int:
    cfg = load_config(args.config)
    runtime = build_runtime(cfg)
    img = gamut_swatch(runtime.optics, runtime.pipeline,
                       resolution=args.resolution)
    write_png(img, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config)
    app = create_app(cfg, preload=tuple(args.session or ()),
                     ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skinspec",
        description="Decompose multispectral face images into diffuse and "
                    "specular shading plus melanin and haemoglobin maps, "
                    "edit the maps, and render the result to sRGB.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="fit the model to every pixel")
    p.add_argument("cube", help="input cube (.msc)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("edit", help="apply an edit script and render")
    p.add_argument("dir", help="decomposition directory")
    p.add_argument("--script", required=True, help="edit script JSON")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("render", help="render a cube or a decomposition")
    p.add_argument("target", help="cube file or decomposition directory")
    p.add_argument("--config", help="JSON config file (cube inputs only)")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--view", choices=("reconstruction", "input"),
                   default="reconstruction",
                   help="which view of a decomposition to render")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("segment", help="train or apply the skin classifier")
    seg = p.add_subparsers(dest="segment_command", required=True)
    t = seg.add_parser("train", help="train from labelled decompositions")
    t.add_argument("--data", required=True,
                   help="text file of '<dir>,<mask.png>' lines")
    t.add_argument("--config", help="JSON config file")
    t.add_argument("--out", required=True, help="output model file")
    t.set_defaults(func=cmd_segment_train)
    a = seg.add_parser("apply", help="recompute a probability map")
    a.add_argument("dir", help="decomposition directory")
    a.add_argument("--model", required=True, help="trained model file")
    a.set_defaults(func=cmd_segment_apply)

    p = sub.add_parser("swatch", help="render the reachable skin colours")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--resolution", type=int, default=64)
    p.set_defaults(func=cmd_swatch)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--session", action="append",
                   help="decomposition directory to preload (repeatable)")
    p.add_argument("--ui", help="static directory to serve under /ui")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except WhitePointError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except _PARSE_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except NumericFailureError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
