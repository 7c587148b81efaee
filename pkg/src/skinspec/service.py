"""HTTP service over decomposition directories.

The service registers decomposition directories as in-memory sessions
(an LRU store, default capacity 4) and serves map images, raw map floats,
sRGB renders, per-pixel spectra, and edit previews. Sessions are immutable
snapshots; an edit request derives a preview and never mutates the stored
decomposition, so concurrent identical requests return identical bytes.

Edit previews and renders call the same functions the CLI calls, which is
what makes CLI/HTTP output parity a structural property.

Errors: 400 invalid script or unusable registration path, 404 unknown
session/map/job, 422 out-of-range pixel or mask dimension mismatch.

Long decomposition runs go through POST /jobs/decompose onto a small
worker pool; GET /jobs/{id} polls the state and yields the session id
once the result directory is registered.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import threading
from collections import OrderedDict
from contextlib import asynccontextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from . import __version__
from .config import ToolkitConfig, default_config
from .cube import CubeParseError, load_cube, resample_cube
from .editing import EditScript, ScriptError, parse_script
from .fitting import ParameterMaps, STATUS_FROM_CODE
from .rendering import read_png
from .session import (
    Decomposition,
    FLOAT_MAP_FILES,
    Runtime,
    build_runtime,
    decompose_cube,
    edited_png,
    read_decomposition,
    runtime_for,
    view_png,
    write_decomposition,
)
from .skin import F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN

DEFAULT_SESSION_CAP = 4

VIEWS = ("reconstruction", "input")

_DATA_URI_PREFIX = "data:image/png;base64,"

# five-stop ramp for false-colour maps, dark violet to pale yellow
_RAMP = np.array([
    [0.050, 0.030, 0.220],
    [0.280, 0.060, 0.470],
    [0.720, 0.210, 0.470],
    [0.970, 0.550, 0.230],
    [0.990, 0.950, 0.640],
])


@dataclass(frozen=True)
class _Session:
    id: str
    path: Path
    dec: Decomposition
    runtime: Runtime


class _SessionStore:
    """LRU store of registered decomposition directories."""

    def __init__(self, cap: int = DEFAULT_SESSION_CAP):
        self.cap = cap
        self._lock = threading.Lock()
        self._by_id: "OrderedDict[str, _Session]" = OrderedDict()
        self._id_by_path: dict[str, str] = {}
        self._counter = 0

    def register(self, path: Path) -> _Session:
        with self._lock:
            key = str(path.resolve())
            sid = self._id_by_path.get(key)
            if sid is not None and sid in self._by_id:
                self._by_id.move_to_end(sid)
                return self._by_id[sid]
            dec = read_decomposition(path)
            runtime = runtime_for(dec)
            self._counter += 1
            sid = f"s{self._counter}"
            session = _Session(id=sid, path=path, dec=dec, runtime=runtime)
            self._by_id[sid] = session
            self._id_by_path[key] = sid
            while len(self._by_id) > self.cap:
                old_id, old = self._by_id.popitem(last=False)
                self._id_by_path.pop(str(old.path.resolve()), None)
            return session

    def get(self, sid: str) -> _Session:
        with self._lock:
            session = self._by_id.get(sid)
            if session is None:
                raise HTTPException(404, f"unknown session '{sid}'")
            self._by_id.move_to_end(sid)
            return session


class _JobRunner:
    """Background decompositions with a polled status dict."""

    def __init__(self, cfg: ToolkitConfig, store: _SessionStore,
                 workers: int = 2):
        self.cfg = cfg
        self.store = store
        self._pool = ThreadPoolExecutor(max_workers=workers,
                                        thread_name_prefix="decompose")
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}
        self._counter = 0

    def submit(self, cube_path: Path, out_dir: Path) -> str:
        with self._lock:
            self._counter += 1
            job_id = f"j{self._counter}"
            self._jobs[job_id] = {"state": "queued"}
        self._pool.submit(self._run, job_id, cube_path, out_dir)
        return job_id

    def status(self, job_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise HTTPException(404, f"unknown job '{job_id}'")
            return dict(job)

    def _set(self, job_id: str, **fields) -> None:
        with self._lock:
            self._jobs[job_id].update(fields)

    def _run(self, job_id: str, cube_path: Path, out_dir: Path) -> None:
        self._set(job_id, state="running")
        try:
            runtime = build_runtime(self.cfg)
            cube = resample_cube(load_cube(cube_path), self.cfg.grid)
            maps = decompose_cube(cube, runtime)
            write_decomposition(out_dir, cube, maps, self.cfg)
            session = self.store.register(out_dir)
            self._set(job_id, state="done", session=session.id)
        except Exception as err:  # reported through polling, not logs
            self._set(job_id, state="error", error=str(err))

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)


def _map_values(maps: ParameterMaps, name: str) -> np.ndarray:
    if name == "probability":
        return maps.skin_probability
    if name == "rel_error":
        return maps.rel_error
    return maps.map_by_name(name)


def _map_range(maps: ParameterMaps, name: str) -> tuple[float, float]:
    """Display range: fixed for bounded maps, [0, max] for open ones."""
    if name == "f_mel":
        return F_MEL_MIN, F_MEL_MAX
    if name == "f_blood":
        return F_BLOOD_MIN, F_BLOOD_MAX
    if name == "probability":
        return 0.0, 1.0
    top = float(np.max(_map_values(maps, name)))
    return 0.0, top if top > 0 else 1.0


def _false_colour_png(maps: ParameterMaps, name: str) -> bytes:
    from .rendering import png_bytes

    values = np.asarray(_map_values(maps, name), dtype=np.float64)
    lo, hi = _map_range(maps, name)
    t = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    pos = t * (len(_RAMP) - 1)
    idx = np.minimum(pos.astype(int), len(_RAMP) - 2)
    frac = (pos - idx)[..., None]
    rgb = _RAMP[idx] * (1.0 - frac) + _RAMP[idx + 1] * frac
    return png_bytes(np.rint(255.0 * rgb).astype(np.uint8))


def _session_meta(session: _Session) -> dict:
    dec = session.dec
    grid = dec.cube.grid
    ranges = {name: list(_map_range(dec.maps, name))
              for name in FLOAT_MAP_FILES}
    return {
        "id": session.id,
        "width": dec.cube.width,
        "height": dec.cube.height,
        "grid": {"lambda_min": grid.lambda_min,
                 "lambda_max": grid.lambda_max,
                 "count": grid.count},
        "wavelengths": [float(v) for v in grid.samples],
        "maps": list(FLOAT_MAP_FILES),
        "views": list(VIEWS),
        "ranges": ranges,
        "report": dec.report,
    }


def _load_data_uri_mask(value: str) -> np.ndarray:
    if not value.startswith(_DATA_URI_PREFIX):
        raise ScriptError("mask must be a base64 PNG data URI")
    try:
        blob = base64.b64decode(value[len(_DATA_URI_PREFIX):], validate=True)
    except binascii.Error:
        raise ScriptError("mask data URI holds invalid base64") from None
    try:
        return read_png(io.BytesIO(blob))
    except Exception:
        raise ScriptError("mask data URI is not a decodable PNG") from None


def _check_mask_dims(script: EditScript, width: int, height: int) -> None:
    for i, op in enumerate(script.ops):
        if op.mask is not None and op.mask.shape != (height, width):
            raise HTTPException(
                422, f"op {i}: mask is {op.mask.shape[1]}x{op.mask.shape[0]}, "
                     f"session is {width}x{height}")


def create_app(config: ToolkitConfig | None = None,
               preload: Sequence[str | Path] = (),
               session_cap: int = DEFAULT_SESSION_CAP,
               job_workers: int = 2,
               ui_dir: str | Path | None = None) -> FastAPI:
    cfg = config if config is not None else default_config()
    store = _SessionStore(cap=session_cap)
    jobs = _JobRunner(cfg, store, workers=job_workers)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        jobs.shutdown()

    app = FastAPI(title="skinspec service", version=__version__,
                  lifespan=lifespan)
    # the browser UI may be hosted anywhere; responses carry no credentials
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
    app.state.store = store
    app.state.jobs = jobs
    for path in preload:
        store.register(Path(path))

    @app.get("/")
    def root() -> dict:
        return {"service": "skinspec", "version": __version__}

    @app.post("/sessions")
    def register_session(body: dict) -> dict:
        path = body.get("path") if isinstance(body, dict) else None
        if not isinstance(path, str) or not path:
            raise HTTPException(400, "body must be {\"path\": \"<dir>\"}")
        try:
            session = store.register(Path(path))
        except (FileNotFoundError, NotADirectoryError, CubeParseError,
                KeyError, ValueError, json.JSONDecodeError) as err:
            raise HTTPException(400, f"cannot register '{path}': {err}")
        return _session_meta(session)

    @app.get("/sessions/{sid}/meta")
    def meta(sid: str) -> dict:
        return _session_meta(store.get(sid))

    @app.get("/sessions/{sid}/maps/{filename}")
    def map_file(sid: str, filename: str) -> Response:
        session = store.get(sid)
        stem, dot, ext = filename.rpartition(".")
        if not dot or stem not in FLOAT_MAP_FILES or ext not in ("png", "bin"):
            raise HTTPException(404, f"unknown map '{filename}'")
        if ext == "bin":
            values = np.ascontiguousarray(
                _map_values(session.dec.maps, stem), dtype="<f4")
            return Response(values.tobytes(),
                            media_type="application/octet-stream")
        return Response(_false_colour_png(session.dec.maps, stem),
                        media_type="image/png")

    @app.get("/sessions/{sid}/render")
    def render(sid: str, view: str = "reconstruction") -> Response:
        session = store.get(sid)
        if view not in VIEWS:
            raise HTTPException(422, f"view must be one of {list(VIEWS)}")
        return Response(view_png(session.dec, session.runtime, view),
                        media_type="image/png")

    @app.post("/sessions/{sid}/edit")
    async def edit(sid: str, request: Request) -> Response:
        session = store.get(sid)
        raw = await request.body()
        try:
            script = parse_script(raw, mask_loader=_load_data_uri_mask)
        except ScriptError as err:
            raise HTTPException(400, str(err))
        _check_mask_dims(script, session.dec.cube.width,
                         session.dec.cube.height)
        return Response(edited_png(session.dec, session.runtime, script),
                        media_type="image/png")

    @app.get("/sessions/{sid}/spectrum")
    def spectrum(sid: str, x: int, y: int) -> dict:
        session = store.get(sid)
        dec = session.dec
        if not (0 <= x < dec.cube.width and 0 <= y < dec.cube.height):
            raise HTTPException(422, f"pixel ({x}, {y}) outside "
                                     f"{dec.cube.width}x{dec.cube.height}")
        maps = dec.maps
        i_d = float(maps.diffuse[y, x])
        i_s = float(maps.specular[y, x])
        f_mel = float(maps.f_mel[y, x])
        f_blood = float(maps.f_blood[y, x])
        refl = session.runtime.optics.reflectance(f_mel, f_blood)
        e = session.runtime.illuminant.values
        model = e * (i_d * refl + i_s)
        return {
            "x": x,
            "y": y,
            "wavelengths": [float(v) for v in dec.cube.grid.samples],
            "observed": [float(v) for v in dec.cube.pixel(x, y).values],
            "reconstructed": [float(v) for v in model],
            "reflectance": [float(v) for v in refl],
            "params": {
                "i_d": i_d,
                "i_s": i_s,
                "f_mel": f_mel,
                "f_blood": f_blood,
                "status": STATUS_FROM_CODE[int(maps.status[y, x])].value,
                "relative_spectral_error": float(maps.rel_error[y, x]),
                "skin_probability": float(maps.skin_probability[y, x]),
            },
        }

    @app.post("/jobs/decompose")
    def submit_job(body: dict) -> dict:
        if not isinstance(body, dict):
            raise HTTPException(400, "body must be a JSON object")
        cube_path = body.get("cube")
        out_dir = body.get("out")
        if not isinstance(cube_path, str) or not isinstance(out_dir, str):
            raise HTTPException(
                400, "body must be {\"cube\": \"<file>\", \"out\": \"<dir>\"}")
        return {"job": jobs.submit(Path(cube_path), Path(out_dir))}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str) -> dict:
        return jobs.status(job_id)

    return app
