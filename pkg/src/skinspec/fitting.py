"""Per-pixel inversion of the skin radiance model.

The four constrained unknowns (non-negative shading, box-bounded volume
fractions) are mapped to unconstrained variables: shading through exp,
fractions through a scaled logistic. A damped Gauss-Newton (Levenberg-
Marquardt) iteration with a trust-region style damping update minimises the
squared radiance residual in the unconstrained variables, so every iterate
is feasible by construction. Multiple deterministic starts guard against
the logistic's flat tails.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .skin import (
    BioParams,
    F_BLOOD_MAX,
    F_BLOOD_MIN,
    F_MEL_MAX,
    F_MEL_MIN,
    SkinOptics,
    SkinParams,
    bio_midpoint,
)
from .spectral import Spectrum, require_same_grid


class BoundaryError(ValueError):
    """Parameters on the constraint boundary have no finite preimage."""


@dataclass(frozen=True)
class UnconstrainedParams:
    """Free-space coordinates (phi) of the four constrained unknowns."""

    phi_d: float
    phi_s: float
    phi_mel: float
    phi_blood: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi_d, self.phi_s, self.phi_mel, self.phi_blood])


def _logistic(x):
    # clip keeps exp finite; the result is exact to within float rounding
    x = np.clip(np.asarray(x, dtype=np.float64), -700.0, 700.0)
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def to_constrained(u: UnconstrainedParams) -> SkinParams:
    """Map free coordinates to feasible skin parameters."""
    phi = u.as_array()
    if not np.all(np.isfinite(phi)):
        raise ValueError("unconstrained parameters must be finite")
    s_mel, s_blood = _logistic(np.array([u.phi_mel, u.phi_blood]))
    return SkinParams(
        diffuse=math.exp(u.phi_d),
        specular=math.exp(u.phi_s),
        bio=BioParams(
            f_mel=(F_MEL_MAX - F_MEL_MIN) * float(s_mel) + F_MEL_MIN,
            f_blood=(F_BLOOD_MAX - F_BLOOD_MIN) * float(s_blood) + F_BLOOD_MIN,
        ),
    )


def to_unconstrained(p: SkinParams) -> UnconstrainedParams:
    """Inverse map; parameters must be strictly interior."""
    if p.diffuse <= 0 or p.specular <= 0:
        raise BoundaryError("shading must be strictly positive to invert")
    t_mel = (p.bio.f_mel - F_MEL_MIN) / (F_MEL_MAX - F_MEL_MIN)
    t_blood = (p.bio.f_blood - F_BLOOD_MIN) / (F_BLOOD_MAX - F_BLOOD_MIN)
    if not (0.0 < t_mel < 1.0) or not (0.0 < t_blood < 1.0):
        raise BoundaryError("volume fractions must be strictly inside the box")
    return UnconstrainedParams(
        phi_d=math.log(p.diffuse),
        phi_s=math.log(p.specular),
        phi_mel=_logit(t_mel),
        phi_blood=_logit(t_blood),
    )


class FitStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    DARK_PIXEL = "dark-pixel"
    FAILED = "failed"


STATUS_CODES = {
    FitStatus.CONVERGED: 0,
    FitStatus.MAX_ITER: 1,
    FitStatus.DARK_PIXEL: 2,
    FitStatus.FAILED: 3,
}
STATUS_FROM_CODE = {v: k for k, v in STATUS_CODES.items()}


def default_seeds() -> tuple[BioParams, ...]:
    """Spread starting fractions: midpoint, low/high melanin, high blood."""
    mel_lo = F_MEL_MIN + 0.1 * (F_MEL_MAX - F_MEL_MIN)
    mel_hi = F_MEL_MIN + 0.9 * (F_MEL_MAX - F_MEL_MIN)
    blood_mid = 0.5 * (F_BLOOD_MIN + F_BLOOD_MAX)
    blood_hi = F_BLOOD_MIN + 0.9 * (F_BLOOD_MAX - F_BLOOD_MIN)
    return (
        bio_midpoint(),
        BioParams(mel_lo, blood_mid),
        BioParams(mel_hi, blood_mid),
        BioParams(0.5 * (F_MEL_MIN + F_MEL_MAX), blood_hi),
    )


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    multistart_seeds: tuple[BioParams, ...] = field(default_factory=default_seeds)
    # None selects the automatic threshold: 1e-4 of the mean image radiance
    # in fit_image, which for a lone pixel degenerates to "exactly zero".
    dark_pixel_threshold: float | None = None
    # Remaining starts are skipped once a fit explains the pixel to this
    # relative residual; the skipped starts could not produce a lower cost
    # that matters.
    early_exit_relative_residual: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.gradient_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if len(self.multistart_seeds) == 0:
            raise ValueError("at least one multistart seed is required")
        object.__setattr__(self, "multistart_seeds", tuple(self.multistart_seeds))


@dataclass(frozen=True)
class FitResult:
    params: SkinParams
    residual_norm: float
    relative_spectral_error: float
    iterations: int
    status: FitStatus


@dataclass
class ParameterMaps:
    """Fitted per-pixel parameters in image form."""

    width: int
    height: int
    diffuse: np.ndarray
    specular: np.ndarray
    f_mel: np.ndarray
    f_blood: np.ndarray
    status: np.ndarray
    rel_error: np.ndarray
    skin_probability: np.ndarray | None = None

    # wire names of the four parameter maps, in canonical order
    MAP_NAMES = ("i_d", "i_s", "f_mel", "f_blood")

    def __post_init__(self):
        shape = (self.height, self.width)
        for name in ("diffuse", "specular", "f_mel", "f_blood", "status",
                     "rel_error"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"map {name} has shape {arr.shape}, "
                                 f"expected {shape}")
        if (self.skin_probability is not None
                and self.skin_probability.shape != shape):
            raise ValueError("skin_probability shape mismatch")

    @classmethod
    def empty(cls, width: int, height: int) -> "ParameterMaps":
        shape = (height, width)
        return cls(
            width=width,
            height=height,
            diffuse=np.zeros(shape),
            specular=np.zeros(shape),
            f_mel=np.zeros(shape),
            f_blood=np.zeros(shape),
            status=np.full(shape, STATUS_CODES[FitStatus.FAILED], dtype=np.uint8),
            rel_error=np.zeros(shape),
        )

    def map_by_name(self, name: str) -> np.ndarray:
        try:
            attr = {"i_d": "diffuse", "i_s": "specular",
                    "f_mel": "f_mel", "f_blood": "f_blood"}[name]
        except KeyError:
            raise KeyError(f"unknown map {name!r}") from None
        return getattr(self, attr)

    def copy(self) -> "ParameterMaps":
        return ParameterMaps(
            width=self.width,
            height=self.height,
            diffuse=self.diffuse.copy(),
            specular=self.specular.copy(),
            f_mel=self.f_mel.copy(),
            f_blood=self.f_blood.copy(),
            status=self.status.copy(),
            rel_error=self.rel_error.copy(),
            skin_probability=(None if self.skin_probability is None
                              else self.skin_probability.copy()),
        )


_MEL_SPAN = F_MEL_MAX - F_MEL_MIN
_BLOOD_SPAN = F_BLOOD_MAX - F_BLOOD_MIN


def _model_and_jacobian(phi: np.ndarray, e: np.ndarray, optics: SkinOptics
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Radiance model and its Jacobian in the unconstrained coordinates."""
    i_d = math.exp(phi[0])
    i_s = math.exp(phi[1])
    s_mel = float(_logistic(phi[2]))
    s_blood = float(_logistic(phi[3]))
    f_mel = _MEL_SPAN * s_mel + F_MEL_MIN
    f_blood = _BLOOD_SPAN * s_blood + F_BLOOD_MIN
    r, dr_dmel, dr_dblood = optics.reflectance_with_grads(f_mel, f_blood)
    model = e * (i_d * r + i_s)
    jac = np.empty((e.shape[0], 4))
    jac[:, 0] = e * r * i_d
    jac[:, 1] = e * i_s
    jac[:, 2] = e * i_d * dr_dmel * (_MEL_SPAN * s_mel * (1.0 - s_mel))
    jac[:, 3] = e * i_d * dr_dblood * (_BLOOD_SPAN * s_blood * (1.0 - s_blood))
    return model, jac


def _levenberg_marquardt(phi0: np.ndarray, l_obs: np.ndarray, e: np.ndarray,
                         optics: SkinOptics, opts: FitOptions,
                         trace: Callable[[np.ndarray], None] | None = None
                         ) -> tuple[np.ndarray, float, int, bool]:
    """Damped Gauss-Newton with multiplicative trust-region damping update.

    Returns (phi, cost, iterations, converged). Accepted steps never
    increase the cost; the damping grows geometrically on rejection.
    """
    phi = np.array(phi0, dtype=np.float64)
    if trace is not None:
        trace(phi)
    model, jac = _model_and_jacobian(phi, e, optics)
    residual = model - l_obs
    cost = float(residual @ residual)
    grad = jac.T @ residual
    hess = jac.T @ jac
    mu = 1e-3 * max(float(hess.diagonal().max()), 1e-300)
    nu = 2.0
    eye = np.eye(4)
    iterations = 0

    if float(np.abs(grad).max()) < opts.gradient_tolerance or cost == 0.0:
        return phi, cost, iterations, True

    while iterations < opts.max_iterations:
        iterations += 1
        try:
            step = np.linalg.solve(hess + mu * eye, -grad)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2.0
            continue
        step_norm = float(np.linalg.norm(step))
        if step_norm < opts.step_tolerance:
            return phi, cost, iterations, True
        phi_new = phi + step
        model_new, jac_new = _model_and_jacobian(phi_new, e, optics)
        residual_new = model_new - l_obs
        cost_new = float(residual_new @ residual_new)
        if cost_new < cost:
            predicted = float(step @ (mu * step - grad))
            rho = (cost - cost_new) / predicted if predicted > 0 else 1.0
            phi = phi_new
            if trace is not None:
                trace(phi)
            residual = residual_new
            cost = cost_new
            jac = jac_new
            grad = jac.T @ residual
            hess = jac.T @ jac
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if float(np.abs(grad).max()) < opts.gradient_tolerance or cost == 0.0:
                return phi, cost, iterations, True
        else:
            mu *= nu
            nu *= 2.0
            if not math.isfinite(mu) or mu > 1e200:
                # Damping saturated: no direction improves, treat as stall.
                return phi, cost, iterations, True
    return phi, cost, iterations, False


def _initial_diffuse(l_mean: float, e: np.ndarray, r_seed: np.ndarray) -> float:
    """Choose i_d so the seed's mean model radiance matches the pixel."""
    denom = float(np.mean(e * r_seed)) + 0.05 * float(np.mean(e))
    return max(l_mean / denom, 1e-12)


def _relative_spectral_error(l_obs: np.ndarray, model: np.ndarray,
                             e: np.ndarray) -> float:
    """Mean relative absolute error between illuminant-divided spectra."""
    r_obs = l_obs / e
    r_fit = model / e
    denom = float(np.mean(r_obs))
    if denom <= 0:
        return 0.0
    return float(np.mean(np.abs(r_obs - r_fit))) / denom


def _dark_result() -> FitResult:
    return FitResult(
        params=SkinParams(0.0, 0.0, bio_midpoint()),
        residual_norm=0.0,
        relative_spectral_error=0.0,
        iterations=0,
        status=FitStatus.DARK_PIXEL,
    )


def _fit_vector(l_vals: np.ndarray, e_vals: np.ndarray, optics: SkinOptics,
                opts: FitOptions, dark_threshold: float,
                trace: Callable[[np.ndarray], None] | None = None) -> FitResult:
    l_mean = float(np.mean(l_vals))
    if l_mean < dark_threshold or l_mean <= 0.0:
        return _dark_result()

    l_norm = float(np.linalg.norm(l_vals))
    early_cost = (opts.early_exit_relative_residual * l_norm) ** 2
    best: tuple[float, np.ndarray, int, bool] | None = None
    total_iters = 0
    for seed in opts.multistart_seeds:
        r_seed = optics.reflectance(seed.f_mel, seed.f_blood)
        i_d0 = _initial_diffuse(l_mean, e_vals, r_seed)
        phi0 = to_unconstrained(
            SkinParams(diffuse=i_d0, specular=0.05 * i_d0, bio=seed)).as_array()
        phi, cost, iters, converged = _levenberg_marquardt(
            phi0, l_vals, e_vals, optics, opts, trace=trace)
        total_iters += iters
        if best is None or cost < best[0]:
            best = (cost, phi, total_iters, converged)
        if cost <= early_cost:
            break

    cost, phi, _, converged = best
    params = to_constrained(UnconstrainedParams(*phi))
    model, _ = _model_and_jacobian(phi, e_vals, optics)
    return FitResult(
        params=params,
        residual_norm=math.sqrt(cost),
        relative_spectral_error=_relative_spectral_error(l_vals, model, e_vals),
        iterations=total_iters,
        status=FitStatus.CONVERGED if converged else FitStatus.MAX_ITER,
    )


def _check_fit_inputs(l_obs: Spectrum, illuminant: Spectrum,
                      optics: SkinOptics) -> None:
    require_same_grid(l_obs.grid, illuminant.grid, "observation and illuminant")
    require_same_grid(l_obs.grid, optics.grid, "observation and optics")
    if np.any(illuminant.values <= 0):
        raise ValueError("illuminant must be strictly positive in every channel")


def fit_pixel(l_obs: Spectrum, illuminant: Spectrum, optics: SkinOptics,
              opts: FitOptions | None = None) -> FitResult:
    """Fit the four-parameter model to one observed radiance spectrum."""
    opts = opts if opts is not None else FitOptions()
    _check_fit_inputs(l_obs, illuminant, optics)
    if opts.dark_pixel_threshold is None:
        dark = 1e-4 * float(np.mean(l_obs.values))
    else:
        dark = opts.dark_pixel_threshold
    return _fit_vector(l_obs.values, illuminant.values, optics, opts, dark)


class OracleFitter:
    """Exhaustive grid search over the fraction box.

    For each grid node the model is linear in the two shading scalars, so
    their non-negative least-squares optimum is found in closed form by
    checking the unconstrained stationary point and both single-active
    boundary cases. Independent of the iterative fit path by construction.
    """

    def __init__(self, illuminant: Spectrum, optics: SkinOptics,
                 grid_density: int = 200):
        require_same_grid(illuminant.grid, optics.grid, "illuminant and optics")
        if grid_density < 2:
            raise ValueError("grid_density must be >= 2")
        if np.any(illuminant.values <= 0):
            raise ValueError("illuminant must be strictly positive")
        f_mel = np.linspace(F_MEL_MIN, F_MEL_MAX, grid_density)
        f_blood = np.linspace(F_BLOOD_MIN, F_BLOOD_MAX, grid_density)
        mel_grid, blood_grid = np.meshgrid(f_mel, f_blood, indexing="ij")
        self._mel = mel_grid.ravel()
        self._blood = blood_grid.ravel()
        refl = optics.reflectance(self._mel[:, None], self._blood[:, None])
        e = illuminant.values
        self._e = e
        self._refl = refl
        self._a = refl * e          # (N, D): diffuse basis per node
        self._b = e                 # (D,):   specular basis
        self._aa = np.einsum("nd,nd->n", self._a, self._a)
        self._ab = self._a @ e
        self._bb = float(e @ e)

    def fit(self, l_obs: Spectrum) -> FitResult:
        l = l_obs.values
        al = self._a @ l
        bl = float(self._b @ l)
        ll = float(l @ l)
        aa, ab, bb = self._aa, self._ab, self._bb

        candidates_cost = np.full((3, aa.shape[0]), np.inf)
        candidates_id = np.zeros((3, aa.shape[0]))
        candidates_is = np.zeros((3, aa.shape[0]))

        # interior stationary point of the 2-variable least squares
        det = aa * bb - ab * ab
        ok = det > 0
        i_d = np.where(ok, (bb * al - ab * bl) / np.where(ok, det, 1.0), -1.0)
        i_s = np.where(ok, (aa * bl - ab * al) / np.where(ok, det, 1.0), -1.0)
        feasible = ok & (i_d >= 0) & (i_s >= 0)
        cost = ll - (i_d * al + i_s * bl)
        candidates_cost[0] = np.where(feasible, cost, np.inf)
        candidates_id[0] = i_d
        candidates_is[0] = i_s

        # specular clamped to zero
        i_d = np.maximum(al / aa, 0.0)
        candidates_cost[1] = ll - 2.0 * i_d * al + i_d * i_d * aa
        candidates_id[1] = i_d

        # diffuse clamped to zero
        i_s = max(bl / bb, 0.0)
        candidates_cost[2] = ll - 2.0 * i_s * bl + i_s * i_s * bb
        candidates_is[2] = i_s

        case = np.argmin(candidates_cost, axis=0)
        idx = np.arange(aa.shape[0])
        node_cost = candidates_cost[case, idx]
        best = int(np.argmin(node_cost))
        params = SkinParams(
            diffuse=float(candidates_id[case[best], best]),
            specular=float(candidates_is[case[best], best]),
            bio=BioParams(float(self._mel[best]), float(self._blood[best])),
        )
        model = self._e * (params.diffuse * self._refl[best] + params.specular)
        return FitResult(
            params=params,
            residual_norm=math.sqrt(max(float(node_cost[best]), 0.0)),
            relative_spectral_error=_relative_spectral_error(l, model, self._e),
            iterations=aa.shape[0],
            status=FitStatus.CONVERGED,
        )


def oracle_fit(l_obs: Spectrum, illuminant: Spectrum, optics: SkinOptics,
               grid_density: int = 200) -> FitResult:
    """One-shot exhaustive reference fit; see :class:`OracleFitter`."""
    return OracleFitter(illuminant, optics, grid_density).fit(l_obs)


def _fit_rows(args) -> tuple[int, list]:
    row_start, block, e_vals, optics, opts, dark = args
    out = []
    for y in range(block.shape[0]):
        for x in range(block.shape[1]):
            try:
                res = _fit_vector(block[y, x].astype(np.float64), e_vals,
                                  optics, opts, dark)
            except Exception:
                res = FitResult(
                    params=SkinParams(0.0, 0.0, bio_midpoint()),
                    residual_norm=float("nan"),
                    relative_spectral_error=0.0,
                    iterations=0,
                    status=FitStatus.FAILED,
                )
            out.append(res)
    return row_start, out


def fit_image(cube, illuminant: Spectrum, optics: SkinOptics,
              opts: FitOptions | None = None, workers: int = 1
              ) -> ParameterMaps:
    """Fit every pixel independently; output does not depend on scheduling."""
    opts = opts if opts is not None else FitOptions()
    require_same_grid(cube.grid, illuminant.grid, "cube and illuminant")
    require_same_grid(cube.grid, optics.grid, "cube and optics")
    if np.any(illuminant.values <= 0):
        raise ValueError("illuminant must be strictly positive in every channel")

    if opts.dark_pixel_threshold is None:
        dark = 1e-4 * float(np.mean(cube.data))
    else:
        dark = opts.dark_pixel_threshold

    height, width = cube.data.shape[:2]
    e_vals = illuminant.values

    n_chunks = 1 if workers <= 1 else min(height, workers * 4)
    bounds = np.linspace(0, height, n_chunks + 1).astype(int)
    tasks = [
        (int(y0), np.asarray(cube.data[y0:y1], dtype=np.float64), e_vals,
         optics, opts, dark)
        for y0, y1 in zip(bounds[:-1], bounds[1:]) if y1 > y0
    ]

    if workers <= 1:
        chunks = [_fit_rows(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_fit_rows, tasks))
    chunks.sort(key=lambda item: item[0])

    maps = ParameterMaps.empty(width, height)
    flat_results = [res for _, results in chunks for res in results]
    for i, res in enumerate(flat_results):
        y, x = divmod(i, width)
        maps.diffuse[y, x] = res.params.diffuse
        maps.specular[y, x] = res.params.specular
        maps.f_mel[y, x] = res.params.bio.f_mel
        maps.f_blood[y, x] = res.params.bio.f_blood
        maps.status[y, x] = STATUS_CODES[res.status]
        maps.rel_error[y, x] = res.relative_spectral_error
    return maps
