"""Parameter-recovery sweep over noise levels.

Draws random pixels from the feasible parameter box, renders them under
mean-normalized daylight, refits, and tabulates recovery statistics per
noise level. The noiseless row is the self-consistency check; the noisy
rows show how fast the chromophore estimates degrade.
"""

import argparse
import time

import numpy as np

from skinspec.fitting import FitStatus, fit_pixel
from skinspec.session import load_illuminant
from skinspec.config import default_config
from skinspec.skin import SkinOptics
from skinspec.spectral import Spectrum
from skinspec.synthetic import radiance_matrix, random_skin_params


def run_level(noise, n, grid, illuminant, optics, rng):
    params = random_skin_params(rng, n)
    spectra = radiance_matrix(params, illuminant, optics)
    if noise > 0:
        spectra = np.clip(
            spectra * (1.0 + noise * rng.standard_normal(spectra.shape)),
            0.0, None)

    t0 = time.perf_counter()
    results = [fit_pixel(Spectrum(grid, row), illuminant, optics)
               for row in spectra]
    elapsed = time.perf_counter() - t0

    true = np.array([[p.bio.f_mel, p.bio.f_blood] for p in params])
    est = np.array([[r.params.bio.f_mel, r.params.bio.f_blood]
                    for r in results])
    abs_err = np.abs(est - true)
    spec_err = np.array([r.relative_spectral_error for r in results])
    converged = np.mean([r.status is FitStatus.CONVERGED for r in results])
    return {
        "noise": noise,
        "mel_mae": abs_err[:, 0].mean(),
        "blood_mae": abs_err[:, 1].mean(),
        "mel_p95": np.percentile(abs_err[:, 0], 95),
        "blood_p95": np.percentile(abs_err[:, 1], 95),
        "spec_err": spec_err.mean(),
        "converged": converged,
        "ms_per_px": 1000.0 * elapsed / n,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pixels", type=int, default=500)
    ap.add_argument("--noise", type=float, nargs="+",
                    default=[0.0, 0.005, 0.01, 0.02, 0.05])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = default_config()
    illuminant = load_illuminant(cfg)
    optics = SkinOptics.build(cfg.grid, constants=cfg.optics)
    rng = np.random.default_rng(args.seed)

    print(f"{args.pixels} pixels per level, seed {args.seed}")
    header = (f"{'noise':>6}  {'mel MAE':>9}  {'mel p95':>9}  "
              f"{'blood MAE':>9}  {'blood p95':>9}  {'spec err':>9}  "
              f"{'conv':>6}  {'ms/px':>6}")
    print(header)
    print("-" * len(header))
    for noise in args.noise:
        row = run_level(noise, args.pixels, cfg.grid, illuminant, optics, rng)
        print(f"{row['noise']:>6.3f}  {row['mel_mae']:>9.2e}  "
              f"{row['mel_p95']:>9.2e}  {row['blood_mae']:>9.2e}  "
              f"{row['blood_p95']:>9.2e}  {row['spec_err']:>9.4%}  "
              f"{row['converged']:>6.1%}  {row['ms_per_px']:>6.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
