"""Train a skin classifier on purely synthetic data and save the weights.

Positive examples come from decomposed synthetic faces (noisy model
radiance plus the fitted parameter maps, exactly the features the
classifier sees in production). Negatives are the zero background pixels
together with smooth distractor spectra; the distractors get parameter
columns drawn from the skin distribution so the radiance channels have to
carry the decision.

The saved model plugs into `skinspec decompose` via the
config key segment.model, or into `skinspec segment apply`.
"""

import argparse
from pathlib import Path

import numpy as np

from skinspec.config import default_config
from skinspec.fitting import fit_image
from skinspec.segmentation import (
    LabelledPixelSet,
    TrainConfig,
    labelled_set_from_mask,
    save_model,
    train,
)
from skinspec.session import load_illuminant
from skinspec.skin import SkinOptics
from skinspec.synthetic import (
    distractor_spectra,
    make_face_cube,
    random_skin_params,
)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path, help="output weights path (.msmlp)")
    ap.add_argument("--faces", type=int, default=3)
    ap.add_argument("--distractors", type=int, default=1500)
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = default_config()
    illuminant = load_illuminant(cfg)
    optics = SkinOptics.build(cfg.grid, constants=cfg.optics)
    rng = np.random.default_rng(args.seed)

    parts = []
    for k in range(args.faces):
        face = make_face_cube(width=32, height=40, illuminant=illuminant,
                              noise=args.noise, seed=args.seed + k)
        maps = fit_image(face.cube, illuminant, optics, cfg.fit,
                         workers=args.workers)
        mask = np.where(face.skin_mask, 255, 0).astype(np.uint8)
        part = labelled_set_from_mask(face.cube, maps, mask)
        parts.append(part)
        print(f"face {k}: {int(part.labels.sum())} skin / "
              f"{int((1 - part.labels).sum())} background pixels")

    decoys = random_skin_params(rng, args.distractors)
    dis = distractor_spectra(args.distractors, cfg.grid, rng)
    cols = np.array([[p.bio.f_mel, p.bio.f_blood, p.diffuse, p.specular]
                     for p in decoys])
    parts.append(LabelledPixelSet(np.hstack([dis, cols]),
                                  np.zeros(args.distractors, dtype=int)))

    data = LabelledPixelSet.concatenate(parts)
    settings = cfg.segment
    result = train(data,
                   TrainConfig(learning_rate=settings.learning_rate,
                               batch_size=settings.batch_size,
                               max_epochs=settings.max_epochs,
                               patience=settings.patience,
                               validation_fraction=settings.validation_fraction),
                   seed=args.seed)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_model(result.model, args.out)
    print(f"wrote {args.out} ({len(data)} examples, "
          f"train accuracy {result.train_accuracy:.2%}, "
          f"validation accuracy {result.validation_accuracy:.2%})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
