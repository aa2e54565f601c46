#!/usr/bin/env python3
"""Build a netpbm corpus of natural-image patches from the photographs that
ship with scikit-image and scikit-learn (no network access needed).

Each patch is a random square crop (side 24-160 px) of a random photo,
optionally mirrored, resized to the target size and written as PPM.

    python scripts/make_natural_corpus.py --n 10000 --size 32 --out data/natural32
"""

import argparse
from pathlib import Path

import numpy as np

from kdwb.data import resize_bilinear, write_netpbm

PHOTOS = ("astronaut", "camera", "cat", "coffee", "coins", "rocket", "moon", "brick",
          "grass", "gravel", "hubble_deep_field", "immunohistochemistry", "retina",
          "clock", "cell")


def load_photos():
    import skimage.data
    from sklearn.datasets import load_sample_images

    photos = []
    for name in PHOTOS:
        img = np.asarray(getattr(skimage.data, name)(), dtype=np.float64)
        if img.max() > 1.0:
            img = img / 255.0
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        photos.append(img[..., :3])
    photos.extend(np.asarray(im, dtype=np.float64) / 255.0 for im in load_sample_images().images)
    return photos


def make_corpus(n, size, out, seed=0):
    rng = np.random.default_rng(seed)
    photos = load_photos()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        img = photos[rng.integers(len(photos))]
        h, w = img.shape[:2]
        side = int(rng.integers(24, min(160, h, w) + 1))
        y, x = rng.integers(0, h - side + 1), rng.integers(0, w - side + 1)
        crop = img[y:y + side, x:x + side].transpose(2, 0, 1)[None]
        if rng.random() < 0.5:
            crop = crop[..., ::-1]
        patch = resize_bilinear(np.ascontiguousarray(crop, dtype=np.float32), size, size)[0]
        write_netpbm(out / f"nat{i:05d}.ppm", patch)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    print(make_corpus(args.n, args.size, args.out, args.seed))


if __name__ == "__main__":
    main()
