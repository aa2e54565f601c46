"""Seeded synthetic stimulus: uniform noise, Gaussian noise, filled shapes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset

SHAPE_KINDS = ("rectangle", "ellipse", "triangle")
MIN_CONTRAST = 0.2
SIZE_RANGE = (0.2, 0.8)


def _check_n(n):
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")


def gen_uniform_noise(n, shape, lo=-0.3, hi=0.7, seed=0) -> Dataset:
    """i.i.d. U[lo, hi) pixels, shape (C, H, W) per sample."""
    _check_n(n)
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi})")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=(n, *shape)).astype(np.float32)
    # float32 rounding may land on hi
    top = np.nextafter(np.float32(hi), np.float32(-np.inf))
    while top >= hi:
        top = np.nextafter(top, np.float32(-np.inf))
    np.minimum(x, top, out=x)
    return Dataset(x, name="noise")


def gen_gaussian_noise(n, shape, mean=0.0, std=1.0, seed=0) -> Dataset:
    _check_n(n)
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    rng = np.random.default_rng(seed)
    x = rng.normal(mean, std, size=(n, *shape)).astype(np.float32)
    return Dataset(x, name="gauss")


def _inside(kind, h, w, top, left, sh, sw, apex):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = yy + 0.5 - top, xx + 0.5 - left  # pixel centres relative to the box
    if kind == "rectangle":
        return (cy >= 0) & (cy <= sh) & (cx >= 0) & (cx <= sw)
    if kind == "ellipse":
        ry, rx = sh / 2, sw / 2
        return ((cy - ry) / ry) ** 2 + ((cx - rx) / rx) ** 2 <= 1.0
    # triangle: base along the bottom of the box, apex on the top edge
    p = np.array([[apex, 0.0], [0.0, sh], [sw, sh]])
    crosses = [(b[0] - a[0]) * (cy - a[1]) - (b[1] - a[1]) * (cx - a[0])
               for a, b in ((p[0], p[1]), (p[1], p[2]), (p[2], p[0]))]
    return (np.all([c >= 0 for c in crosses], axis=0)
            | np.all([c <= 0 for c in crosses], axis=0))


def render_shape(kind, h, w, background, foreground, top, left, sh, sw, apex=None):
    """One h×w image: flat background plus a hard-edged filled shape."""
    img = np.full((h, w), background, dtype=np.float32)
    apex = sw / 2 if apex is None else apex
    img[_inside(kind, h, w, top, left, sh, sw, apex)] = foreground
    return img


def gen_shapes(n, h, w, seed=0, return_kinds=False):
    """Gray images each holding one rectangle, ellipse or triangle.

    Background gray b ~ U[0, 1]; foreground f ~ U over [0, 1] minus
    (b - 0.2, b + 0.2); box sides are 20%-80% of the canvas; position uniform
    with the box fully inside the canvas.
    """
    _check_n(n)
    if h < 8 or w < 8:
        raise ValueError(f"canvas must be at least 8x8, got {h}x{w}")
    rng = np.random.default_rng(seed)
    lo_h, hi_h = math.ceil(SIZE_RANGE[0] * h), math.floor(SIZE_RANGE[1] * h)
    lo_w, hi_w = math.ceil(SIZE_RANGE[0] * w), math.floor(SIZE_RANGE[1] * w)
    out = np.empty((n, 1, h, w), dtype=np.float32)
    kinds = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = int(rng.integers(3))
        b = rng.uniform(0.0, 1.0)
        # sample f from the allowed set [0, b-0.2] U [b+0.2, 1]
        left_len = max(b - MIN_CONTRAST, 0.0)
        right_len = max(1.0 - (b + MIN_CONTRAST), 0.0)
        u = rng.uniform(0.0, left_len + right_len)
        f = u if u < left_len else b + MIN_CONTRAST + (u - left_len)
        sh = int(rng.integers(lo_h, hi_h + 1))
        sw = int(rng.integers(lo_w, hi_w + 1))
        top = int(rng.integers(0, h - sh + 1))
        left = int(rng.integers(0, w - sw + 1))
        apex = rng.uniform(0.0, sw)
        out[i, 0] = render_shape(SHAPE_KINDS[k], h, w, b, f, top, left, sh, sw, apex)
        kinds[i] = k
    ds = Dataset(out, name="shapes")
    return (ds, kinds) if return_kinds else ds


@dataclass(frozen=True)
class StimulusSpec:
    """Declarative stimulus description; ``build()`` materialises it."""

    kind: str
    count: int = 1
    target_shape: tuple = (1, 28, 28)
    seed: int = 0
    params: dict = field(default_factory=dict)

    KINDS = ("uniform-noise", "gaussian-noise", "shapes", "directory", "mnist-idx", "cifar10-bin")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown stimulus kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.kind == "uniform-noise" and not self.params.get("lo", -0.3) < self.params.get("hi", 0.7):
            raise ValueError("uniform noise needs lo < hi")
        if self.kind == "gaussian-noise" and not self.params.get("std", 1.0) > 0:
            raise ValueError("gaussian noise needs std > 0")

    def build(self) -> Dataset:
        from .formats import load_cifar10_bin, load_image_dir, load_mnist_dir
        from .transforms import adapt_to

        c, h, w = self.target_shape
        p = self.params
        if self.kind == "uniform-noise":
            return gen_uniform_noise(self.count, self.target_shape, p.get("lo", -0.3), p.get("hi", 0.7), self.seed)
        if self.kind == "gaussian-noise":
            return gen_gaussian_noise(self.count, self.target_shape, p.get("mean", 0.0), p.get("std", 1.0), self.seed)
        if self.kind == "shapes":
            ds = gen_shapes(self.count, h, w, self.seed)
        elif self.kind == "directory":
            ds = load_image_dir(p["path"], target_shape=self.target_shape)
        elif self.kind == "mnist-idx":
            ds = load_mnist_dir(p["path"], p.get("split", "train")).unlabeled()
        else:
            ds = load_cifar10_bin(p["path"], p.get("split", "train")).unlabeled()
        if len(ds) > self.count:
            ds = ds.subset(np.random.default_rng(self.seed).permutation(len(ds))[: self.count])
        return adapt_to(ds, self.target_shape)
