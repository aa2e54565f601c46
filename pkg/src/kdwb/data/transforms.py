from __future__ import annotations

import numpy as np

from ..losses import uniform_target
from .dataset import Dataset

LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def to_grayscale(images: np.ndarray) -> np.ndarray:
    """N×3×H×W -> N×1×H×W by luminance; 1-channel input passes through."""
    if images.shape[1] == 1:
        return images
    if images.shape[1] != 3:
        raise ValueError(f"grayscale needs 1 or 3 channels, got {images.shape[1]}")
    g = np.tensordot(images.astype(np.float64), LUMA, axes=([1], [0]))
    return g[:, None].astype(images.dtype)


def adapt_channels(images: np.ndarray, channels: int) -> np.ndarray:
    """Replicate gray to 3 channels, or grayscale colour down to 1."""
    c = images.shape[1]
    if c == channels:
        return images
    if c == 1 and channels == 3:
        return np.repeat(images, 3, axis=1)
    if c == 3 and channels == 1:
        return to_grayscale(images)
    raise ValueError(f"cannot adapt {c} channels to {channels}")


def _axis_weights(n_in, n_out):
    # half-pixel centres, edge-clamped
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(images: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize of N×C×H×W to N×C×h×w (half-pixel centres, no antialias)."""
    if h < 1 or w < 1:
        raise ValueError(f"resize target must be positive, got {h}x{w}")
    x = np.asarray(images, dtype=np.float64)
    ylo, yhi, fy = _axis_weights(x.shape[2], h)
    xlo, xhi, fx = _axis_weights(x.shape[3], w)
    rows = x[:, :, ylo] * (1 - fy)[:, None] + x[:, :, yhi] * fy[:, None]
    out = rows[..., xlo] * (1 - fx) + rows[..., xhi] * fx
    return out.astype(images.dtype if np.issubdtype(images.dtype, np.floating) else np.float32)


def preprocess(ds: Dataset, grayscale=False, resize_to=None, mean_shift=None,
               channels=None) -> Dataset:
    """Grayscale, resize, channel-adapt, then subtract ``mean_shift``.

    ``mean_shift`` is a scalar or one value per (output) channel. Labels and
    the labeled mask are carried through untouched.
    """
    if len(ds) == 0:
        raise ValueError("cannot preprocess an empty dataset")
    x = ds.images
    if grayscale:
        x = to_grayscale(x)
    if resize_to is not None:
        h, w = resize_to
        if (h, w) != x.shape[2:]:
            x = resize_bilinear(x, h, w)
    if channels is not None:
        x = adapt_channels(x, channels)
    shift = None
    if mean_shift is not None:
        shift = np.asarray(mean_shift, dtype=np.float32).reshape(-1)
        if shift.size not in (1, x.shape[1]):
            raise ValueError(f"mean_shift has {shift.size} values for {x.shape[1]} channels")
        x = x - shift.reshape(1, -1, 1, 1)
    return Dataset(x, ds.labels, ds.labeled_mask if ds.labels is not None else None,
                   ds.name, ds.num_classes, shift)


def adapt_to(ds: Dataset, input_shape, mean_shift=None) -> Dataset:
    """Fit a stimulus to a network input (C, H, W): colour teachers get gray
    stimulus replicated to 3 channels, gray teachers get luminance."""
    c, h, w = input_shape
    return preprocess(ds, grayscale=(c == 1 and ds.shape[0] != 1), resize_to=(h, w),
                      mean_shift=mean_shift, channels=c)


def mix_augment(labeled: Dataset, stimulus: Dataset) -> Dataset:
    """Concatenate a labeled set with unlabeled stimulus.

    Stimulus rows get the uniform distribution as their label and a false
    mask entry; pixels are copied unchanged.
    """
    if labeled.labels is None:
        raise ValueError("labeled dataset has no labels")
    if stimulus.labels is not None and np.any(stimulus.labeled_mask):
        raise ValueError("stimulus dataset must be unlabeled")
    if len(stimulus) == 0:
        return labeled
    if labeled.shape != stimulus.shape:
        raise ValueError(f"shape mismatch: labeled {labeled.shape} vs stimulus {stimulus.shape}")
    k = labeled.num_classes
    labels = np.concatenate([labeled.labels, np.tile(uniform_target(k), (len(stimulus), 1))])
    mask = np.concatenate([labeled.labeled_mask, np.zeros(len(stimulus), dtype=bool)])
    return Dataset(np.concatenate([labeled.images, stimulus.images]), labels, mask,
                   f"{labeled.name}+{stimulus.name}", k, labeled.mean_shift)
