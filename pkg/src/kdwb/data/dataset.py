from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class FormatError(ValueError):
    """Malformed or truncated input file."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images N×C×H×W in float32 with optional per-sample label distributions.

    ``labels`` rows are probability vectors (one-hot for hard labels);
    ``labeled_mask[i]`` says whether sample i carries a true label. Arrays are
    made read-only on construction.
    """

    images: np.ndarray
    labels: Optional[np.ndarray] = None
    labeled_mask: Optional[np.ndarray] = None
    name: str = ""
    num_classes: Optional[int] = None
    mean_shift: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float32)
        if images.ndim != 4:
            raise ValueError(f"images must be N×C×H×W, got shape {images.shape}")
        n = images.shape[0]
        object.__setattr__(self, "images", _frozen(images))
        if self.labels is None:
            if self.labeled_mask is not None and np.any(self.labeled_mask):
                raise ValueError("labeled_mask set but no labels given")
            object.__setattr__(self, "labeled_mask", _frozen(np.zeros(n, dtype=bool)))
            return
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim != 2 or labels.shape[0] != n:
            raise ValueError(f"labels must be N×k with N={n}, got {labels.shape}")
        if n and (np.any(labels < -1e-9) or not np.allclose(labels.sum(axis=1), 1.0, atol=1e-6)):
            raise ValueError("every label row must be a probability vector")
        mask = np.ones(n, dtype=bool) if self.labeled_mask is None else np.asarray(self.labeled_mask, dtype=bool)
        if mask.shape != (n,):
            raise ValueError(f"labeled_mask must have shape ({n},), got {mask.shape}")
        k = labels.shape[1]
        if self.num_classes is not None and self.num_classes != k:
            raise ValueError(f"num_classes={self.num_classes} but labels have {k} columns")
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "labeled_mask", _frozen(mask))
        object.__setattr__(self, "num_classes", k)

    def __len__(self):
        return self.images.shape[0]

    @property
    def shape(self):
        """Per-sample (C, H, W)."""
        return self.images.shape[1:]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None and bool(np.all(self.labeled_mask))

    @property
    def hard_labels(self) -> np.ndarray:
        """Argmax class index per sample (requires labels)."""
        if self.labels is None:
            raise ValueError(f"dataset {self.name!r} has no labels")
        return self.labels.argmax(axis=1)

    def subset(self, index, name=None) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.images[index],
            None if self.labels is None else self.labels[index],
            None if self.labels is None else self.labeled_mask[index],
            name or self.name, self.num_classes, self.mean_shift)

    def unlabeled(self, name=None) -> "Dataset":
        """Same images with labels dropped."""
        return Dataset(self.images, name=name or self.name, mean_shift=self.mean_shift)

    def head(self, n: int) -> "Dataset":
        return self.subset(np.arange(min(n, len(self))))


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise FormatError(f"label value outside [0, {k})")
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out
