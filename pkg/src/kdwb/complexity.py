"""Stimulus complexity from first-convolution activation statistics.

For post-ReLU first-layer activations ``A[s, c, y, x]``:

* ``mean_activation`` is the grand mean over every index;
* ``avg_map_std`` is the population std of each channel's activations
  (pooled over samples and positions), averaged over channels.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .data import Dataset
from .engine import Conv, Network, ShapeError
from .engine.network import conv_forward

CSV_HEADER = "name,mean_activation,avg_map_std,samples"


@dataclass(frozen=True)
class ComplexityProfile:
    dataset_name: str
    mean_activation: float
    avg_map_std: float
    sample_count: int

    def csv_row(self) -> str:
        return f"{self.dataset_name},{self.mean_activation:.6f},{self.avg_map_std:.6f},{self.sample_count}"


def first_layer_activations(teacher: Network, images) -> np.ndarray:
    """Post-ReLU first conv output for N×C×H×W images, as float64 N×K×H×W.

    Each sample is convolved on its own so its activations do not depend on
    which other samples share the call.
    """
    layer = teacher.arch.layers[0]
    if not isinstance(layer, Conv):
        raise ValueError(f"first layer must be a convolution, got {layer}")
    w = teacher.params[0][0].data.astype(np.float64)
    b = teacher.params[0][1].data.astype(np.float64)
    images = np.asarray(images, dtype=np.float64)
    out = np.empty((len(images), w.shape[0]) + images.shape[2:], dtype=np.float64)
    for i, img in enumerate(images):
        a, _ = conv_forward(img.transpose(1, 2, 0)[None], w, b)
        out[i] = np.maximum(a[0], 0).transpose(2, 0, 1)
    return out


def complexity_profile(teacher: Network, ds: Dataset, name=None) -> ComplexityProfile:
    """Mean activation and average per-map std of the teacher's first conv layer.

    Per-sample partial sums are combined with ``math.fsum`` (exactly rounded),
    so both statistics are invariant to sample order.
    """
    if not isinstance(teacher.arch.layers[0], Conv):
        raise ValueError(f"first layer must be a convolution, got {teacher.arch.layers[0]}")
    if len(ds) == 0:
        raise ValueError("empty dataset")
    if ds.shape != teacher.input_shape:
        raise ShapeError(f"dataset shape {ds.shape} != teacher input {teacher.input_shape}")
    act = first_layer_activations(teacher, ds.images)
    n, k = act.shape[:2]
    per_map = act.shape[2] * act.shape[3] * n
    sums = act.sum(axis=(2, 3))  # n × k, each row depends on one sample only
    chan_mean = np.array([math.fsum(sums[:, c]) / per_map for c in range(k)])
    grand_mean = math.fsum(sums.ravel()) / (per_map * k)
    sq = ((act - chan_mean[None, :, None, None]) ** 2).sum(axis=(2, 3))
    chan_std = [math.sqrt(math.fsum(sq[:, c]) / per_map) for c in range(k)]
    return ComplexityProfile(name or ds.name, grand_mean, math.fsum(chan_std) / k, n)


@dataclass
class ProfileReport:
    profiles: List[ComplexityProfile]

    @property
    def by_mean(self) -> List[ComplexityProfile]:
        return sorted(self.profiles, key=lambda p: p.mean_activation)

    @property
    def by_std(self) -> List[ComplexityProfile]:
        return sorted(self.profiles, key=lambda p: p.avg_map_std)

    def to_csv(self, order="input") -> str:
        rows = {"input": self.profiles, "mean": self.by_mean, "std": self.by_std}[order]
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for p in rows:
            buf.write(p.csv_row() + "\n")
        return buf.getvalue()

    def __str__(self):
        return ("# ascending by mean_activation\n" + self.to_csv("mean")
                + "# ascending by avg_map_std\n" + self.to_csv("std"))


def profile_report(profiles: Sequence[ComplexityProfile]) -> ProfileReport:
    """Both per-statistic orderings (stable sort, input order breaks ties).

    No combined score is produced.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("profile_report needs at least one profile")
    return ProfileReport(profiles)
