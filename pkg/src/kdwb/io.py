"""Checkpoint and metrics persistence.

Checkpoint layout (all integers uint32 little-endian, floats float32 LE)::

    b"KDWB"  version(=1)
    len  arch-string (utf-8, canonical form)
    3    C H W
    m    m normalisation means (m may be 0)
    parameters, layer by layer, weight then bias, C order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import FormatError
from .engine import Network, Tensor, parse_arch, render_arch
from .engine.arch import ArchParseError, ShapeError, layer_param_shapes

MAGIC = b"KDWB"
VERSION = 1
METRICS_HEADER = "epoch,train_loss,test_acc,seconds"


def save_checkpoint(net: Network, norm_stats, path):
    arch = render_arch(net.arch).encode("utf-8")
    norm = np.atleast_1d(np.asarray([] if norm_stats is None else norm_stats, dtype="<f4"))
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<I", len(arch)), arch,
             struct.pack("<I", 3), struct.pack("<3I", *net.input_shape),
             struct.pack("<I", norm.size), norm.tobytes()]
    for t in net.parameters():
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.off, self.path = buf, 0, path

    def take(self, n, what):
        if self.off + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated {what} at byte offset {self.off}")
        chunk = self.buf[self.off:self.off + n]
        self.off += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path):
    """Returns (Network, norm_stats) where norm_stats is a float32 array or None."""
    buf = Path(path).read_bytes()
    r = _Reader(buf, path)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    arch_text = r.take(r.u32("arch length"), "arch string").decode("utf-8", "replace")
    try:
        arch = parse_arch(arch_text)
    except ArchParseError as e:
        raise FormatError(f"{path}: {e}") from None
    ndim = r.u32("input shape length")
    if ndim != 3:
        raise FormatError(f"{path}: input shape must have 3 dims, header says {ndim}")
    shape = struct.unpack("<3I", r.take(12, "input shape"))
    m = r.u32("normalisation count")
    norm = np.frombuffer(r.take(4 * m, "normalisation stats"), dtype="<f4").astype(np.float32)
    try:
        pshapes = layer_param_shapes(arch, shape)
    except ShapeError as e:
        raise FormatError(f"{path}: {e}") from None
    expected = sum(int(np.prod(w)) + int(np.prod(b)) for w, b in filter(None, pshapes))
    remaining = (len(buf) - r.off) // 4
    if (len(buf) - r.off) % 4 or remaining != expected:
        raise FormatError(
            f"{path}: param-count mismatch: architecture needs {expected} values, "
            f"file holds {(len(buf) - r.off) / 4:g}")
    params = []
    for entry in pshapes:
        if entry is None:
            params.append(None)
            continue
        pair = []
        for s in entry:
            n = int(np.prod(s))
            a = np.frombuffer(r.take(4 * n, "parameters"), dtype="<f4").astype(np.float32).reshape(s)
            pair.append(Tensor(a))
        params.append(tuple(pair))
    return Network(arch, shape, params, np.float32), (norm if m else None)


def write_metrics_csv(metrics, path, record_time: bool = False):
    """``epoch,train_loss,test_acc,seconds`` with 6 decimals.

    Unless ``record_time`` is set the seconds column is written as zero so
    that repeated runs give byte-identical files.
    """
    if not metrics.records:
        raise ValueError("no epochs recorded")
    lines = [METRICS_HEADER]
    for r in metrics.records:
        secs = r.seconds if record_time else 0.0
        lines.append(f"{r.epoch},{r.train_loss:.6f},{r.test_acc:.6f},{secs:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics_csv(path):
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]),
             "test_acc": float(r["test_acc"]), "seconds": float(r["seconds"])} for r in rows]
