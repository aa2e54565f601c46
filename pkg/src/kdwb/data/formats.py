"""Bit-exact codecs for IDX (MNIST), CIFAR-10 binary and netpbm images."""

from __future__ import annotations

import gzip
import os
import re
from pathlib import Path

import numpy as np

from .dataset import Dataset, FormatError, one_hot

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


# --------------------------------------------------------------------- IDX

def _idx_header(buf, path, magic, ndims):
    need = 4 + 4 * ndims
    if len(buf) < need:
        raise FormatError(f"{path}: truncated header at byte offset {len(buf)} (need {need})")
    got = int.from_bytes(buf[0:4], "big")
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x} at byte offset 0 (expected 0x{magic:08x})")
    dims = [int.from_bytes(buf[4 + 4 * i:8 + 4 * i], "big") for i in range(ndims)]
    return dims, need


def read_idx_images(path) -> np.ndarray:
    """uint8 array N×H×W from an IDX image file."""
    buf = _read_bytes(path)
    (n, h, w), off = _idx_header(buf, path, IDX_IMAGES_MAGIC, 3)
    size = n * h * w
    if len(buf) < off + size:
        raise FormatError(f"{path}: truncated payload at byte offset {len(buf)} (expected {off + size})")
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=off).reshape(n, h, w)


def read_idx_labels(path) -> np.ndarray:
    buf = _read_bytes(path)
    (n,), off = _idx_header(buf, path, IDX_LABELS_MAGIC, 1)
    if len(buf) < off + n:
        raise FormatError(f"{path}: truncated payload at byte offset {len(buf)} (expected {off + n})")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=off)


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    header = b"".join(int(v).to_bytes(4, "big") for v in (IDX_IMAGES_MAGIC, n, h, w))
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    header = b"".join(int(v).to_bytes(4, "big") for v in (IDX_LABELS_MAGIC, labels.size))
    Path(path).write_bytes(header + labels.tobytes())


def load_mnist_idx(images_path, labels_path, num_classes: int = 10, name="mnist") -> Dataset:
    """IDX image/label pair -> labeled Dataset N×1×H×W scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path}: {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels "
            f"(count field at byte offset 4)")
    x = (images.astype(np.float32) / 255.0)[:, None]
    return Dataset(x, one_hot(labels, num_classes), name=name)


def load_mnist_dir(dir_path, split="train") -> Dataset:
    """Standard MNIST file names (optionally .gz) inside ``dir_path``."""
    prefix = {"train": "train", "test": "t10k"}[split]
    d = Path(dir_path)
    for suffix in ("", ".gz"):
        img = d / f"{prefix}-images-idx3-ubyte{suffix}"
        lab = d / f"{prefix}-labels-idx1-ubyte{suffix}"
        if img.exists() and lab.exists():
            return load_mnist_idx(img, lab, name=f"mnist-{split}")
    # dotted variant used by some mirrors
    img, lab = d / f"{prefix}-images.idx3-ubyte", d / f"{prefix}-labels.idx1-ubyte"
    if img.exists() and lab.exists():
        return load_mnist_idx(img, lab, name=f"mnist-{split}")
    raise FormatError(f"{dir_path}: no MNIST {split} IDX pair found")


# ------------------------------------------------------------------- CIFAR

def _cifar_files(d: Path, split):
    if split == "train":
        files = sorted(d.glob("data_batch_*.bin"))
    elif split == "test":
        files = sorted(d.glob("test_batch*.bin"))
    else:
        files = sorted(d.glob("*.bin"))
    if not files and split != "all":
        files = sorted(d.glob("*.bin"))
    return files


def load_cifar10_bin(dir_path, split="train", name=None) -> Dataset:
    """CIFAR-10 binary batches -> labeled Dataset N×3×32×32 in [0, 1].

    ``split`` picks ``data_batch_*.bin`` ("train"), ``test_batch.bin``
    ("test") or every ``*.bin`` ("all"); a directory holding other ``.bin``
    names falls back to all of them.
    """
    d = Path(dir_path)
    if d.is_file():
        files = [d]
    else:
        if not d.is_dir():
            raise FormatError(f"{dir_path}: not a directory")
        files = _cifar_files(d, split)
    if not files:
        raise FormatError(f"{dir_path}: no CIFAR-10 .bin batch files")
    chunks = []
    for f in files:
        buf = f.read_bytes()
        if len(buf) == 0 or len(buf) % CIFAR_RECORD:
            raise FormatError(
                f"{f}: size {len(buf)} is not a positive multiple of the {CIFAR_RECORD}-byte record")
        chunks.append(np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD))
    rec = np.concatenate(chunks)
    labels = rec[:, 0]
    x = rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    return Dataset(x, one_hot(labels, 10), name=name or f"cifar10-{split}")


def write_cifar10_bin(path, images_u8, labels):
    images_u8 = np.asarray(images_u8, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    Path(path).write_bytes(np.concatenate([labels, images_u8], axis=1).tobytes())


# ------------------------------------------------------------------ netpbm

_WS = b" \t\r\n\v\f"


def _pnm_tokens(buf, count, path):
    """Read ``count`` whitespace-separated header tokens, skipping # comments.

    Returns (tokens, offset just past the single whitespace after the last).
    """
    toks, i, n = [], 0, len(buf)
    while len(toks) < count:
        while i < n and (buf[i] in _WS or buf[i] == ord("#")):
            if buf[i] == ord("#"):
                while i < n and buf[i] not in b"\r\n":
                    i += 1
            else:
                i += 1
        start = i
        while i < n and buf[i] not in _WS and buf[i] != ord("#"):
            i += 1
        if start == i:
            raise FormatError(f"{path}: unreadable netpbm header at byte offset {i}")
        toks.append(buf[start:i])
    if i >= n and count > 1:
        raise FormatError(f"{path}: netpbm header ends without data at byte offset {i}")
    return toks, i + 1


def read_netpbm(path) -> np.ndarray:
    """Decode P2/P5/P6 into float32 C×H×W scaled by maxval."""
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic not in (b"P2", b"P5", b"P6"):
        raise FormatError(f"{path}: not a PGM/PPM file (magic {magic!r})")
    try:
        toks, off = _pnm_tokens(buf[2:], 3, path)
        w, h, maxval = (int(t) for t in toks)
    except ValueError:
        raise FormatError(f"{path}: unreadable netpbm header") from None
    off += 2
    if w < 1 or h < 1 or not 0 < maxval <= 65535:
        raise FormatError(f"{path}: invalid netpbm header {w}x{h} maxval {maxval}")
    c = 3 if magic == b"P6" else 1
    count = w * h * c
    if magic == b"P2":
        body = re.sub(rb"#[^\n]*", b"", buf[off - 1:])
        vals = body.split()
        if len(vals) < count:
            raise FormatError(f"{path}: truncated P2 payload ({len(vals)} of {count} values)")
        data = np.array([int(v) for v in vals[:count]], dtype=np.float64)
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        need = count * dtype.itemsize
        if len(buf) - off < need:
            raise FormatError(f"{path}: truncated payload at byte offset {len(buf)} (expected {off + need})")
        data = np.frombuffer(buf, dtype=dtype, count=count, offset=off).astype(np.float64)
    if data.max(initial=0) > maxval:
        raise FormatError(f"{path}: sample value exceeds maxval {maxval}")
    img = (data / maxval).reshape(h, w, c).transpose(2, 0, 1)
    return img.astype(np.float32)


def write_netpbm(path, image, maxval: int = 255):
    """Write C×H×W values in [0, 1] as binary P5 (C=1) or P6 (C=3)."""
    image = np.asarray(image)
    c, h, w = image.shape
    if c not in (1, 3):
        raise ValueError(f"netpbm needs 1 or 3 channels, got {c}")
    q = np.rint(np.clip(image, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else np.uint8
    body = q.transpose(1, 2, 0).astype(dtype).tobytes()
    magic = b"P5" if c == 1 else b"P6"
    Path(path).write_bytes(magic + f"\n{w} {h}\n{maxval}\n".encode() + body)


PNM_SUFFIXES = (".pgm", ".ppm", ".pnm")


def load_image_dir(dir_path, target_shape=None, grayscale=False, name=None) -> Dataset:
    """Unlabeled Dataset from every netpbm file in a directory (sorted by name).

    Each image is scaled to [0, 1], optionally grayscaled, then resized and
    channel-adapted to ``target_shape`` (C, H, W) when given. Files whose
    extension is not .pgm/.ppm/.pnm are rejected.
    """
    from .transforms import adapt_channels, to_grayscale, resize_bilinear

    d = Path(dir_path)
    if not d.is_dir():
        raise FormatError(f"{dir_path}: not a directory")
    files = sorted(p for p in d.iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise FormatError(f"{dir_path}: no image files")
    out = []
    for f in files:
        if f.suffix.lower() not in PNM_SUFFIXES:
            raise FormatError(f"{f}: not a netpbm (PGM/PPM) file")
        img = read_netpbm(f)[None]
        if grayscale:
            img = to_grayscale(img)
        if target_shape is not None:
            c, h, w = target_shape
            if img.shape[2:] != (h, w):
                img = resize_bilinear(img, h, w)
            img = adapt_channels(img, c)
        out.append(img)
    shapes = {im.shape[1:] for im in out}
    if len(shapes) != 1:
        raise FormatError(f"{dir_path}: images differ in shape {sorted(shapes)}; pass target_shape")
    return Dataset(np.concatenate(out), name=name or d.name)


def save_image_dir(ds: Dataset, dir_path, prefix="img", maxval=255):
    """Write every image of ``ds`` as zero-padded numbered PGM/PPM files."""
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    ext = ".pgm" if ds.shape[0] == 1 else ".ppm"
    width = max(5, len(str(len(ds) - 1)))
    for i, img in enumerate(ds.images):
        write_netpbm(d / f"{prefix}{i:0{width}d}{ext}", img, maxval)
    return d
