"""Architecture strings: parsing, rendering and shape/parameter algebra.

Grammar, one descriptor per ``-`` separated token::

    Conv<idx?>(c,kh,kw)  MaxPool(k)  FC<idx?>(n)  Dense(n)  Softmax(k)

An optional leading bare integer (``784 - Dense(500) - ...``) records the
flattened input size and is carried through rendering.

Convolutions are stride 1 with zero "same" padding, so only pooling changes
spatial size (floor division).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

Shape3 = Tuple[int, int, int]


class ArchParseError(ValueError):
    """Raised on a malformed architecture string."""


class ShapeError(ValueError):
    """Raised when tensor shapes do not chain."""


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kh: int
    kw: int


@dataclass(frozen=True)
class MaxPool:
    k: int


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Softmax:
    classes: int


Layer = Union[Conv, MaxPool, Dense, Softmax]


@dataclass(frozen=True)
class ArchSpec:
    layers: Tuple[Layer, ...]
    input_size: Optional[int] = None

    @property
    def num_classes(self) -> int:
        return self.layers[-1].classes

    def __str__(self) -> str:
        return render_arch(self)


_TOKEN = re.compile(r"^(Conv|MaxPool|FC|Dense|Softmax)(\d*)\((.*)\)$")
_ARITY = {"Conv": 3, "MaxPool": 1, "FC": 1, "Dense": 1, "Softmax": 1}


def _parse_token(tok: str) -> Layer:
    m = _TOKEN.match(tok)
    if m is None:
        raise ArchParseError(f"malformed layer token {tok!r}")
    name, idx, body = m.groups()
    if idx and name not in ("Conv", "FC"):
        raise ArchParseError(f"malformed layer token {tok!r}")
    parts = [p.strip() for p in body.split(",")]
    if len(parts) != _ARITY[name]:
        raise ArchParseError(
            f"{name} takes {_ARITY[name]} argument(s) in token {tok!r}")
    try:
        args = [int(p) for p in parts]
    except ValueError:
        raise ArchParseError(f"non-numeric arity in token {tok!r}") from None
    if any(a < 1 for a in args):
        raise ArchParseError(f"arguments must be positive in token {tok!r}")
    if name == "Conv":
        return Conv(*args)
    if name == "MaxPool":
        return MaxPool(args[0])
    if name in ("FC", "Dense"):
        return Dense(args[0])
    return Softmax(args[0])


def parse_arch(spec: str) -> ArchSpec:
    """Parse an architecture string such as
    ``"Conv1(32,5,5)-MaxPool(2)-Conv2(64,5,5)-MaxPool(2)-FC(128)-Softmax(10)"``.

    Surrounding brackets and whitespace are ignored.
    """
    text = spec.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    if not text.strip():
        raise ArchParseError("empty architecture string")
    tokens = [t.strip() for t in text.split("-")]
    input_size = None
    if tokens and tokens[0].isdigit():
        input_size = int(tokens.pop(0))
        if input_size < 1:
            raise ArchParseError(f"input size must be positive: {input_size}")
    layers = []
    for tok in tokens:
        if not tok:
            raise ArchParseError(f"empty layer token in {spec!r}")
        layers.append(_parse_token(tok))
    if not layers or not isinstance(layers[-1], Softmax):
        raise ArchParseError(
            f"missing Softmax terminal (last token {tokens[-1] if tokens else ''!r})")
    for tok, layer in zip(tokens[:-1], layers[:-1]):
        if isinstance(layer, Softmax):
            raise ArchParseError(f"Softmax must be the last layer, got {tok!r}")
    if layers[-1].classes < 2:
        raise ArchParseError(f"Softmax needs at least 2 classes: {tokens[-1]!r}")
    return ArchSpec(tuple(layers), input_size)


def render_arch(arch: ArchSpec) -> str:
    """Canonical string form: convs numbered from 1, dense layers as ``FC(n)``.

    ``parse_arch(render_arch(a)) == a`` for every ArchSpec.
    """
    out = [] if arch.input_size is None else [str(arch.input_size)]
    nconv = 0
    for layer in arch.layers:
        if isinstance(layer, Conv):
            nconv += 1
            out.append(f"Conv{nconv}({layer.out_channels},{layer.kh},{layer.kw})")
        elif isinstance(layer, MaxPool):
            out.append(f"MaxPool({layer.k})")
        elif isinstance(layer, Dense):
            out.append(f"FC({layer.units})")
        else:
            out.append(f"Softmax({layer.classes})")
    return "-".join(out)


def _as_arch(arch) -> ArchSpec:
    return parse_arch(arch) if isinstance(arch, str) else arch


def layer_shapes(arch, input_shape: Sequence[int]) -> list:
    """Output shape of every layer, starting from ``input_shape`` (C, H, W).

    Spatial shapes are (C, H, W); after the first dense layer they are (n,).
    """
    arch = _as_arch(arch)
    shape = tuple(int(d) for d in input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ShapeError(f"input shape must be 3 positive dims, got {shape}")
    if arch.input_size is not None and shape[0] * shape[1] * shape[2] != arch.input_size:
        raise ShapeError(
            f"input shape {shape} does not match declared input size {arch.input_size}")
    shapes = []
    for layer in arch.layers:
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise ShapeError(f"{layer} after a dense layer")
            shape = (layer.out_channels, shape[1], shape[2])
        elif isinstance(layer, MaxPool):
            if len(shape) != 3:
                raise ShapeError(f"{layer} after a dense layer")
            h, w = shape[1] // layer.k, shape[2] // layer.k
            if h < 1 or w < 1:
                raise ShapeError(
                    f"{layer} shrinks {shape[1]}x{shape[2]} below 1")
            shape = (shape[0], h, w)
        elif isinstance(layer, Dense):
            shape = (layer.units,)
        else:
            shape = (layer.classes,)
        shapes.append(shape)
    return shapes


def _numel(shape) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


def layer_param_shapes(arch, input_shape) -> list:
    """(weight_shape, bias_shape) per layer, ``None`` for parameter-free layers."""
    arch = _as_arch(arch)
    out_shapes = layer_shapes(arch, input_shape)
    prev = tuple(input_shape)
    result = []
    for layer, shape in zip(arch.layers, out_shapes):
        if isinstance(layer, Conv):
            result.append(((layer.out_channels, prev[0], layer.kh, layer.kw),
                           (layer.out_channels,)))
        elif isinstance(layer, MaxPool):
            result.append(None)
        else:
            units = shape[0]
            result.append(((_numel(prev), units), (units,)))
        prev = shape
    return result


def count_params(arch, input_shape) -> int:
    """Closed-form weight+bias count.

    >>> count_params("784-Dense(500)-Dense(300)-Softmax(10)", (1, 28, 28))
    545810
    """
    total = 0
    for entry in layer_param_shapes(arch, input_shape):
        if entry is not None:
            total += _numel(entry[0]) + _numel(entry[1])
    return total
