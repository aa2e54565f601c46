"""Minimal deterministic neural-network engine."""

from .arch import (ArchParseError, ArchSpec, Conv, Dense, MaxPool, ShapeError,
                   Softmax, count_params, layer_shapes, parse_arch, render_arch)
from .network import (EngineStateError, Network, Tensor, backward, forward,
                      init_network, sgd_step, softmax_with_temperature)

__all__ = [
    "ArchParseError", "ArchSpec", "Conv", "Dense", "MaxPool", "ShapeError", "Softmax",
    "count_params", "layer_shapes", "parse_arch", "render_arch",
    "EngineStateError", "Network", "Tensor", "backward", "forward", "init_network",
    "sgd_step", "softmax_with_temperature",
]
