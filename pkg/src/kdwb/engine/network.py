"""Fixed-menu network: conv / max-pool / dense / softmax with exact backprop.

Batches are NCHW at the API boundary. Every Conv and Dense layer is followed by ReLU; the final
Softmax descriptor is a dense projection to ``k`` logits followed by a
temperature softmax.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .arch import (ArchSpec, Conv, Dense, MaxPool, ShapeError, Softmax,
                   count_params, layer_param_shapes, layer_shapes, parse_arch)


class EngineStateError(RuntimeError):
    """Operation called in the wrong state (backward before forward, ...)."""


class Tensor:
    """Dense array with an optional gradient buffer of identical shape."""

    __slots__ = ("data", "grad", "velocity")

    def __init__(self, data, grad=None):
        self.data = np.asarray(data)
        if grad is not None and np.shape(grad) != self.data.shape:
            raise ShapeError(f"grad shape {np.shape(grad)} != data shape {self.data.shape}")
        self.grad = grad
        self.velocity = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


def softmax_with_temperature(logits, T: float = 1.0) -> np.ndarray:
    """Row-wise ``exp(z/T) / sum(exp(z/T))`` with max subtraction."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    z = np.asarray(logits) / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------- layer ops
# Activations are NHWC internally (channels contiguous for im2col); weights
# keep the (out, in, kh, kw) layout.

def _same_pad(k):
    lo = (k - 1) // 2
    return lo, k - 1 - lo


def _im2col(x, kh, kw, pads):
    """NHWC input -> (N*H'*W', kh*kw*C) patch matrix, column order (kh, kw, C)."""
    (pt, pb), (pl, pr) = pads
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    ho, wo = h + pt + pb - kh + 1, w + pl + pr - kw + 1
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # n, ho, wo, c, kh, kw
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c), (n, ho, wo)


def _wmat(w):
    cout = w.shape[0]
    return w.transpose(0, 2, 3, 1).reshape(cout, -1)


def conv_forward(x, w, b):
    """Same-padded stride-1 convolution on NHWC input. Returns (out, cols)."""
    cout, cin, kh, kw = w.shape
    cols, (n, h, wd) = _im2col(x, kh, kw, (_same_pad(kh), _same_pad(kw)))
    out = cols @ _wmat(w).T
    out += b
    return out.reshape(n, h, wd, cout), cols


def conv_backward(dout, cols, x_shape, w, need_dx=True):
    n, h, wd, cout = dout.shape
    _, cin, kh, kw = w.shape
    d2 = dout.reshape(n * h * wd, cout)
    dw = (d2.T @ cols).reshape(cout, kh, kw, cin).transpose(0, 3, 1, 2)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    # input gradient = correlation of dout with the flipped, channel-swapped kernel
    (pt, pb), (pl, pr) = _same_pad(kh), _same_pad(kw)
    wt = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dcols, _ = _im2col(dout, kh, kw, ((pb, pt), (pr, pl)))
    dx = (dcols @ _wmat(wt).T).reshape(x_shape)
    return dx, dw, db


def pool_forward(x, k):
    """k×k max pooling on NHWC, stride k, trailing rows/cols dropped (floor).

    Returns (out, arg) where arg is the winning offset i*k+j (first max wins).
    """
    n, h, w, c = x.shape
    ho, wo = h // k, w // k
    out = x[:, 0:ho * k:k, 0:wo * k:k].copy()
    arg = np.zeros(out.shape, dtype=np.int8 if k * k < 128 else np.int32)
    for i in range(k):
        for j in range(k):
            if i == 0 and j == 0:
                continue
            v = x[:, i:ho * k:k, j:wo * k:k]
            better = v > out
            np.copyto(out, v, where=better)
            np.copyto(arg, i * k + j, where=better, casting="unsafe")
    return out, arg


def pool_backward(dout, arg, x_shape, k):
    ho, wo = dout.shape[1], dout.shape[2]
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            np.multiply(dout, arg == i * k + j, out=dx[:, i:ho * k:k, j:wo * k:k])
    return dx


# ------------------------------------------------------------------ network

class Network:
    """Parameters plus forward/backward over an :class:`ArchSpec`.

    ``params`` holds one ``(weight, bias)`` pair of :class:`Tensor` per
    parametrised layer, in layer order (``None`` for pooling layers).
    """

    def __init__(self, arch, input_shape, params, dtype=np.float32):
        self.arch = parse_arch(arch) if isinstance(arch, str) else arch
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.shapes = layer_shapes(self.arch, self.input_shape)
        expected = layer_param_shapes(self.arch, self.input_shape)
        if len(params) != len(expected):
            raise ShapeError("parameter list does not match architecture")
        for got, want in zip(params, expected):
            if (got is None) != (want is None):
                raise ShapeError("parameter list does not match architecture")
            if want is not None and (got[0].shape != want[0] or got[1].shape != want[1]):
                raise ShapeError(f"parameter shapes {got[0].shape}/{got[1].shape} != {want}")
        self.params = params
        self.param_count = count_params(self.arch, self.input_shape)
        self._cache = None

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    def parameters(self):
        """Flat list of parameter tensors, weight before bias, layer order."""
        out = []
        for p in self.params:
            if p is not None:
                out.extend(p)
        return out

    def zero_grad(self):
        for t in self.parameters():
            t.zero_grad()

    def logits(self, x, grad=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"batch shape {x.shape} does not match N x {self.input_shape}")
        cache = [] if grad else None
        h = x.transpose(0, 2, 3, 1)
        last = len(self.arch.layers) - 1
        for i, (layer, p) in enumerate(zip(self.arch.layers, self.params)):
            if isinstance(layer, Conv):
                out, cols = conv_forward(h, p[0].data, p[1].data)
                np.maximum(out, 0, out=out)
                if grad:
                    cache.append((h.shape, cols, out > 0))
                h = out
            elif isinstance(layer, MaxPool):
                out, arg = pool_forward(h, layer.k)
                if grad:
                    cache.append((h.shape, arg))
                h = out
            else:
                # dense weights index the NCHW flattening
                flat = (h.transpose(0, 3, 1, 2) if h.ndim == 4 else h).reshape(h.shape[0], -1)
                out = flat @ p[0].data
                out += p[1].data
                relu = i != last
                if relu:
                    np.maximum(out, 0, out=out)
                if grad:
                    cache.append((h.shape, flat, out > 0 if relu else None))
                h = out
        self._cache = cache
        return h

    def forward(self, x, temperature: float = 1.0, grad=False):
        """Class probabilities for a batch N×C×H×W.

        With ``grad=True`` the activations are retained for :meth:`backward`.
        """
        z = self.logits(x, grad=grad)
        self._temperature = temperature
        probs = softmax_with_temperature(z, temperature)
        if grad:
            self._probs = probs
        return probs

    def backward(self, output_grad, wrt="probs"):
        """Accumulate parameter gradients from the last gradient-mode forward.

        ``output_grad`` is dL/dP for the softmax output (``wrt="probs"``) or
        dL/dz for the raw logits (``wrt="logits"``).
        """
        if self._cache is None:
            raise EngineStateError("backward called without a gradient-mode forward pass")
        g = np.asarray(output_grad, dtype=self.dtype)
        if wrt == "probs":
            p = self._probs
            if g.shape != p.shape:
                raise ShapeError(f"output_grad shape {g.shape} != {p.shape}")
            g = p * (g - (g * p).sum(axis=1, keepdims=True)) / self._temperature
        elif wrt != "logits":
            raise ValueError(f"wrt must be 'probs' or 'logits', got {wrt!r}")
        for t in self.parameters():
            if t.grad is None:
                t.zero_grad()
        for i in range(len(self.arch.layers) - 1, -1, -1):
            layer, p, c = self.arch.layers[i], self.params[i], self._cache[i]
            need_dx = i > 0
            if isinstance(layer, Conv):
                in_shape, cols, mask = c
                g = g * mask
                dx, dw, db = conv_backward(g, cols, in_shape, p[0].data, need_dx)
                p[0].grad += dw
                p[1].grad += db
                g = dx
            elif isinstance(layer, MaxPool):
                in_shape, arg = c
                g = pool_backward(g, arg, in_shape, layer.k) if need_dx else None
            else:
                in_shape, flat, mask = c
                if mask is not None:
                    g = g * mask
                p[0].grad += flat.T @ g
                p[1].grad += g.sum(axis=0)
                if need_dx:
                    g = g @ p[0].data.T
                    if len(in_shape) == 4:
                        n, hh, ww, cc = in_shape
                        g = g.reshape(n, cc, hh, ww).transpose(0, 2, 3, 1)
                    else:
                        g = g.reshape(in_shape)

    def predict(self, x, temperature: float = 1.0, batch_size: int = 256):
        """Inference-mode probabilities, evaluated in chunks, input order kept."""
        x = np.asarray(x)
        out = [self.forward(x[i:i + batch_size], temperature)
               for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.num_classes), self.dtype)

    def copy(self) -> "Network":
        params = [None if p is None else (Tensor(p[0].data.copy()), Tensor(p[1].data.copy()))
                  for p in self.params]
        return Network(self.arch, self.input_shape, params, self.dtype)

    def astype(self, dtype) -> "Network":
        params = [None if p is None else (Tensor(p[0].data.astype(dtype)), Tensor(p[1].data.astype(dtype)))
                  for p in self.params]
        return Network(self.arch, self.input_shape, params, dtype)

    def checksum(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for t in self.parameters():
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def __repr__(self):
        return f"Network({self.arch}, input={self.input_shape}, params={self.param_count})"


def init_network(arch, input_shape, seed: int = 0, dtype=np.float32) -> Network:
    """Fan-in uniform weights (bound sqrt(6/fan_in)) and zero biases."""
    arch = parse_arch(arch) if isinstance(arch, str) else arch
    rng = np.random.default_rng(seed)
    params = []
    for entry in layer_param_shapes(arch, input_shape):
        if entry is None:
            params.append(None)
            continue
        wshape, bshape = entry
        fan_in = int(np.prod(wshape[1:])) if len(wshape) == 4 else wshape[0]
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=wshape).astype(dtype)
        params.append((Tensor(w), Tensor(np.zeros(bshape, dtype=dtype))))
    return Network(arch, input_shape, params, dtype)


def forward(net: Network, batch, temperature: float = 1.0, grad=False):
    return net.forward(batch, temperature, grad=grad)


def backward(net: Network, output_grad, wrt="probs"):
    net.backward(output_grad, wrt=wrt)


def sgd_step(net: Network, lr: float, momentum: float = 0.0):
    """v <- momentum*v + grad; theta <- theta - lr*v; then zero the grads."""
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if not 0 <= momentum < 1:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    params = net.parameters()
    if any(t.grad is None for t in params):
        raise EngineStateError("sgd_step called before gradients were populated")
    for t in params:
        if t.velocity is None:
            t.velocity = np.zeros_like(t.data)
        t.velocity *= momentum
        t.velocity += t.grad
        t.data -= t.data.dtype.type(lr) * t.velocity
        t.grad[...] = 0
