"""Descriptor-driven feed-forward CNN with input gradients.

Networks are a flat ordered list of conv / relu / pool layers described by a
JSON document and backed by a weight container.  The forward pass records
named activations in H x W x C layout; the reverse pass pulls a gradient
supplied at any subset of those activations back to the input image.

Weights are never trained, so only input gradients exist.  Determinism
notes: ReLU's subgradient at exactly 0 is 0, and max pooling breaks ties by
the first index in a row-major scan of the window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConsistencyError, MissingTensorError, NumericError, ShapeError
from .tensor import Tensor

DESCRIPTOR_VERSION = 1


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    in_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    zero_padding: int = 0

    def validate(self, name):
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ConsistencyError(f"layer {name}: kernel dims must be >= 1")
        if self.zero_padding < 0:
            raise ConsistencyError(f"layer {name}: padding must be >= 0")
        if self.stride < 1:
            raise ConsistencyError(f"layer {name}: stride must be >= 1")
        if self.out_channels < 1 or self.in_channels < 1:
            raise ConsistencyError(f"layer {name}: channel counts must be >= 1")


@dataclass(frozen=True)
class PoolSpec:
    mode: str  # "max" | "avg"
    window: int
    stride: int

    def validate(self, name):
        if self.mode not in ("max", "avg"):
            raise ConsistencyError(f"layer {name}: pool mode must be max or avg")
        if self.window < 1 or self.stride < 1:
            raise ConsistencyError(f"layer {name}: pool window/stride must be >= 1")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # "conv" | "relu" | "pool"
    conv: ConvSpec | None = None
    pool: PoolSpec | None = None


@dataclass(frozen=True)
class Preprocessing:
    channel_means: tuple
    channel_order: str  # "RGB" | "BGR"


@dataclass(frozen=True)
class NetworkDescriptor:
    layers: tuple
    input_channels: int
    preprocessing: Preprocessing

    def __post_init__(self):
        seen = set()
        channels = self.input_channels
        first_conv = True
        for spec in self.layers:
            if spec.name in seen:
                raise ConsistencyError(f"duplicate layer name {spec.name!r}")
            seen.add(spec.name)
            if spec.kind == "conv":
                spec.conv.validate(spec.name)
                if spec.conv.in_channels != channels:
                    what = "input_channels" if first_conv else "preceding layer"
                    raise ConsistencyError(
                        f"layer {spec.name}: in_channels {spec.conv.in_channels} "
                        f"does not match {what} ({channels})"
                    )
                channels = spec.conv.out_channels
                first_conv = False
            elif spec.kind == "pool":
                spec.pool.validate(spec.name)
            elif spec.kind != "relu":
                raise ConsistencyError(f"layer {spec.name}: unknown kind {spec.kind!r}")
        if self.preprocessing.channel_order not in ("RGB", "BGR"):
            raise ConsistencyError("channel_order must be RGB or BGR")
        if len(self.preprocessing.channel_means) != 3:
            raise ConsistencyError("channel_means must hold 3 values")

    def layer_names(self):
        return [spec.name for spec in self.layers]

    def channels_at(self, name: str) -> int:
        """Channel count of the named layer's output."""
        channels = self.input_channels
        for spec in self.layers:
            if spec.kind == "conv":
                channels = spec.conv.out_channels
            if spec.name == name:
                return channels
        raise ConsistencyError(f"unknown layer {name!r}")

    def spatial_dims(self, name: str, height: int, width: int):
        """Output H, W of the named layer for a given input size (pure arithmetic)."""
        h, w = height, width
        for spec in self.layers:
            if spec.kind == "conv":
                c = spec.conv
                h = conv_out_size(h, c.kernel_h, c.stride, c.zero_padding, spec.name)
                w = conv_out_size(w, c.kernel_w, c.stride, c.zero_padding, spec.name)
            elif spec.kind == "pool":
                p = spec.pool
                h = pool_out_size(h, p.window, p.stride, spec.name)
                w = pool_out_size(w, p.window, p.stride, spec.name)
            if spec.name == name:
                return h, w
        raise ConsistencyError(f"unknown layer {name!r}")

    def to_json(self) -> dict:
        layers = []
        for spec in self.layers:
            entry = {"name": spec.name, "kind": spec.kind}
            if spec.kind == "conv":
                entry.update(
                    out_channels=spec.conv.out_channels,
                    in_channels=spec.conv.in_channels,
                    kernel_h=spec.conv.kernel_h,
                    kernel_w=spec.conv.kernel_w,
                    stride=spec.conv.stride,
                    zero_padding=spec.conv.zero_padding,
                )
            elif spec.kind == "pool":
                entry.update(
                    mode=spec.pool.mode, window=spec.pool.window, stride=spec.pool.stride
                )
            layers.append(entry)
        return {
            "format_version": DESCRIPTOR_VERSION,
            "input_channels": self.input_channels,
            "preprocessing": {
                "channel_means": list(self.preprocessing.channel_means),
                "channel_order": self.preprocessing.channel_order,
            },
            "layers": layers,
        }

    @staticmethod
    def from_json(doc: dict) -> "NetworkDescriptor":
        try:
            pre = doc["preprocessing"]
            layers = []
            for entry in doc["layers"]:
                kind = entry["kind"]
                conv = pool = None
                if kind == "conv":
                    conv = ConvSpec(
                        out_channels=int(entry["out_channels"]),
                        in_channels=int(entry["in_channels"]),
                        kernel_h=int(entry["kernel_h"]),
                        kernel_w=int(entry["kernel_w"]),
                        stride=int(entry.get("stride", 1)),
                        zero_padding=int(entry.get("zero_padding", 0)),
                    )
                elif kind == "pool":
                    pool = PoolSpec(
                        mode=entry["mode"],
                        window=int(entry["window"]),
                        stride=int(entry["stride"]),
                    )
                layers.append(LayerSpec(name=entry["name"], kind=kind, conv=conv, pool=pool))
            return NetworkDescriptor(
                layers=tuple(layers),
                input_channels=int(doc["input_channels"]),
                preprocessing=Preprocessing(
                    channel_means=tuple(float(m) for m in pre["channel_means"]),
                    channel_order=pre["channel_order"],
                ),
            )
        except (KeyError, TypeError) as exc:
            raise ConsistencyError(f"malformed descriptor document: {exc}") from exc


def load_descriptor(path) -> NetworkDescriptor:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConsistencyError(f"descriptor is not valid JSON: {exc}") from exc
    return NetworkDescriptor.from_json(doc)


def save_descriptor(descriptor: NetworkDescriptor, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(descriptor.to_json(), fh, indent=2)
        fh.write("\n")


@dataclass
class Network:
    descriptor: NetworkDescriptor
    weights: dict  # layer name -> (kernel [out,in,kh,kw], bias [out])

    def __post_init__(self):
        for spec in self.descriptor.layers:
            if spec.kind != "conv":
                continue
            if spec.name not in self.weights:
                raise MissingTensorError(f"no weights for conv layer {spec.name!r}")
            kernel, bias = self.weights[spec.name]
            expected = (
                spec.conv.out_channels,
                spec.conv.in_channels,
                spec.conv.kernel_h,
                spec.conv.kernel_w,
            )
            if tuple(kernel.shape) != expected:
                raise ShapeError(
                    f"layer {spec.name}: kernel shape {tuple(kernel.shape)} "
                    f"does not match descriptor {expected}"
                )
            if tuple(bias.shape) != (spec.conv.out_channels,):
                raise ShapeError(
                    f"layer {spec.name}: bias shape {tuple(bias.shape)} "
                    f"does not match descriptor ({spec.conv.out_channels},)"
                )
            if not (np.all(np.isfinite(kernel)) and np.all(np.isfinite(bias))):
                raise NumericError(f"layer {spec.name}: weights contain non-finite values")

    def astype(self, dtype) -> "Network":
        from .tensor import resolve_dtype

        dt = resolve_dtype(dtype)
        weights = {
            name: (k.astype(dt, copy=False), b.astype(dt, copy=False))
            for name, (k, b) in self.weights.items()
        }
        return Network(self.descriptor, weights)


def conv_out_size(size: int, kernel: int, stride: int, padding: int, name="conv") -> int:
    span = size + 2 * padding - kernel
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"{name}: output size ({size} + 2*{padding} - {kernel}) / {stride} + 1 "
            "is not a positive integer"
        )
    return span // stride + 1


def pool_out_size(size: int, window: int, stride: int, name="pool") -> int:
    span = size - window
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"{name}: output size ({size} - {window}) / {stride} + 1 is not a positive integer"
        )
    return span // stride + 1


def conv2d_forward(x: Tensor, kernel: Tensor, bias: Tensor, stride=1, padding=0) -> Tensor:
    """Cross-correlation with zero padding: [H,W,Cin] -> [H',W',Cout]."""
    h, w, cin = x.shape
    cout, kin, kh, kw = kernel.shape
    if kin != cin:
        raise ShapeError(f"conv input has {cin} channels, kernel expects {kin}")
    oh = conv_out_size(h, kh, stride, padding)
    ow = conv_out_size(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    win = sliding_window_view(x, (kh, kw), axis=(0, 1))[::stride, ::stride]
    cols = win.reshape(oh * ow, cin * kh * kw)
    y = cols @ kernel.reshape(cout, -1).T
    y += bias
    return y.reshape(oh, ow, cout)


def conv2d_backward_input(grad_out: Tensor, kernel: Tensor, stride=1, padding=0) -> Tensor:
    """Exact adjoint of conv2d_forward with respect to the input."""
    oh, ow, cg = grad_out.shape
    cout, cin, kh, kw = kernel.shape
    if cg != cout:
        raise ShapeError(f"grad has {cg} channels, kernel produces {cout}")
    # Input size is uniquely recoverable because the forward pass required
    # (H + 2p - kh) to be divisible by the stride.
    h = stride * (oh - 1) + kh - 2 * padding
    w = stride * (ow - 1) + kw - 2 * padding
    hp, wp = h + 2 * padding, w + 2 * padding
    gcols = grad_out.reshape(-1, cout) @ kernel.reshape(cout, -1)
    gcols = gcols.reshape(oh, ow, cin, kh, kw)
    gx = np.zeros((hp, wp, cin), dtype=grad_out.dtype)
    for i in range(kh):
        for j in range(kw):
            gx[i : i + stride * oh : stride, j : j + stride * ow : stride] += gcols[:, :, :, i, j]
    if padding:
        gx = gx[padding : hp - padding, padding : wp - padding]
    return np.ascontiguousarray(gx)


def relu_forward(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    if grad_out.shape != x.shape:
        raise ShapeError(f"relu grad shape {grad_out.shape} != input shape {x.shape}")
    return np.where(x > 0, grad_out, 0)


@dataclass
class PoolCache:
    mode: str
    window: int
    stride: int
    input_shape: tuple
    argmax: np.ndarray | None  # [H',W',C] flat window index, max mode only


def pool_forward(x: Tensor, mode: str, window: int, stride: int):
    h, w, c = x.shape
    oh = pool_out_size(h, window, stride)
    ow = pool_out_size(w, window, stride)
    win = sliding_window_view(x, (window, window), axis=(0, 1))[::stride, ::stride]
    flat = win.reshape(oh, ow, c, window * window)
    if mode == "max":
        idx = flat.argmax(axis=3)  # first max in row-major window scan
        y = np.take_along_axis(flat, idx[..., None], axis=3)[..., 0]
        cache = PoolCache(mode, window, stride, (h, w, c), idx)
    elif mode == "avg":
        y = flat.mean(axis=3, dtype=x.dtype)
        cache = PoolCache(mode, window, stride, (h, w, c), None)
    else:
        raise ShapeError(f"unknown pool mode {mode!r}")
    return np.ascontiguousarray(y), cache


def pool_backward(grad_out: Tensor, cache: PoolCache) -> Tensor:
    oh, ow, c = grad_out.shape
    window, stride = cache.window, cache.stride
    gx = np.zeros(cache.input_shape, dtype=grad_out.dtype)
    if cache.mode == "max":
        idx = cache.argmax
        if idx.shape != grad_out.shape:
            raise ShapeError(f"pool grad shape {grad_out.shape} != cached {idx.shape}")
        rows = np.arange(oh)[:, None, None] * stride + idx // window
        cols = np.arange(ow)[None, :, None] * stride + idx % window
        chans = np.broadcast_to(np.arange(c), (oh, ow, c))
        np.add.at(gx, (rows, cols, chans), grad_out)
    else:
        g = grad_out / (window * window)
        for i in range(window):
            for j in range(window):
                gx[i : i + stride * oh : stride, j : j + stride * ow : stride] += g
    return gx


@dataclass
class FeatureStack:
    """Activations of the requested layers plus everything the reverse pass
    needs: per-layer caches for the computed prefix of the network."""

    activations: dict
    input_shape: tuple
    _layer_names: list = field(default_factory=list, repr=False)
    _caches: list = field(default_factory=list, repr=False)
    _shapes: list = field(default_factory=list, repr=False)  # output shape per layer

    def feature_matrix(self, name: str) -> Tensor:
        """The [M, N] view of a layer's H x W x N activation, rows being the
        row-major flattening of (H, W)."""
        act = self.activations[name]
        h, w, n = act.shape
        return act.reshape(h * w, n)


def forward_features(net: Network, image: Tensor, layers: Iterable[str]) -> FeatureStack:
    """Run the network and collect the named activations.

    Only the prefix up to the deepest requested layer is evaluated; the
    returned stack carries the caches needed by backward_to_input.
    """
    requested = set(layers)
    names = net.descriptor.layer_names()
    unknown = requested - set(names)
    if unknown:
        raise ConsistencyError(f"unknown layer(s) requested: {sorted(unknown)}")
    if image.ndim != 3 or image.shape[2] != net.descriptor.input_channels:
        raise ShapeError(
            f"image shape {tuple(image.shape)} does not match descriptor input "
            f"({net.descriptor.input_channels} channels)"
        )
    depth = max((names.index(n) for n in requested), default=-1)

    stack = FeatureStack(activations={}, input_shape=tuple(image.shape))
    cur = image
    for spec in net.descriptor.layers[: depth + 1]:
        if spec.kind == "conv":
            kernel, bias = net.weights[spec.name]
            kernel = kernel.astype(cur.dtype, copy=False)
            bias = bias.astype(cur.dtype, copy=False)
            y = conv2d_forward(cur, kernel, bias, spec.conv.stride, spec.conv.zero_padding)
            stack._caches.append((spec.kind, (kernel, spec.conv)))
        elif spec.kind == "relu":
            y = relu_forward(cur)
            stack._caches.append((spec.kind, cur))
        else:
            y, cache = pool_forward(cur, spec.pool.mode, spec.pool.window, spec.pool.stride)
            stack._caches.append((spec.kind, cache))
        stack._layer_names.append(spec.name)
        stack._shapes.append(tuple(y.shape))
        if spec.name in requested:
            stack.activations[spec.name] = y
        cur = y
    return stack


def backward_to_input(net: Network, stack: FeatureStack, layer_grads: dict) -> Tensor:
    """Pull gradients supplied at named activations back to the input image.

    The result is the sum over supplied layers of each gradient's pullback,
    so it is linear (and additive) in ``layer_grads``.
    """
    for name, grad in layer_grads.items():
        if name not in stack.activations:
            raise ConsistencyError(f"gradient supplied for layer {name!r} not in the stack")
        if tuple(grad.shape) != tuple(stack.activations[name].shape):
            raise ShapeError(
                f"gradient shape {tuple(grad.shape)} does not match activation "
                f"{tuple(stack.activations[name].shape)} at layer {name!r}"
            )
    if not layer_grads:
        dtype = None
        for act in stack.activations.values():
            dtype = act.dtype
            break
        return np.zeros(stack.input_shape, dtype=dtype or np.float32)

    start = max(stack._layer_names.index(n) for n in layer_grads)
    g = None
    for i in range(start, -1, -1):
        name = stack._layer_names[i]
        if name in layer_grads:
            grad = layer_grads[name]
            g = grad.copy() if g is None else g + grad
        kind, cache = stack._caches[i]
        if kind == "conv":
            kernel, conv = cache
            g = conv2d_backward_input(g, kernel, conv.stride, conv.zero_padding)
        elif kind == "relu":
            g = relu_backward(g, cache)
        else:
            g = pool_backward(g, cache)
    return g
