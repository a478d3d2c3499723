"""Spatio-temporal Gram statistics of a frame sequence.

A texture is described, per network layer, by one large Gram matrix: the
features of ``delta_t`` consecutive frames are concatenated along the
channel axis and correlated, and the resulting per-window matrices are
arithmetically averaged over all T - delta_t + 1 windows of the source.
Dividing by the window count is what makes the description independent of
the source length, so e.g. a looped video and a single period of it yield
the same statistics.

Of the delta_t x delta_t block grid, the diagonal blocks are ordinary
single-frame Gram matrices; off-diagonal blocks hold cross-frame
correlations, which is why frame order matters for delta_t >= 2.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor
from .container import read_container, write_container
from .errors import ConsistencyError, MissingMetadataError, ShapeError, UnsupportedVersionError
from .network import Network, forward_features
from .tensor import Tensor

STATS_VERSION = 1


def worker_count() -> int:
    """Worker cap for per-frame feature extraction (DYNTEX_THREADS wins)."""
    env = os.environ.get("DYNTEX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


@dataclass
class GramMatrix:
    layer: str
    delta_t: int
    values: Tensor  # [delta_t*N, delta_t*N], symmetric PSD

    def __post_init__(self):
        side = self.values.shape[0]
        if self.values.ndim != 2 or self.values.shape[1] != side:
            raise ShapeError(f"Gram matrix must be square, got {self.values.shape}")
        if self.delta_t < 1 or side % self.delta_t != 0:
            raise ConsistencyError(
                f"layer {self.layer}: side {side} not divisible by delta_t {self.delta_t}"
            )

    @property
    def channels(self) -> int:
        return self.values.shape[0] // self.delta_t

    def block(self, a: int, b: int) -> Tensor:
        n = self.channels
        return self.values[a * n : (a + 1) * n, b * n : (b + 1) * n]


@dataclass
class TextureStatistics:
    delta_t: int
    layer_names: list
    layer_weights: list
    grams: dict  # layer name -> GramMatrix
    source_meta: dict = field(default_factory=dict)  # {"frames": T, "frame_dims": [H,W,C]}

    def __post_init__(self):
        if len(self.layer_weights) != len(self.layer_names):
            raise ConsistencyError("one weight per layer required")
        if any(w <= 0 for w in self.layer_weights):
            raise ConsistencyError("layer weights must be > 0")
        for name in self.layer_names:
            if name not in self.grams:
                raise ConsistencyError(f"missing Gram matrix for layer {name!r}")
            if self.grams[name].delta_t != self.delta_t:
                raise ConsistencyError(f"layer {name!r}: delta_t disagrees with statistics")
        t = self.source_meta.get("frames")
        if t is not None and self.delta_t > t:
            raise ConsistencyError(f"delta_t {self.delta_t} exceeds source frame count {t}")

    @property
    def frame_dims(self):
        return tuple(self.source_meta["frame_dims"])

    def weight_of(self, name: str) -> float:
        return self.layer_weights[self.layer_names.index(name)]


def concat_window(features) -> Tensor:
    """Concatenate per-frame [M, N] feature matrices along the channel axis.

    Column block b of the result equals features[b]."""
    if len(features) == 0:
        raise ShapeError("cannot concatenate an empty feature window")
    first = features[0].shape
    for f in features:
        if f.ndim != 2 or f.shape != first:
            raise ShapeError(f"feature matrices disagree: {f.shape} vs {first}")
    if len(features) == 1:
        return features[0]
    return np.concatenate(features, axis=1)


def gram(f: Tensor) -> Tensor:
    """(1/M) F^T F for an [M, K] feature matrix; exactly symmetric, PSD."""
    m = f.shape[0]
    return tensor.gram_product(f) / f.dtype.type(m)


def compute_statistics(
    frames,
    net: Network,
    layers,
    delta_t: int,
    weights=None,
    workers: int | None = None,
) -> TextureStatistics:
    """Average the per-window Gram matrices of a preprocessed frame sequence.

    ``frames`` are network-input-space arrays of identical dims.  Each
    frame's features are computed once and shared across the overlapping
    windows; the window sum is accumulated in frame-index order and divided
    by the window count.
    """
    layers = list(layers)
    if not layers:
        raise ConsistencyError("at least one layer required")
    t = len(frames)
    if delta_t < 1:
        raise ConsistencyError(f"delta_t must be >= 1, got {delta_t}")
    if t < delta_t:
        raise ConsistencyError(f"T < delta_t: {t} frames but delta_t={delta_t}")
    dims = tuple(frames[0].shape)
    for f in frames:
        if tuple(f.shape) != dims:
            raise ShapeError(f"frame dims disagree: {tuple(f.shape)} vs {dims}")
    if weights is None:
        weights = [1.0] * len(layers)
    weights = [float(w) for w in weights]

    workers = workers if workers is not None else worker_count()
    if workers > 1 and t > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stacks = list(pool.map(lambda fr: forward_features(net, fr, layers), frames))
    else:
        stacks = [forward_features(net, fr, layers) for fr in frames]

    n_windows = t - delta_t + 1
    grams = {}
    for name in layers:
        mats = [stack.feature_matrix(name) for stack in stacks]
        acc = gram(concat_window(mats[0:delta_t]))
        for i in range(1, n_windows):
            acc = acc + gram(concat_window(mats[i : i + delta_t]))
        grams[name] = GramMatrix(name, delta_t, acc / acc.dtype.type(n_windows))

    return TextureStatistics(
        delta_t=delta_t,
        layer_names=layers,
        layer_weights=weights,
        grams=grams,
        source_meta={"frames": t, "frame_dims": list(dims)},
    )


def save_statistics(stats: TextureStatistics, path) -> None:
    """Write statistics as a DTXW container plus a `<path>.meta.json` sidecar."""
    items = [(f"gram.{name}", stats.grams[name].values) for name in stats.layer_names]
    write_container(path, items)
    meta = {
        "format_version": STATS_VERSION,
        "delta_t": stats.delta_t,
        "layer_names": list(stats.layer_names),
        "layer_weights": [float(w) for w in stats.layer_weights],
        "layer_channels": [stats.grams[n].channels for n in stats.layer_names],
        "source_meta": stats.source_meta,
    }
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def sidecar_path(path) -> str:
    return str(path) + ".meta.json"


def load_statistics(path) -> TextureStatistics:
    side = Path(sidecar_path(path))
    if not side.exists():
        raise MissingMetadataError(f"missing metadata sidecar {side}")
    with open(side, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConsistencyError(f"{side}: not valid JSON: {exc}") from exc
    version = meta.get("format_version")
    if version != STATS_VERSION:
        raise UnsupportedVersionError(f"{side}: unsupported statistics version {version}")
    tensors = read_container(path)
    delta_t = int(meta["delta_t"])
    layer_names = list(meta["layer_names"])
    channels = meta.get("layer_channels", [None] * len(layer_names))
    grams = {}
    for name, n in zip(layer_names, channels):
        key = f"gram.{name}"
        if key not in tensors:
            raise ConsistencyError(f"{path}: missing tensor {key!r} listed in sidecar")
        values = tensors[key]
        side_len = values.shape[0]
        if n is not None and side_len != delta_t * int(n):
            raise ConsistencyError(
                f"{path}: layer {name!r} Gram side {side_len} != delta_t*N = "
                f"{delta_t}*{n}"
            )
        grams[name] = GramMatrix(name, delta_t, values)
    return TextureStatistics(
        delta_t=delta_t,
        layer_names=layer_names,
        layer_weights=[float(w) for w in meta["layer_weights"]],
        grams=grams,
        source_meta=dict(meta.get("source_meta", {})),
    )
