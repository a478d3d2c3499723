"""Synthesis objective: squared Gram mismatch and its input gradient.

The frame being optimized completes a sliding window of delta_t frames
(the preceding delta_t - 1 frames are fixed).  Per layer, the loss is

    E = 1/(4 N^2) * sum_ij (G_window - G_target)_ij^2

with N the layer's channel count, and the total is the weighted sum over
layers.  The gradient with respect to the window's feature matrix F is
(1/(M N^2)) * F @ (G_window - G_target); only the column block belonging
to a frame under optimization is pulled back through the network, so fixed
context frames receive no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .errors import ConsistencyError, ShapeError
from .gram import TextureStatistics, concat_window, gram
from .network import FeatureStack, Network, backward_to_input, forward_features
from .tensor import Tensor


@dataclass
class LossBreakdown:
    total: float
    per_layer: dict  # layer name -> unweighted E value


@dataclass
class WindowContext:
    """The delta_t - 1 fixed frames preceding the frame being synthesized,
    with their feature stacks cached so the window can be rebuilt cheaply."""

    frames: list
    stacks: list

    def __post_init__(self):
        if len(self.frames) != len(self.stacks):
            raise ConsistencyError("one cached stack per context frame required")

    def __len__(self):
        return len(self.frames)


def make_context(frames, net: Network, layers) -> WindowContext:
    stacks = [forward_features(net, f, layers) for f in frames]
    return WindowContext(frames=list(frames), stacks=stacks)


def layer_loss(g_window: Tensor, g_target: Tensor, n_channels: int) -> float:
    """1/(4 N^2) of the squared Frobenius mismatch between two Gram matrices."""
    if g_window.shape != g_target.shape:
        raise ShapeError(f"Gram dims differ: {g_window.shape} vs {g_target.shape}")
    return tensor.frobenius_sq(g_window - g_target) / (4.0 * n_channels**2)


def _window_terms(parts, target: TextureStatistics, name: str):
    """Window Gram, mismatch, loss and dE/dF for one layer."""
    f_win = concat_window(parts)
    m = f_win.shape[0]
    n = target.grams[name].channels
    g_tgt = target.grams[name].values.astype(f_win.dtype, copy=False)
    g_win = gram(f_win)
    if g_win.shape != g_tgt.shape:
        raise ShapeError(
            f"layer {name!r}: window Gram {g_win.shape} vs target {g_tgt.shape}"
        )
    diff = g_win - g_tgt
    e = tensor.frobenius_sq(diff) / (4.0 * n**2)
    dfull = (f_win @ diff) / f_win.dtype.type(m * n**2)
    return e, dfull, n


def frame_loss_grad(
    x: Tensor, ctx: WindowContext, target: TextureStatistics, net: Network
):
    """Loss of the window [ctx frames..., x] and its gradient w.r.t. x."""
    if len(ctx) != target.delta_t - 1:
        raise ConsistencyError(
            f"context has {len(ctx)} frames, need delta_t-1 = {target.delta_t - 1}"
        )
    for f in ctx.frames:
        if tuple(f.shape) != tuple(x.shape):
            raise ShapeError(f"context frame dims {tuple(f.shape)} != frame {tuple(x.shape)}")
    stack = forward_features(net, x, target.layer_names)
    total = 0.0
    per_layer = {}
    layer_grads = {}
    for name in target.layer_names:
        parts = [s.feature_matrix(name) for s in ctx.stacks]
        parts.append(stack.feature_matrix(name))
        e, dfull, n = _window_terms(parts, target, name)
        per_layer[name] = e
        w = target.weight_of(name)
        total += w * e
        dlast = dfull[:, (target.delta_t - 1) * n :]
        h, wdim, _ = stack.activations[name].shape
        layer_grads[name] = np.ascontiguousarray(w * dlast).reshape(h, wdim, n)
    grad = backward_to_input(net, stack, layer_grads)
    return LossBreakdown(total=total, per_layer=per_layer), grad


def joint_loss_grad(frames, target: TextureStatistics, net: Network):
    """Same single-window loss, with gradients flowing to all delta_t frames."""
    if len(frames) != target.delta_t:
        raise ConsistencyError(
            f"joint window needs exactly delta_t = {target.delta_t} frames, got {len(frames)}"
        )
    dims = tuple(frames[0].shape)
    for f in frames:
        if tuple(f.shape) != dims:
            raise ShapeError("joint window frames must share dims")
    stacks = [forward_features(net, f, target.layer_names) for f in frames]
    total = 0.0
    per_layer = {}
    per_frame_grads = [dict() for _ in frames]
    for name in target.layer_names:
        parts = [s.feature_matrix(name) for s in stacks]
        e, dfull, n = _window_terms(parts, target, name)
        per_layer[name] = e
        w = target.weight_of(name)
        total += w * e
        h, wdim, _ = stacks[0].activations[name].shape
        for k in range(target.delta_t):
            dk = dfull[:, k * n : (k + 1) * n]
            per_frame_grads[k][name] = np.ascontiguousarray(w * dk).reshape(h, wdim, n)
    grads = [
        backward_to_input(net, stack, lg) for stack, lg in zip(stacks, per_frame_grads)
    ]
    return LossBreakdown(total=total, per_layer=per_layer), grads
