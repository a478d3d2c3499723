"""Shared builders for tiny descriptor-defined test networks."""

import numpy as np
import pytest

import dyntex as dx


def make_descriptor(layer_specs, input_channels=3, means=None, order="RGB"):
    """layer_specs: list of ("conv", out_ch, k, stride, pad) / ("relu",) /
    ("pool", mode, window, stride) tuples; names are auto-numbered."""
    layers = []
    in_ch = input_channels
    counts = {"conv": 0, "relu": 0, "pool": 0}
    for spec in layer_specs:
        kind = spec[0]
        counts[kind] += 1
        name = f"{kind}{counts[kind]}"
        if kind == "conv":
            _, out_ch, k, stride, pad = spec
            layers.append(dx.LayerSpec(
                name=name, kind="conv",
                conv=dx.ConvSpec(out_ch, in_ch, k, k, stride, pad),
            ))
            in_ch = out_ch
        elif kind == "relu":
            layers.append(dx.LayerSpec(name=name, kind="relu"))
        else:
            _, mode, window, stride = spec
            layers.append(dx.LayerSpec(
                name=name, kind="pool", pool=dx.PoolSpec(mode, window, stride)
            ))
    if means is None:
        means = (0.0,) * input_channels
    return dx.NetworkDescriptor(
        layers=tuple(layers),
        input_channels=input_channels,
        preprocessing=dx.Preprocessing(channel_means=tuple(means), channel_order=order),
    )


def random_weights(descriptor, rng, scale=0.3, dtype=np.float64):
    weights = {}
    for spec in descriptor.layers:
        if spec.kind != "conv":
            continue
        c = spec.conv
        kernel = rng.normal(0.0, scale, (c.out_channels, c.in_channels, c.kernel_h, c.kernel_w))
        bias = rng.normal(0.0, 0.1 * scale, c.out_channels)
        weights[spec.name] = (kernel.astype(dtype), bias.astype(dtype))
    return weights


def make_net(layer_specs, seed=0, input_channels=3, scale=0.3, dtype=np.float64, **kw):
    descriptor = make_descriptor(layer_specs, input_channels=input_channels, **kw)
    rng = np.random.default_rng(seed)
    return dx.Network(descriptor, random_weights(descriptor, rng, scale=scale, dtype=dtype))


@pytest.fixture
def tiny_net():
    """conv-relu-pool-conv-relu, 3 -> 4 -> 6 channels, f64."""
    return make_net([
        ("conv", 4, 3, 1, 1), ("relu",), ("pool", "avg", 2, 2),
        ("conv", 6, 3, 1, 1), ("relu",),
    ], seed=0)


@pytest.fixture
def flat_net():
    """conv-relu only (no pooling), safe for odd frame sizes, f64."""
    return make_net([("conv", 5, 3, 1, 1), ("relu",)], seed=1)


def random_frames(rng, t, h=8, w=8, c=3, std=10.0, dtype=np.float64):
    return [rng.normal(0.0, std, (h, w, c)).astype(dtype) for _ in range(t)]
