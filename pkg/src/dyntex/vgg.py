"""Built-in VGG-19 network descriptors.

The texture features come from the 16-conv normalized VGG-19 topology:
blocks of 3x3 stride-1 pad-1 convolutions (2, 2, 4, 4, 4 per block) with
2x2 stride-2 pooling between blocks.  Only the convolutional part is
described, through conv5_4/relu5_4; there is no pool5.  Average pooling
is the default for synthesis, max pooling is kept as a variant.

Input preprocessing follows the weights' training convention: BGR channel
order with per-channel means [103.939, 116.779, 123.68] subtracted.
"""

from __future__ import annotations

from .network import ConvSpec, LayerSpec, NetworkDescriptor, PoolSpec, Preprocessing

VGG_MEANS = (103.939, 116.779, 123.68)

# (block, convs in block, out channels)
_BLOCKS = ((1, 2, 64), (2, 2, 128), (3, 4, 256), (4, 4, 512), (5, 4, 512))

BUILTIN_NETS = ("vgg19_avg", "vgg19_max")

# Conventional loss-layer set for texture synthesis.
DEFAULT_LAYERS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")


def vgg19_descriptor(pooling: str = "avg") -> NetworkDescriptor:
    if pooling not in ("avg", "max"):
        raise ValueError(f"pooling must be 'avg' or 'max', got {pooling!r}")
    layers = []
    in_ch = 3
    for block, n_convs, out_ch in _BLOCKS:
        for j in range(1, n_convs + 1):
            conv = ConvSpec(
                out_channels=out_ch, in_channels=in_ch,
                kernel_h=3, kernel_w=3, stride=1, zero_padding=1,
            )
            layers.append(LayerSpec(name=f"conv{block}_{j}", kind="conv", conv=conv))
            layers.append(LayerSpec(name=f"relu{block}_{j}", kind="relu"))
            in_ch = out_ch
        if block < 5:
            layers.append(LayerSpec(
                name=f"pool{block}", kind="pool",
                pool=PoolSpec(mode=pooling, window=2, stride=2),
            ))
    return NetworkDescriptor(
        layers=tuple(layers),
        input_channels=3,
        preprocessing=Preprocessing(channel_means=VGG_MEANS, channel_order="BGR"),
    )


def builtin_descriptor(name: str) -> NetworkDescriptor:
    if name == "vgg19_avg":
        return vgg19_descriptor("avg")
    if name == "vgg19_max":
        return vgg19_descriptor("max")
    raise KeyError(f"unknown builtin network {name!r}, have {BUILTIN_NETS}")
