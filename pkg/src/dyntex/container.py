"""Binary tensor container (`DTXW`).

Layout, all little-endian:

    magic   4 bytes  "DTXW"
    version u32      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u16, name UTF-8, rank u8, rank x u32 dims,
        prod(dims) float32 values, row-major

Payloads are always float32; callers cast on the way in and out.  Entry
order is preserved, so rewriting the same tensors yields identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    MissingTensorError,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .tensor import check_shape

MAGIC = b"DTXW"
VERSION = 1
MAX_NAME_LEN = 0xFFFF


def write_container(path, tensors) -> None:
    """Write named tensors; ``tensors`` is a dict or (name, array) iterable."""
    if isinstance(tensors, dict):
        items = list(tensors.items())
    else:
        items = list(tensors)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(items))
    for name, arr in items:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        dims = check_shape(arr.shape)
        encoded = name.encode("utf-8")
        if len(encoded) > MAX_NAME_LEN:
            raise ShapeError(f"tensor name too long: {name[:32]!r}...")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", len(dims))
        blob += struct.pack(f"<{len(dims)}I", *dims)
        blob += arr.tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.path}: truncated while reading {what}", offset=self.pos
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_container(path) -> dict:
    """Read a container back as an ordered {name: float32 array} dict."""
    data = Path(path).read_bytes()
    rd = _Reader(data, path)
    magic = rd.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = rd.unpack("<I", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    (count,) = rd.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (name_len,) = rd.unpack("<H", "name length")
        name = rd.take(name_len, "name").decode("utf-8")
        (rank,) = rd.unpack("<B", "rank")
        dims = rd.unpack(f"<{rank}I", f"dims of {name!r}")
        dims = check_shape(dims)
        n = int(np.prod(dims))
        payload = rd.take(4 * n, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        tensors[name] = arr
    if rd.pos != len(data):
        raise TruncatedFileError(
            f"{path}: {len(data) - rd.pos} trailing bytes after last tensor", offset=rd.pos
        )
    return tensors


def network_from_container(descriptor, weights_file):
    """Pair an in-memory descriptor with a DTXW weight container.

    Conv weights are looked up as `<layer>.weight` / `<layer>.bias`; every
    conv layer must be matched and shape-checked (Network validates).
    """
    from .network import Network

    tensors = read_container(weights_file)
    weights = {}
    for spec in descriptor.layers:
        if spec.kind != "conv":
            continue
        wname, bname = f"{spec.name}.weight", f"{spec.name}.bias"
        if wname not in tensors:
            raise MissingTensorError(f"{weights_file}: missing tensor {wname!r}")
        if bname not in tensors:
            raise MissingTensorError(f"{weights_file}: missing tensor {bname!r}")
        weights[spec.name] = (tensors[wname], tensors[bname])
    return Network(descriptor, weights)


def load_network(descriptor_file, weights_file):
    """Build a Network from a JSON descriptor file and a DTXW container."""
    from .network import load_descriptor

    return network_from_container(load_descriptor(descriptor_file), weights_file)


def save_network_weights(net, path) -> None:
    """Weight-container counterpart of load_network (layer order preserved)."""
    items = []
    for spec in net.descriptor.layers:
        if spec.kind != "conv":
            continue
        kernel, bias = net.weights[spec.name]
        items.append((f"{spec.name}.weight", kernel))
        items.append((f"{spec.name}.bias", bias))
    write_container(path, items)
