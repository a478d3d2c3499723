"""Frame sequence I/O and pixel <-> network-input conversion.

Interchange format is binary PPM (P6, maxval 255): lossless, dependency
free, bit-exact on round trips.  Sequences are numbered files matching a
printf-style pattern with a 5-digit zero-padded index starting at 0
(`name_00000.ppm`, ...), described by a small JSON manifest
{"pattern", "count", "fps"}.

Preprocessing maps 8-bit RGB frames into the network's input space: cast
to float, reorder channels per the descriptor, subtract per-channel means.
Deprocessing inverts that, then clamps to [0, 255] and rounds half to
even, so it is an exact inverse for in-range values and idempotent.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConsistencyError,
    MissingFrameError,
    ShapeError,
    TruncatedFileError,
    UnsupportedFormatError,
)
from .network import NetworkDescriptor, Preprocessing
from .tensor import resolve_dtype


@dataclass
class Video:
    frames: list  # [H, W, 3] arrays: u8 in pixel space, float when preprocessed
    fps: float = 24.0

    def __len__(self):
        return len(self.frames)

    @property
    def frame_dims(self):
        return tuple(self.frames[0].shape)


@dataclass
class SequenceManifest:
    pattern: str  # e.g. "frame_%05d.ppm", relative to `directory`
    count: int
    fps: float = 24.0
    directory: Path = Path(".")

    def frame_path(self, index: int) -> Path:
        return self.directory / (self.pattern % index)


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM with maxval 255 into a uint8 [H, W, 3] array."""
    data = Path(path).read_bytes()
    if data[:2] == b"P3":
        raise UnsupportedFormatError(f"{path}: ASCII PPM (P3) is not supported, use P6")
    if data[:2] != b"P6":
        raise UnsupportedFormatError(f"{path}: not a PPM file (magic {data[:2]!r})")

    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed, then exactly one whitespace byte.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFileError(f"{path}: truncated PPM header", offset=pos)
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise UnsupportedFormatError(f"{path}: malformed PPM header fields {fields}")
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: maxval {maxval} unsupported, must be 255")
    if width < 1 or height < 1:
        raise UnsupportedFormatError(f"{path}: bad dimensions {width}x{height}")
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise TruncatedFileError(
            f"{path}: payload holds {len(payload)} of {need} bytes", offset=pos + len(payload)
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(frame: np.ndarray, path) -> None:
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ShapeError(f"frame must be [H, W, 3], got {frame.shape}")
    if frame.dtype != np.uint8:
        raise ShapeError(f"frame must be uint8 pixel space, got {frame.dtype}")
    h, w, _ = frame.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(frame).tobytes())


def load_manifest(path) -> SequenceManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return SequenceManifest(
            pattern=doc["pattern"],
            count=int(doc["count"]),
            fps=float(doc.get("fps", 24.0)),
            directory=path.parent,
        )
    except KeyError as exc:
        raise ConsistencyError(f"{path}: manifest missing field {exc}") from exc


def save_manifest(manifest: SequenceManifest, path) -> None:
    doc = {"pattern": manifest.pattern, "count": manifest.count, "fps": manifest.fps}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def infer_manifest(directory) -> SequenceManifest:
    """Build a manifest for a directory: use manifest.json when present,
    otherwise infer the pattern from `<base>_00000.ppm`-style names."""
    directory = Path(directory)
    explicit = directory / "manifest.json"
    if explicit.exists():
        return load_manifest(explicit)
    rx = re.compile(r"^(.*_)(\d{5})\.ppm$")
    indices = {}
    base = None
    for p in sorted(directory.glob("*.ppm")):
        m = rx.match(p.name)
        if not m:
            continue
        base = m.group(1)
        indices[int(m.group(2))] = p
    if base is None:
        raise MissingFrameError(f"{directory}: no frames matching '*_00000.ppm' found")
    count = max(indices) + 1
    return SequenceManifest(pattern=f"{base}%05d.ppm", count=count, directory=directory)


def read_sequence(manifest) -> Video:
    """Read the numbered frames of a manifest (path, directory, or object)."""
    if not isinstance(manifest, SequenceManifest):
        p = Path(manifest)
        manifest = infer_manifest(p) if p.is_dir() else load_manifest(p)
    frames = []
    dims = None
    for i in range(manifest.count):
        path = manifest.frame_path(i)
        if not path.exists():
            raise MissingFrameError(f"missing frame {i}: {path}")
        frame = read_ppm(path)
        if dims is None:
            dims = frame.shape
        elif frame.shape != dims:
            raise ConsistencyError(
                f"frame {i} dims {frame.shape[:2]} differ from first frame {dims[:2]}"
            )
        frames.append(frame)
    return Video(frames=frames, fps=manifest.fps)


def write_sequence(video: Video, manifest: SequenceManifest) -> None:
    if len(video) != manifest.count:
        raise ConsistencyError(f"video has {len(video)} frames, manifest says {manifest.count}")
    dims = video.frame_dims
    for i, frame in enumerate(video.frames):
        if tuple(frame.shape) != dims:
            raise ConsistencyError(f"frame {i} dims {frame.shape[:2]} differ from {dims[:2]}")
    manifest.directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(video.frames):
        write_ppm(frame, manifest.frame_path(i))
    save_manifest(manifest, manifest.directory / "manifest.json")


def _prep_of(descriptor) -> Preprocessing:
    if isinstance(descriptor, NetworkDescriptor):
        return descriptor.preprocessing
    return descriptor


def preprocess(frame: np.ndarray, descriptor, dtype="f32") -> np.ndarray:
    """uint8 RGB frame -> float network-input array (reordered, mean-subtracted)."""
    prep = _prep_of(descriptor)
    x = frame.astype(resolve_dtype(dtype))
    if prep.channel_order == "BGR":
        x = x[:, :, ::-1]
    return x - np.asarray(prep.channel_means, dtype=x.dtype)


def deprocess(arr: np.ndarray, descriptor) -> np.ndarray:
    """Inverse of preprocess: add means back, restore RGB order, clamp to
    [0, 255], round half to even, cast to uint8."""
    prep = _prep_of(descriptor)
    y = arr + np.asarray(prep.channel_means, dtype=arr.dtype)
    if prep.channel_order == "BGR":
        y = y[:, :, ::-1]
    y = np.clip(y, 0.0, 255.0)
    return np.rint(y).astype(np.uint8)
