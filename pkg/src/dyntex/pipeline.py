"""End-to-end video synthesis.

Generation runs per frame as a pre-image search: minimize the window
statistics mismatch with the previous delta_t - 1 output frames held
fixed.  The first delta_t frames either come from a joint optimization
of the whole window started at noise, or (extrapolation) the caller
supplies delta_t - 1 example frames that are emitted verbatim.

Everything here operates in preprocessed space; pixel conversion is the
caller's job.  Determinism contract: the same config and seed produce a
bit-identical video, and a longer run is a prefix-extension of a shorter
one (per-frame noise is keyed by seed XOR absolute frame index, and the
context of frame t is always the previous delta_t - 1 output frames).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import ConsistencyError, DyntexError, ShapeError
from .gram import TextureStatistics
from .lbfgs import LbfgsConfig, OptimizationTrace, minimize
from .loss import WindowContext, frame_loss_grad, joint_loss_grad
from .network import Network, forward_features
from .video import Video

# Noise std in preprocessed space = noise_std * NOISE_SCALE; the scale puts
# unit noise_std near the dynamic range of mean-subtracted natural images.
NOISE_SCALE = 25.0

INIT_MODES = ("noise_joint", "from_example")


def _net_dtype(net: Network) -> np.dtype:
    for kernel, _ in net.weights.values():
        return kernel.dtype
    return np.dtype(np.float32)


@dataclass
class SynthesisConfig:
    target_stats: TextureStatistics
    net: Network
    n_frames_out: int
    init_mode: str = "noise_joint"
    example_frames: list | None = None  # preprocessed, exactly delta_t - 1
    seed: int = 0
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    noise_std: float = 1.0

    def __post_init__(self):
        if self.init_mode not in INIT_MODES:
            raise ConsistencyError(
                f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}"
            )
        if self.noise_std <= 0:
            raise ConsistencyError(f"noise_std must be positive, got {self.noise_std}")
        dt = self.target_stats.delta_t
        if self.init_mode == "noise_joint":
            if self.example_frames:
                raise ConsistencyError("noise_joint takes no example frames")
            if self.n_frames_out < dt:
                raise ConsistencyError(
                    f"n_frames_out {self.n_frames_out} < delta_t {dt}"
                )
        else:
            frames = self.example_frames or []
            if len(frames) != dt - 1:
                raise ConsistencyError(
                    f"from_example needs exactly delta_t-1 = {dt - 1} frames, "
                    f"got {len(frames)}"
                )
            if self.n_frames_out < dt - 1:
                raise ConsistencyError(
                    f"n_frames_out {self.n_frames_out} < seed frame count {dt - 1}"
                )
            want = None
            if "frame_dims" in self.target_stats.source_meta:
                want = self.target_stats.frame_dims
            for i, f in enumerate(frames):
                if want is None:
                    want = tuple(f.shape)
                elif tuple(f.shape) != tuple(want):
                    raise ShapeError(
                        f"example frame {i} dims {tuple(f.shape)} != {tuple(want)}"
                    )

    @property
    def frame_dims(self):
        if self.example_frames:
            return tuple(self.example_frames[0].shape)
        try:
            return self.target_stats.frame_dims
        except KeyError:
            raise ConsistencyError(
                "statistics carry no source frame dims; supply example frames"
            ) from None


def noise_frame(cfg: SynthesisConfig, frame_index: int) -> np.ndarray:
    """Gaussian init for one frame, keyed by seed XOR frame index."""
    return tensor.gaussian(
        cfg.frame_dims,
        mean=0.0,
        std=cfg.noise_std * NOISE_SCALE,
        seed=cfg.seed ^ frame_index,
        dtype=_net_dtype(cfg.net),
    )


def _with_frame_context(label, exc: DyntexError):
    wrapped = type(exc)(f"{label}: {exc}")
    wrapped.__cause__ = exc
    return wrapped


def synthesize_frame(
    prev, cfg: SynthesisConfig, frame_index: int = 0, x0=None, ctx: WindowContext | None = None
):
    """Optimize one frame against the target statistics with `prev` fixed.

    `prev` holds the delta_t - 1 preceding output frames.  `ctx` may carry
    their already-computed feature stacks; otherwise they are recomputed.
    `x0` overrides the seeded noise start (used by fixed-point checks).
    """
    stats = cfg.target_stats
    if len(prev) != stats.delta_t - 1:
        raise ConsistencyError(
            f"frame {frame_index}: context has {len(prev)} frames, "
            f"need delta_t-1 = {stats.delta_t - 1}"
        )
    if ctx is None:
        stacks = [forward_features(cfg.net, f, stats.layer_names) for f in prev]
        ctx = WindowContext(frames=list(prev), stacks=stacks)
    if x0 is None:
        x0 = noise_frame(cfg, frame_index)

    def objective(x):
        breakdown, grad = frame_loss_grad(x, ctx, stats, cfg.net)
        return breakdown.total, grad

    try:
        x, trace = minimize(objective, x0, cfg.lbfgs)
    except DyntexError as exc:
        raise _with_frame_context(f"frame {frame_index}", exc)
    return x, trace


def init_frames_joint(cfg: SynthesisConfig):
    """Optimize the first delta_t frames jointly from noise as one vector."""
    if cfg.init_mode != "noise_joint":
        raise ConsistencyError(f"init_frames_joint requires noise_joint, got {cfg.init_mode!r}")
    stats = cfg.target_stats
    dt = stats.delta_t
    dims = cfg.frame_dims
    size = int(np.prod(dims))
    x0 = np.concatenate([noise_frame(cfg, i).ravel() for i in range(dt)])

    def unstack(v):
        return [v[k * size : (k + 1) * size].reshape(dims) for k in range(dt)]

    def objective(v):
        breakdown, grads = joint_loss_grad(unstack(v), stats, cfg.net)
        return breakdown.total, np.concatenate([g.ravel() for g in grads])

    try:
        v, trace = minimize(objective, x0, cfg.lbfgs)
    except DyntexError as exc:
        raise _with_frame_context(f"frames 0..{dt - 1} (joint init)", exc)
    return unstack(v), trace


def generate(cfg: SynthesisConfig):
    """Produce n_frames_out frames plus one trace per frame.

    Returns (Video of preprocessed frames, traces).  Joint-init frames
    share the joint trace; verbatim example frames get None.
    """
    stats = cfg.target_stats
    dt = stats.delta_t
    dtype = _net_dtype(cfg.net)
    if cfg.init_mode == "noise_joint":
        frames, joint_trace = init_frames_joint(cfg)
        out = list(frames)
        traces: list[OptimizationTrace | None] = [joint_trace] * dt
    else:
        out = [f.astype(dtype, copy=False) for f in (cfg.example_frames or [])]
        traces = [None] * len(out)

    # Context features are computed once per output frame and reused while
    # the frame stays inside the sliding window.
    stack_cache: dict[int, object] = {}

    def stack_of(index):
        if index not in stack_cache:
            stack_cache[index] = forward_features(cfg.net, out[index], stats.layer_names)
        return stack_cache[index]

    for t in range(len(out), cfg.n_frames_out):
        lo = t - (dt - 1)
        ctx = WindowContext(
            frames=[out[i] for i in range(lo, t)],
            stacks=[stack_of(i) for i in range(lo, t)],
        )
        x, trace = synthesize_frame(ctx.frames, cfg, frame_index=t, ctx=ctx)
        out.append(x)
        traces.append(trace)
        for stale in [k for k in stack_cache if k <= t - (dt - 1)]:
            del stack_cache[stale]

    return Video(frames=out[: cfg.n_frames_out]), traces[: cfg.n_frames_out]
