"""Command-line entry points: analyze, synthesize, extrapolate, info.

Flags may also come from a JSON config file (--config); explicit flags
win.  The resolved effective config is echoed to stderr as one JSON line
before any work starts.  Exit codes: 0 ok, 2 usage, 3 I/O, 4 shape or
consistency, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import vgg
from .container import network_from_container, read_container
from .errors import ConsistencyError, DyntexError
from .gram import compute_statistics, load_statistics, save_statistics, sidecar_path
from .lbfgs import LbfgsConfig
from .network import load_descriptor
from .pipeline import SynthesisConfig, generate
from .video import (
    SequenceManifest,
    deprocess,
    preprocess,
    read_sequence,
    write_ppm,
    write_sequence,
)

FRAME_PATTERN = "frame_%05d.ppm"
TRACE_PATTERN = "frame_%05d.loss.csv"


def _fail_usage(message: str):
    print(f"usage error: {message}", file=sys.stderr)
    raise SystemExit(2)


# Per-command flag schema: dest -> (default, type caster). None default means
# "required unless supplied by the config file".
_COMMON_NET = {
    "net": ("vgg19_avg", str),
    "weights": (None, str),
    "dtype": ("f32", str),
}
_SCHEMAS = {
    "analyze": {
        "frames": (None, str),
        **_COMMON_NET,
        "dt": (2, int),
        "layers": (",".join(vgg.DEFAULT_LAYERS), str),
        "layer_weights": ("", str),
        "out": (None, str),
    },
    "synthesize": {
        "stats": (None, str),
        **_COMMON_NET,
        "n_frames": (None, int),
        "seed": (0, int),
        "iters": (500, int),
        "init": ("noise", str),
        "seed_frames": ("", str),
        "out": (None, str),
    },
    "extrapolate": {
        "stats": (None, str),
        **_COMMON_NET,
        "n_frames": (None, int),
        "seed": (0, int),
        "iters": (500, int),
        "seed_frames": (None, str),
        "out": (None, str),
    },
    "info": {"path": (None, str)},
}
_REQUIRED = {
    "analyze": ("frames", "weights", "out"),
    "synthesize": ("stats", "weights", "n_frames", "out"),
    "extrapolate": ("stats", "weights", "n_frames", "seed_frames", "out"),
    "info": ("path",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyntex", description="Dynamic texture analysis and synthesis."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(cmd, help_text):
        p = sub.add_parser(cmd, help=help_text)
        if cmd == "info":
            p.add_argument("path", nargs="?", default=None, help="artifact file to inspect")
            return p
        p.add_argument("--config", default=None, help="JSON config file (flags win)")
        for dest in _SCHEMAS[cmd]:
            flag = "--" + dest.replace("_", "-")
            kwargs = {"default": None, "dest": dest}
            if dest == "dtype":
                kwargs["choices"] = ("f32", "f64")
            if dest == "init":
                kwargs["choices"] = ("noise", "frames")
            p.add_argument(flag, **kwargs)
        return p

    add("analyze", "extract windowed Gram statistics from a frame sequence")
    add("synthesize", "generate frames from statistics, starting at noise")
    add("extrapolate", "continue a sequence from example seed frames")
    add("info", "inspect a statistics or weights file")
    return parser


def _resolve(args) -> dict:
    """Merge flags over the optional config file and apply defaults."""
    schema = _SCHEMAS[args.command]
    file_cfg = {}
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                file_cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConsistencyError(f"{config_path}: invalid JSON config: {exc}") from exc
        unknown = sorted(set(file_cfg) - set(schema))
        if unknown:
            _fail_usage(f"unknown config keys: {', '.join(unknown)}")
    resolved = {}
    for dest, (default, caster) in schema.items():
        value = getattr(args, dest, None)
        if value is None:
            value = file_cfg.get(dest, default)
        if value is not None:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            value = caster(value)
        resolved[dest] = value
    missing = [k for k in _REQUIRED[args.command] if resolved.get(k) in (None, "")]
    if missing:
        _fail_usage(f"{args.command}: missing required "
                    f"{', '.join('--' + m.replace('_', '-') for m in missing)}")
    return resolved


def _echo_config(command: str, resolved: dict) -> None:
    print(json.dumps({"command": command, **resolved}, sort_keys=True), file=sys.stderr)


def _load_net(cfg: dict):
    name = cfg["net"]
    if name in vgg.BUILTIN_NETS:
        descriptor = vgg.builtin_descriptor(name)
    else:
        descriptor = load_descriptor(name)
    return network_from_container(descriptor, cfg["weights"]).astype(cfg["dtype"])


def _parse_layers(cfg: dict):
    layers = [s for s in cfg["layers"].split(",") if s]
    if not layers:
        _fail_usage("--layers must name at least one layer")
    if cfg.get("layer_weights"):
        try:
            weights = [float(s) for s in cfg["layer_weights"].split(",") if s]
        except ValueError:
            _fail_usage(f"bad --layer-weights {cfg['layer_weights']!r}")
        if len(weights) != len(layers):
            _fail_usage(f"{len(weights)} layer weights for {len(layers)} layers")
    else:
        weights = [1.0] * len(layers)
    return layers, weights


def cmd_analyze(cfg: dict) -> int:
    net = _load_net(cfg)
    layers, layer_weights = _parse_layers(cfg)
    source = read_sequence(cfg["frames"])
    frames = [preprocess(f, net.descriptor, dtype=cfg["dtype"]) for f in source.frames]
    stats = compute_statistics(frames, net, layers, cfg["dt"], weights=layer_weights)
    save_statistics(stats, cfg["out"])
    print(f"frames: {len(frames)}  delta_t: {cfg['dt']}  "
          f"windows: {len(frames) - cfg['dt'] + 1}")
    for name in stats.layer_names:
        g = stats.grams[name]
        print(f"layer {name}: gram {g.values.shape[0]}x{g.values.shape[1]} "
              f"(N={g.channels})")
    print(f"wrote {cfg['out']} (+ {sidecar_path(cfg['out'])})")
    return 0


def _write_outputs(out_dir: Path, pixel_frames, traces, fps: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = SequenceManifest(
        pattern=FRAME_PATTERN, count=len(pixel_frames), fps=fps, directory=out_dir
    )
    from .video import Video

    write_sequence(Video(frames=pixel_frames, fps=fps), manifest)
    for i, trace in enumerate(traces):
        if trace is not None:
            trace.save_csv(out_dir / (TRACE_PATTERN % i))


def _run_generation(cfg: dict, example_pixels=None) -> int:
    net = _load_net(cfg)
    stats = load_statistics(cfg["stats"])
    example = None
    if example_pixels is not None:
        example = [preprocess(f, net.descriptor, dtype=cfg["dtype"]) for f in example_pixels]
    syn = SynthesisConfig(
        target_stats=stats,
        net=net,
        n_frames_out=cfg["n_frames"],
        init_mode="noise_joint" if example is None else "from_example",
        example_frames=example,
        seed=cfg["seed"],
        lbfgs=LbfgsConfig(max_iters=cfg["iters"]),
    )
    video, traces = generate(syn)
    out_dir = Path(cfg["out"])
    pixel_frames = [deprocess(f, net.descriptor) for f in video.frames]
    if example_pixels is not None:
        # Seed frames pass through untouched.
        pixel_frames[: len(example_pixels)] = [f.copy() for f in example_pixels]
    _write_outputs(out_dir, pixel_frames, traces, video.fps)
    finals = [t.final_loss for t in traces if t is not None]
    if finals:
        print(f"wrote {len(pixel_frames)} frames to {out_dir}  "
              f"(last frame final loss {finals[-1]:.6g})")
    else:
        print(f"wrote {len(pixel_frames)} frames to {out_dir}")
    return 0


def cmd_synthesize(cfg: dict) -> int:
    if cfg["init"] == "frames":
        if not cfg["seed_frames"]:
            _fail_usage("--init frames requires --seed-frames")
        return _run_generation(cfg, read_sequence(cfg["seed_frames"]).frames)
    return _run_generation(cfg)


def cmd_extrapolate(cfg: dict) -> int:
    return _run_generation(cfg, read_sequence(cfg["seed_frames"]).frames)


def cmd_info(cfg: dict) -> int:
    path = Path(cfg["path"])
    head = path.read_bytes()[:4] if path.is_file() else b""
    if head == b"DTXW" and Path(sidecar_path(path)).exists():
        stats = load_statistics(path)
        print(f"{path}: texture statistics (format version 1)")
        print(f"delta_t: {stats.delta_t}")
        src = stats.source_meta
        if src:
            print(f"source: {src.get('frames')} frames, dims {src.get('frame_dims')}")
        for name in stats.layer_names:
            g = stats.grams[name]
            print(f"layer {name}: weight {stats.weight_of(name)}  "
                  f"gram {g.values.shape[0]}x{g.values.shape[1]} (N={g.channels})")
        return 0
    if head == b"DTXW":
        tensors = read_container(path)
        print(f"{path}: weight container (format version 1), {len(tensors)} tensors")
        for name, arr in tensors.items():
            print(f"{name}: shape {tuple(arr.shape)}")
        return 0
    if head[:1] == b"{":
        descriptor = load_descriptor(path)
        print(f"{path}: network descriptor, {len(descriptor.layers)} layers")
        for spec in descriptor.layers:
            print(f"{spec.name}: {spec.kind}")
        return 0
    raise ConsistencyError(f"{path}: not a recognized artifact (magic {head!r})")


_COMMANDS = {
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "extrapolate": cmd_extrapolate,
    "info": cmd_info,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "info":
            resolved = {"path": args.path}
            if resolved["path"] is None:
                _fail_usage("info: missing artifact path")
        else:
            resolved = _resolve(args)
        _echo_config(args.command, resolved)
        return _COMMANDS[args.command](resolved)
    except DyntexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
