"""Command-line interface: data generation, training, tracking, evaluation, latency, attention probes and overlays."""

import argparse
import json
import logging
import os
import sys
import time
from collections import deque
from importlib import metadata
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from dotenv import load_dotenv

from tapmicro._exceptions import (
    DimensionMismatchError,
    GenerationError,
    InvalidConfigError,
    InvalidQueryError,
    InvalidStorageError,
    InvalidStorageUsageError,
    InvalidVideoError,
    MetricError,
    NumericError,
    UnsupportedModeError,
)
from tapmicro._model import TrackerModel
from tapmicro._models import EvalConfig, ModelConfig, RunManifest, SceneSpec, TrainConfig, validate_config
from tapmicro._presets import PRESETS, get_preset
from tapmicro._render import render_frames, write_overlays
from tapmicro._services._checkpoint_manager import DefaultCheckpointManagerService, load_tracker
from tapmicro._services._data_feed import BatchFeed, DirectoryClipSource, SyntheticClipSource
from tapmicro._services._evaluation import (
    attention_probe,
    copy_query_baseline,
    evaluate_clips,
    save_attention_probe,
    track_streaming,
    track_strided,
)
from tapmicro._services._synthetic_data import generate_clip
from tapmicro._services._training import TrainingService
from tapmicro._storage._clip_files import read_clip, read_queries, read_tracks, tracks_frame, write_clip, write_tracks
from tapmicro._storage._namespace import Workspace
from tapmicro._types import QueryPoint, TrackPrediction, VideoClip
from tapmicro._utils import configure_threads, derive_seed, hash_config, logger, set_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

VALIDATION_SALT = 7919

EXIT_CODES: List[Tuple[Tuple[type, ...], int]] = [
    (
        (
            InvalidConfigError,
            UnsupportedModeError,
            InvalidQueryError,
            InvalidVideoError,
            DimensionMismatchError,
            GenerationError,
            MetricError,
        ),
        EXIT_CONFIG,
    ),
    ((InvalidStorageError, InvalidStorageUsageError, OSError), EXIT_IO),
    ((NumericError,), EXIT_NUMERIC),
]


def tool_version() -> str:
    try:
        return metadata.version("tapmicro")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def _manifest_path(out: str) -> str:
    if os.path.isdir(out) or not os.path.splitext(out)[1]:
        return os.path.join(out, "run_manifest.json")
    return os.path.splitext(out)[0] + ".manifest.json"


def write_manifest(
    out: str,
    command: str,
    config: Dict[str, Any],
    artifacts: Dict[str, str],
    started: float,
    seed: Optional[int] = None,
) -> str:
    manifest = RunManifest(
        command=command,
        config_hash=hash_config(config),
        seed=seed,
        config=config,
        artifacts=artifacts,
        wall_clock_seconds=time.perf_counter() - started,
        tool_version=tool_version(),
    )
    path = _manifest_path(out)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(manifest.model_dump_json(indent=2))
    logger.debug(f"Wrote run manifest '{path}'.")
    return path


def _load_json(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidConfigError(f"Config '{path}' is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise InvalidConfigError(f"Config '{path}' must hold a JSON object.")
    return data


def _parse_size(value: str) -> Tuple[int, int]:
    """`32` or `24x32` (H x W)."""
    parts = value.lower().split("x")
    try:
        sizes = [int(p) for p in parts]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Invalid size '{value}'") from e
    if len(sizes) == 1:
        return sizes[0], sizes[0]
    if len(sizes) == 2:
        return sizes[0], sizes[1]
    raise argparse.ArgumentTypeError(f"Invalid size '{value}'")


def _parse_ints(value: str) -> List[int]:
    return [int(v) for v in value.split(",") if v.strip()] if value else []


def _check_clip(model: TrackerModel, clip: VideoClip) -> None:
    if (clip.height, clip.width) != tuple(model.config.image_size):
        raise DimensionMismatchError(
            f"Clip of {clip.height}x{clip.width} does not match the model's {model.config.image_size}"
        )


####################################################################################################
# Commands
####################################################################################################


def cmd_generate_data(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    height, width = args.size
    scene_overrides = _load_json(args.config)
    base = validate_config(
        SceneSpec, {**scene_overrides, "seed": args.seed, "num_frames": args.frames, "height": height, "width": width}
    )
    os.makedirs(args.out, exist_ok=True)
    artifacts: Dict[str, str] = {}
    for i in range(args.clips):
        spec = base.model_copy(update={"seed": derive_seed(args.seed, i)})
        clip, gt = generate_clip(spec)
        paths = write_clip(args.out, f"clip_{i:05d}", clip, gt, seed=spec.seed)
        artifacts.update({f"clip_{i:05d}_{kind}": path for kind, path in paths.items()})
    logger.info(f"Generated {args.clips} clips in '{args.out}'.")
    write_manifest(args.out, "generate-data", base.model_dump(mode="json"), artifacts, started, args.seed)
    return EXIT_OK


def _train_configs(args: argparse.Namespace) -> Tuple[ModelConfig, TrainConfig, SceneSpec]:
    raw = _load_json(args.config)
    preset = raw.get("preset", args.preset)
    if preset not in PRESETS:
        raise InvalidConfigError(f"Unknown preset '{preset}'. Available: {', '.join(sorted(PRESETS))}")
    model_config = validate_config(ModelConfig, {**PRESETS[preset]["model"], **raw.get("model", {})})
    train_raw: Dict[str, Any] = {**PRESETS[preset]["train"], **raw.get("train", {}), "preset": preset}
    if args.seed is not None:
        train_raw["seed"] = args.seed
    if args.steps is not None:
        train_raw["steps"] = args.steps
    train_config = validate_config(TrainConfig, train_raw)
    height, width = model_config.image_size
    scene = validate_config(
        SceneSpec, {**raw.get("scene", {}), "seed": train_config.seed, "height": height, "width": width}
    )
    return model_config, train_config, scene


def cmd_train(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    model_config, train_config, scene = _train_configs(args)
    if args.data:
        source: Any = DirectoryClipSource(args.data)
    else:
        source = SyntheticClipSource(scene=scene, num_clips=train_config.num_clips)
    validation_source = SyntheticClipSource(
        scene=scene.model_copy(update={"seed": derive_seed(train_config.seed, VALIDATION_SALT)}),
        num_clips=train_config.validation_clips,
    )
    validation = [validation_source.get(i) for i in range(len(validation_source))]

    set_seed(train_config.seed)
    model = TrackerModel(model_config)
    os.makedirs(args.out, exist_ok=True)
    manager = DefaultCheckpointManagerService(
        workspace=Workspace.new(os.path.join(args.out, "checkpoints"), keep_n=train_config.keep_checkpoints)
    )
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    service = TrainingService(
        model=model,
        config=train_config,
        checkpoint_manager=manager,
        metrics_path=metrics_path,
        validation_clips=validation,
        show_progress=not args.no_progress,
    )
    service.resume()
    logger.info(f"Training '{train_config.preset}' ({model.num_parameters()} parameters) from step {service.step}.")
    last = service.train(BatchFeed(source=source, config=train_config), args.until)

    config = {
        "model": model_config.model_dump(mode="json"),
        "train": train_config.model_dump(mode="json"),
        "scene": scene.model_dump(mode="json"),
    }
    artifacts = {"metrics": metrics_path, "checkpoints": os.path.join(args.out, "checkpoints")}
    if manager.workspace is not None and manager.workspace.checkpoints:
        artifacts["checkpoint"] = os.path.join(manager.workspace.working_dir, str(manager.workspace.checkpoints[0]))
    write_manifest(args.out, "train", config, artifacts, started, train_config.seed)
    logger.info(f"Training stopped at step {service.step} with loss {last.get('total', float('nan')):.4f}.")
    return EXIT_OK


def _load_queries(path: str) -> Tuple[List[Any], List[QueryPoint]]:
    query_ids, queries = read_queries(path)
    return query_ids, queries


def _track(model: TrackerModel, clip: VideoClip, queries: List[QueryPoint], mode: str) -> TrackPrediction:
    clip.validate_queries(queries)
    video = clip.to_tensor(model.dtype)
    if mode == "offline":
        return model.track_offline(video, queries)
    if mode == "stream":
        late = [q for q in queries if q.t > 0]
        if late:
            raise UnsupportedModeError(f"{len(late)} queries start after frame 0; use --mode strided for them.")
        return track_streaming(model, video, queries)
    return track_strided(model, video, queries)


def cmd_track(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    model = load_tracker(args.checkpoint)
    clip, _ = read_clip(args.video)
    _check_clip(model, clip)
    query_ids, queries = _load_queries(args.queries)
    prediction = _track(model, clip, queries, args.mode)
    write_tracks(args.out, tracks_frame(prediction, query_ids))
    logger.info(f"Tracked {len(queries)} queries over {clip.num_frames} frames ({args.mode}) into '{args.out}'.")
    config = {"mode": args.mode, "model": model.config.model_dump(mode="json")}
    artifacts = {"tracks": args.out, "checkpoint": args.checkpoint, "video": args.video, "queries": args.queries}
    write_manifest(args.out, "track", config, artifacts, started)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    eval_config = validate_config(
        EvalConfig,
        {
            **_load_json(args.config),
            "query_mode": args.mode,
            "use_support_points": args.support_points,
            "one_point_at_a_time": args.one_point_at_a_time,
        },
    )
    source = DirectoryClipSource(args.data)
    clips = [source.get(i) for i in range(len(source))]
    if args.baseline == "copy-query":
        report = evaluate_clips(None, clips, eval_config, predictor=copy_query_baseline)
        model_config: Dict[str, Any] = {}
    else:
        if args.checkpoint is None:
            raise InvalidConfigError("--checkpoint is required unless --baseline copy-query is used.")
        model = load_tracker(args.checkpoint)
        for clip, _ in clips:
            _check_clip(model, clip)
        report = evaluate_clips(model, clips, eval_config, show_progress=not args.no_progress)
        model_config = model.config.model_dump(mode="json")

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w") as f:
        f.write(report.model_dump_json(indent=2, by_alias=True))
    logger.info(
        f"AJ {report.average_jaccard:.4f}, delta_avg {report.delta_avg:.4f}, OA {report.occlusion_accuracy:.4f}."
    )
    config = {"eval": eval_config.model_dump(mode="json"), "model": model_config, "baseline": args.baseline}
    write_manifest(args.out, "eval", config, {"metrics": args.out, "data": args.data}, started)
    return EXIT_OK


def _bench_model(args: argparse.Namespace) -> TrackerModel:
    if args.checkpoint:
        return load_tracker(args.checkpoint)
    model_config, _ = get_preset(args.preset)
    set_seed(args.seed)
    return TrackerModel(model_config).eval()


def latency_report(timings: Sequence[float], warmup: int, window: int = 50, tolerance: float = 0.15) -> Dict[str, Any]:
    """Throughput and worst-case delay of per-frame step times, plus early/late median stationarity."""
    timings = np.asarray(timings, dtype=np.float64)
    num_frames = len(timings)
    measured = timings[warmup:]
    early = measured[:window]
    late = timings[max(warmup, num_frames - window) :]
    early_median = float(np.median(early))
    late_median = float(np.median(late))
    drift = abs(late_median - early_median) / early_median if early_median > 0 else 0.0
    return {
        "frames": num_frames,
        "warmup": warmup,
        "fps": float(len(measured) / measured.sum()) if measured.sum() > 0 else float("inf"),
        "mean_latency_ms": float(measured.mean() * 1e3),
        "worst_latency_ms": float(measured.max() * 1e3),
        "early_median_ms": early_median * 1e3,
        "late_median_ms": late_median * 1e3,
        "median_drift": drift,
        "stationary": bool(drift <= tolerance),
    }


def cmd_bench_latency(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.frames < args.warmup + 10:
        raise InvalidConfigError(f"--frames ({args.frames}) must be at least --warmup + 10 ({args.warmup + 10}).")
    model = _bench_model(args)
    height, width = model.config.image_size
    rng = np.random.default_rng(args.seed)
    queries = [
        QueryPoint(t=0, x=float(x), y=float(y))
        for x, y in zip(rng.uniform(0, width, args.queries), rng.uniform(0, height, args.queries))
    ]
    frames = torch.from_numpy(rng.random((args.frames, height, width, 3), dtype=np.float32)).to(model.dtype)

    state = model.init_streaming(queries)
    state.step_times = deque(maxlen=args.frames)
    for frame in frames:
        state, _ = model.stream_step(state, frame)
    report = latency_report(list(state.step_times), args.warmup)
    report["queries"] = args.queries
    if not report["stationary"]:
        logger.warning(
            f"Per-frame cost drifted by {report['median_drift']:.1%} between the early and late windows."
        )
    logger.info(f"{report['fps']:.1f} FPS, worst-case latency {report['worst_latency_ms']:.2f} ms.")

    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2)
    else:
        print(json.dumps(report, indent=2))
    config = {"frames": args.frames, "queries": args.queries, "warmup": args.warmup, "threads": torch.get_num_threads()}
    write_manifest(args.out or ".", "bench-latency", config, {"report": args.out or ""}, started, args.seed)
    return EXIT_OK


def cmd_probe_attention(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    model = load_tracker(args.checkpoint)
    clip, _ = read_clip(args.video)
    _check_clip(model, clip)
    _, queries = _load_queries(args.queries)
    clip.validate_queries(queries)
    layers = _parse_ints(args.layers) if args.layers is not None else None
    heads = _parse_ints(args.heads) if args.heads is not None else None
    probe = attention_probe(model, clip.to_tensor(model.dtype), queries, layers, heads)
    arrays_path, index_path = save_attention_probe(
        args.out, probe, model.config.grid_size, len(queries), clip.num_frames
    )
    logger.info(f"Saved {len(probe)} attention maps to '{args.out}'.")
    config = {"layers": layers, "heads": heads, "model": model.config.model_dump(mode="json")}
    write_manifest(args.out, "probe-attention", config, {"arrays": arrays_path, "index": index_path}, started)
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    clip, _ = read_clip(args.video)
    tracks = read_tracks(args.tracks)
    images = render_frames(clip, tracks, scale=args.scale, tail=args.tail)
    paths = write_overlays(args.out, images)
    logger.info(f"Rendered {len(paths)} frames into '{args.out}'.")
    config = {"scale": args.scale, "tail": args.tail}
    write_manifest(args.out, "render", config, {"frames": args.out, "tracks": args.tracks}, started)
    return EXIT_OK


####################################################################################################
# Parser
####################################################################################################


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tapmicro", description="Causal point tracking on synthetic video.")
    parser.add_argument("--log-level", default="INFO", help="Logging level.")
    parser.add_argument("--threads", type=int, default=None, help="Intra-op threads (overrides TAPMICRO_THREADS).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="Render a synthetic dataset.")
    p.add_argument("--out", required=True, help="Dataset directory.")
    p.add_argument("--clips", type=int, default=16, help="Number of clips.")
    p.add_argument("--frames", type=int, default=16, help="Frames per clip.")
    p.add_argument("--size", type=_parse_size, default=(32, 32), help="Frame size, `S` or `HxW`.")
    p.add_argument("--seed", type=int, default=0, help="Dataset seed.")
    p.add_argument("--config", default=None, help="JSON file with scene overrides.")
    p.set_defaults(handler=cmd_generate_data)

    p = sub.add_parser("train", help="Train (or resume training) a tracker.")
    p.add_argument("--config", default=None, help="JSON file with preset, model, train and scene sections.")
    p.add_argument("--preset", default="toy", help="Preset used when the config names none.")
    p.add_argument("--data", default=None, help="Dataset directory; clips are generated on the fly if omitted.")
    p.add_argument("--out", required=True, help="Run directory (checkpoints, metrics log, manifest).")
    p.add_argument("--steps", type=int, default=None, help="Override the schedule length.")
    p.add_argument("--until", type=int, default=None, help="Stop at this step (the schedule is unchanged).")
    p.add_argument("--seed", type=int, default=None, help="Override the training seed.")
    p.add_argument("--no-progress", action="store_true", help="Disable progress bars.")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("track", help="Track query points through a clip.")
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory (workspace or step directory).")
    p.add_argument("--video", required=True, help="Clip `.rgb` file.")
    p.add_argument("--queries", required=True, help="Queries CSV (query_id, t, x, y).")
    p.add_argument("--mode", choices=["offline", "stream", "strided"], default="offline")
    p.add_argument("--out", required=True, help="Tracks CSV.")
    p.set_defaults(handler=cmd_track)

    p = sub.add_parser("eval", help="Compute AJ, delta_avg and OA on a dataset.")
    p.add_argument("--checkpoint", default=None, help="Checkpoint directory.")
    p.add_argument("--data", required=True, help="Dataset directory.")
    p.add_argument("--mode", choices=["first", "t0", "strided"], default="first", help="Query protocol.")
    p.add_argument("--config", default=None, help="JSON file with evaluation overrides.")
    p.add_argument("--support-points", action="store_true", help="Track each query with its support grid.")
    p.add_argument("--one-point-at-a-time", action="store_true", help="Track each query on its own.")
    p.add_argument("--baseline", choices=["model", "copy-query"], default="model")
    p.add_argument("--out", required=True, help="Metrics JSON.")
    p.add_argument("--no-progress", action="store_true", help="Disable progress bars.")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench-latency", help="Per-frame streaming latency and throughput.")
    p.add_argument("--checkpoint", default=None, help="Checkpoint directory; random parameters of --preset otherwise.")
    p.add_argument("--preset", default="toy")
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--queries", type=int, default=64)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="Report JSON; printed when omitted.")
    p.set_defaults(handler=cmd_bench_latency)

    p = sub.add_parser("probe-attention", help="Dump spatial attention quadrants.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--layers", default=None, help="Comma-separated layer indices; capture layers if omitted.")
    p.add_argument("--heads", default=None, help="Comma-separated head indices; all heads if omitted.")
    p.add_argument("--out", required=True, help="Output directory.")
    p.set_defaults(handler=cmd_probe_attention)

    p = sub.add_parser("render", help="Draw tracks onto clip frames as PNG files.")
    p.add_argument("--video", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True, help="Output directory.")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--tail", type=int, default=4)
    p.set_defaults(handler=cmd_render)
    return parser


def exit_code_for(error: BaseException) -> Optional[int]:
    for kinds, code in EXIT_CODES:
        if isinstance(error, kinds):
            return code
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(name)s %(levelname)s %(message)s")
    configure_threads(args.threads)

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except Exception as e:
        code = exit_code_for(e)
        if code is None:
            raise
        logger.error(f"{args.command} failed: {getattr(e, 'message', str(e))}")
        if isinstance(e, NumericError) and e.diagnostics:
            logger.error(f"Diagnostics: {e.diagnostics}")
        return code


if __name__ == "__main__":
    sys.exit(main())
