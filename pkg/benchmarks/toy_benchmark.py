"""Benchmarking script for toy-scale tracker runs and their ablations."""

import argparse
import json
import os
from typing import Any, Dict, List, Tuple

import numpy as np
from dotenv import load_dotenv
from tqdm import tqdm

from tapmicro import EvalConfig, SceneSpec, SyntheticClipSource, TapMicro, get_preset
from tapmicro._model import TrackerModel
from tapmicro._services import evaluate_clips
from tapmicro._services._evaluation import copy_query_baseline
from tapmicro._services._query_sampling import frame_zero_queries
from tapmicro._types import GroundTruth, VideoClip
from tapmicro._utils import derive_seed, set_seed

HELD_OUT_SALT = 104729


def held_out_clips(
    seed: int, num_clips: int, num_frames: int, size: Tuple[int, int]
) -> List[Tuple[VideoClip, GroundTruth]]:
    """Clips drawn from a seed stream disjoint from the training one."""
    scene = SceneSpec(seed=derive_seed(seed, HELD_OUT_SALT), num_frames=num_frames, height=size[0], width=size[1])
    source = SyntheticClipSource(scene=scene, num_clips=num_clips)
    return [source.get(i) for i in tqdm(range(num_clips), desc="Rendering held-out clips")]


def query_frame_error(model: TrackerModel, clips: List[Tuple[VideoClip, GroundTruth]]) -> float:
    """Mean pixel distance between predictions and ground truth at frame 0 for queries placed there."""
    errors: List[np.ndarray] = []
    for clip, gt in clips:
        batch = frame_zero_queries(gt)
        if batch.num_queries == 0:
            continue
        prediction = model.track_offline(clip.to_tensor(model.dtype), batch.queries)
        predicted = prediction.coords[0].detach().cpu().numpy()
        errors.append(np.linalg.norm(predicted - batch.target_coords[0], axis=-1))
    return float(np.concatenate(errors).mean()) if errors else float("nan")


if __name__ == "__main__":
    load_dotenv()

    parser = argparse.ArgumentParser(description="tapmicro toy benchmark")
    parser.add_argument("-p", "--preset", default="toy", help="Preset to train and evaluate.")
    parser.add_argument("-n", "--clips", type=int, default=64, help="Number of held-out clips.")
    parser.add_argument("-f", "--frames", type=int, default=16, help="Frames per held-out clip.")
    parser.add_argument("--steps", type=int, default=None, help="Override the preset's schedule length.")
    parser.add_argument(
        "--baseline", choices=["model", "untrained", "copy-query"], default="model", help="What to evaluate."
    )
    parser.add_argument("-c", "--create", action="store_true", help="Train the preset.")
    parser.add_argument("-b", "--benchmark", action="store_true", help="Evaluate on held-out clips.")
    parser.add_argument("-s", "--score", action="store_true", help="Report scores after benchmarking.")
    args = parser.parse_args()

    overrides: Dict[str, Any] = {"steps": args.steps} if args.steps is not None else {}
    model_config, train_config = get_preset(args.preset, **overrides)
    working_dir = f"./runs/{args.preset}"
    results_path = f"./results/{args.preset}_{args.baseline}_{args.frames}.json"

    if args.create:
        height, width = model_config.image_size
        scene = SceneSpec(seed=train_config.seed, height=height, width=width)
        print(f"Training '{args.preset}' for {train_config.steps} steps on {train_config.num_clips} clips...")
        tracker = TapMicro(
            working_dir=os.path.join(working_dir, "checkpoints"),
            config=TapMicro.Config(model_config=model_config, seed=train_config.seed),
        )
        tracker.train(
            SyntheticClipSource(scene=scene, num_clips=train_config.num_clips),
            train_config,
            metrics_path=os.path.join(working_dir, "metrics.jsonl"),
        )

    if args.benchmark:
        clips = held_out_clips(train_config.seed, args.clips, args.frames, model_config.image_size)
        eval_config = EvalConfig(query_mode="t0")
        result: Dict[str, Any] = {"preset": args.preset, "baseline": args.baseline, "frames": args.frames}
        if args.baseline == "copy-query":
            report = evaluate_clips(None, clips, eval_config, predictor=copy_query_baseline)
        else:
            if args.baseline == "untrained":
                set_seed(train_config.seed)
                model = TrackerModel(model_config).eval()
            else:
                model = TapMicro(
                    working_dir=os.path.join(working_dir, "checkpoints"),
                    config=TapMicro.Config(model_config=model_config),
                ).model.eval()
            report = evaluate_clips(model, clips, eval_config, show_progress=True)
            result["query_frame_error"] = query_frame_error(model, clips)
        result.update(json.loads(report.model_dump_json(by_alias=True, exclude={"per_video"})))

        os.makedirs("./results", exist_ok=True)
        with open(results_path, "w") as f:
            json.dump(result, f, indent=4)

    if args.benchmark or args.score:
        with open(results_path, "r") as f:
            result = json.load(f)
        print(f"AJ: {result['AJ']:.4f}  delta_avg: {result['delta_avg']:.4f}  OA: {result['OA']:.4f}")
        if "query_frame_error" in result:
            print(f"Mean error at the query frame: {result['query_frame_error']:.3f} px")
