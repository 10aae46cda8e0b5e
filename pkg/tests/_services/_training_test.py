import json
import os
import shutil
import tempfile
import unittest

import torch

from tapmicro._exceptions import NumericError
from tapmicro._model import TrackerModel
from tapmicro._models import ModelConfig, SceneSpec, TrainConfig
from tapmicro._services._checkpoint_manager import DefaultCheckpointManagerService
from tapmicro._services._data_feed import BatchFeed, SyntheticClipSource
from tapmicro._services._synthetic_data import generate_clip
from tapmicro._services._training import TrainingService, clip_and_step, make_optimizer
from tapmicro._storage._namespace import Workspace

SCENE = SceneSpec(seed=5, num_frames=4, height=16, width=16, sprite_count=(1, 2), background_points=2)
MODEL = ModelConfig(num_layers=1, width=16, num_heads=2, image_size=(16, 16), num_bins=8, head_hidden=16)


def _train_config(**kwargs) -> TrainConfig:
    defaults = {
        "steps": 4,
        "warmup_steps": 1,
        "batch_size": 2,
        "queries_per_clip": 4,
        "prefetch": 0,
        "log_every": 1,
        "eval_every": 100,
        "checkpoint_every": 100,
    }
    return TrainConfig(**{**defaults, **kwargs})


def _model() -> TrackerModel:
    torch.manual_seed(0)
    return TrackerModel(MODEL)


class TestOptimizerStep(unittest.TestCase):
    def test_clips_gradient_norm(self):
        param = torch.nn.Parameter(torch.zeros(2))
        optimizer = torch.optim.SGD([param], lr=1.0)
        param.grad = torch.tensor([3.0, 4.0])
        norm = clip_and_step(optimizer, [param], lr=0.5, max_norm=1.0)
        self.assertAlmostEqual(norm, 5.0, places=5)
        torch.testing.assert_close(param.detach(), torch.tensor([-0.3, -0.4]))

    def test_non_finite_norm(self):
        param = torch.nn.Parameter(torch.zeros(2))
        optimizer = torch.optim.SGD([param], lr=1.0)
        param.grad = torch.tensor([float("inf"), 0.0])
        with self.assertRaises(NumericError):
            clip_and_step(optimizer, [param], lr=0.1, max_norm=1.0)
        torch.testing.assert_close(param.detach(), torch.zeros(2))

    def test_adamw_first_step(self):
        param = torch.nn.Parameter(torch.tensor([1.0, -2.0]))
        optimizer = make_optimizer([param], _train_config(weight_decay=0.0))
        param.grad = torch.tensor([0.1, -0.2])
        clip_and_step(optimizer, [param], lr=0.01, max_norm=10.0)
        # The first bias-corrected Adam step moves every coordinate by lr against the gradient sign.
        torch.testing.assert_close(param.detach(), torch.tensor([0.99, -1.99]), rtol=0, atol=1e-6)


class TestTrainingService(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.source = SyntheticClipSource(scene=SCENE, num_clips=8)

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def _manager(self) -> DefaultCheckpointManagerService:
        return DefaultCheckpointManagerService(workspace=Workspace.new(os.path.join(self.test_dir, "ckpt")))

    def test_train_step(self):
        config = _train_config()
        service = TrainingService(_model(), config)
        before = {k: v.clone() for k, v in service.model.state_dict().items()}
        result = service.train_step(BatchFeed(self.source, config).make_batch(0))
        self.assertEqual(service.step, 1)
        for key in ("lr", "grad_norm", "total", "coord_huber", "coord_ce", "visibility"):
            self.assertIn(key, result)
        # Warmup starts from zero.
        self.assertEqual(result["lr"], 0.0)
        service.train_step(BatchFeed(self.source, config).make_batch(1))
        changed = any(not torch.equal(before[k], v) for k, v in service.model.state_dict().items())
        self.assertTrue(changed)

    def test_non_finite_loss(self):
        config = _train_config()
        service = TrainingService(_model(), config)
        batch = BatchFeed(self.source, config).make_batch(0)
        batch.video[0, 0, 0, 0, 0] = float("nan")
        with self.assertLogs("tapmicro", level="ERROR"):
            with self.assertRaises(NumericError):
                service.train_step(batch)

    def test_metrics_log_and_checkpoint(self):
        config = _train_config()
        metrics_path = os.path.join(self.test_dir, "metrics.jsonl")
        service = TrainingService(_model(), config, self._manager(), metrics_path=metrics_path)
        service.train(BatchFeed(self.source, config))
        with open(metrics_path) as f:
            records = [json.loads(line) for line in f]
        self.assertEqual([r["step"] for r in records], [1, 2, 3, 4])
        self.assertIn("total", records[-1])
        self.assertEqual(len(service.history), 4)
        self.assertTrue(os.path.exists(os.path.join(self.test_dir, "ckpt", "4", "trainer_blob_data.pkl")))

    def test_validation_metric(self):
        config = _train_config(steps=2, eval_every=2)
        clips = [generate_clip(SCENE.model_copy(update={"seed": 100}))]
        service = TrainingService(_model(), config, validation_clips=clips)
        service.train(BatchFeed(self.source, config))
        self.assertIsNotNone(service.history[-1]["delta_avg"])
        self.assertTrue(0.0 <= service.history[-1]["delta_avg"] <= 1.0)

    def test_resume_matches_uninterrupted_run(self):
        config = _train_config()
        straight = TrainingService(_model(), config)
        straight.train(BatchFeed(self.source, config))

        first = TrainingService(_model(), config, self._manager())
        first.train(BatchFeed(self.source, config), end_step=2)
        self.assertEqual(first.step, 2)

        resumed = TrainingService(_model(), config, self._manager())
        self.assertTrue(resumed.resume())
        self.assertEqual(resumed.step, 2)
        resumed.train(BatchFeed(self.source, config))
        self.assertEqual(resumed.step, 4)

        for key, value in straight.model.state_dict().items():
            torch.testing.assert_close(resumed.model.state_dict()[key], value, rtol=0, atol=1e-6)

    def test_resume_without_checkpoint(self):
        service = TrainingService(_model(), _train_config(), self._manager())
        self.assertFalse(service.resume())
        self.assertEqual(service.step, 0)


if __name__ == "__main__":
    unittest.main()
