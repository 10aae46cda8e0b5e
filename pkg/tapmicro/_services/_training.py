import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import torch
from tqdm import tqdm

from tapmicro._exceptions import MetricError, NumericError
from tapmicro._losses import total_loss
from tapmicro._model import TrackerModel
from tapmicro._models import EvalConfig, TrainConfig
from tapmicro._policies._schedule import SchedulePolicy_WarmupCosine
from tapmicro._types import GroundTruth, VideoClip
from tapmicro._utils import logger

from ._base import BaseCheckpointManagerService, Checkpoint
from ._data_feed import BatchFeed, TrainingBatch
from ._evaluation import evaluate_clips


def make_optimizer(params: Iterable[torch.nn.Parameter], config: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        params, lr=config.peak_lr, betas=config.betas, eps=config.eps, weight_decay=config.weight_decay
    )


def clip_and_step(
    optimizer: torch.optim.Optimizer, params: List[torch.nn.Parameter], lr: float, max_norm: float
) -> float:
    """Clip the global gradient norm to `max_norm`, apply one update at `lr` and return the pre-clip norm."""
    for group in optimizer.param_groups:
        group["lr"] = lr
    grad_norm = float(torch.nn.utils.clip_grad_norm_(params, max_norm=max_norm))
    if not math.isfinite(grad_norm):
        raise NumericError(f"Non-finite gradient norm {grad_norm}", {"grad_norm": grad_norm, "lr": lr})
    optimizer.step()
    return grad_norm


@dataclass
class TrainingService:
    """Owns the optimization loop: schedule, clipping, checkpointing and the JSON-lines metrics log."""

    model: TrackerModel = field()
    config: TrainConfig = field()
    checkpoint_manager: Optional[BaseCheckpointManagerService] = field(default=None)
    metrics_path: Optional[str] = field(default=None)
    validation_clips: Sequence[Tuple[VideoClip, GroundTruth]] = field(default=())
    show_progress: bool = field(default=False)
    step: int = field(init=False, default=0)
    history: List[Dict[str, float]] = field(init=False, default_factory=list)

    def __post_init__(self):
        self.params = [p for p in self.model.parameters() if p.requires_grad]
        self.optimizer = make_optimizer(self.params, self.config)
        self.schedule = SchedulePolicy_WarmupCosine(SchedulePolicy_WarmupCosine.Config.from_train_config(self.config))

    def train_step(self, batch: TrainingBatch) -> Dict[str, float]:
        """One AdamW update at the scheduled learning rate; returns the loss breakdown."""
        self.model.train()
        lr = self.schedule(self.step)
        batch = batch.to(self.model.dtype)
        output = self.model(batch.video, batch.queries, ())
        loss, breakdown = total_loss(
            self.model.heads, output.per_layer_point_tokens, batch.targets, self.config.loss, self.model.config.num_bins
        )
        if not torch.isfinite(loss):
            diagnostics: Dict[str, Any] = {"step": self.step, "lr": lr, **breakdown}
            logger.error(f"Non-finite loss at step {self.step}: {diagnostics}")
            raise NumericError(f"Non-finite loss at step {self.step}", diagnostics)

        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        grad_norm = clip_and_step(self.optimizer, self.params, lr, self.config.grad_clip_norm)
        self.step += 1
        return {"lr": lr, "grad_norm": grad_norm, **breakdown}

    def validate(self) -> Optional[float]:
        if not self.validation_clips:
            return None
        self.model.eval()
        try:
            report = evaluate_clips(self.model, self.validation_clips, EvalConfig(query_mode="t0"))
        except MetricError as e:
            logger.warning(f"Validation skipped at step {self.step}: {e}")
            return None
        return report.delta_avg

    def trainer_state(self) -> Dict[str, Any]:
        return {"optimizer": self.optimizer.state_dict(), "step": self.step}

    def save(self, metrics: Optional[Dict[str, float]] = None) -> Optional[str]:
        if self.checkpoint_manager is None:
            return None
        return self.checkpoint_manager.save(
            self.step, self.model, self.model.config, self.config, metrics, self.trainer_state()
        )

    def restore(self, checkpoint: Checkpoint) -> None:
        self.model.load_state_dict(checkpoint.parameters)
        if checkpoint.trainer_state is not None:
            self.optimizer.load_state_dict(checkpoint.trainer_state["optimizer"])
        self.step = checkpoint.step
        logger.info(f"Resuming training from step {self.step}.")

    def resume(self) -> bool:
        """Restore the newest checkpoint of the manager's workspace; False when there is none."""
        if self.checkpoint_manager is None or self.checkpoint_manager.workspace is None:
            return False
        if self.checkpoint_manager.workspace.current_load_checkpoint is None:
            return False
        self.restore(self.checkpoint_manager.load(with_trainer_state=True))
        return True

    def _log(self, record: Dict[str, Any]) -> None:
        self.history.append(record)
        if self.metrics_path is None:
            return
        os.makedirs(os.path.dirname(os.path.abspath(self.metrics_path)), exist_ok=True)
        with open(self.metrics_path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    def train(self, feed: BatchFeed, end_step: Optional[int] = None) -> Dict[str, float]:
        """Run until `end_step` (default: the configured number of steps) and return the last loss breakdown."""
        end_step = self.config.steps if end_step is None else min(end_step, self.config.steps)
        last: Dict[str, float] = {}
        progress = tqdm(total=end_step - self.step, desc="Training", disable=not self.show_progress)
        for step, batch in feed.iterate(self.step, end_step):
            assert step == self.step, f"Batch for step {step} delivered at step {self.step}."
            last = self.train_step(batch)
            progress.update(1)
            progress.set_postfix(loss=f"{last['total']:.4f}", lr=f"{last['lr']:.2e}")

            record: Optional[Dict[str, Any]] = None
            if self.step % self.config.log_every == 0 or self.step == end_step:
                record = {"step": self.step, **last}
            if self.step % self.config.eval_every == 0 or self.step == end_step:
                record = record or {"step": self.step, **last}
                record["delta_avg"] = self.validate()
            if record is not None:
                self._log(record)
                logger.info(f"Step {self.step}: loss {last['total']:.4f}, lr {last['lr']:.2e}.")
            if self.step % self.config.checkpoint_every == 0 or self.step == end_step:
                metrics = {k: v for k, v in (record or last).items() if isinstance(v, float)}
                self.save(metrics)
        progress.close()
        return last
