import math
from dataclasses import dataclass, field

from tapmicro._models import TrainConfig

from ._base import BaseSchedulePolicy


class SchedulePolicy_WarmupCosine(BaseSchedulePolicy):  # noqa: N801
    """Linear warmup from 0 to the peak, then cosine decay to `min_lr` at the last step."""

    @dataclass
    class Config:
        peak_lr: float = field(default=1e-3)
        warmup_steps: int = field(default=250)
        total_steps: int = field(default=5000)
        min_lr: float = field(default=0.0)

        @staticmethod
        def from_train_config(config: TrainConfig) -> "SchedulePolicy_WarmupCosine.Config":
            return SchedulePolicy_WarmupCosine.Config(
                peak_lr=config.peak_lr,
                warmup_steps=config.warmup_steps,
                total_steps=config.steps,
                min_lr=config.min_lr,
            )

    config: Config = field()

    def __call__(self, step: int) -> float:
        cfg = self.config
        if step < cfg.warmup_steps:
            return cfg.peak_lr * step / cfg.warmup_steps
        decay_steps = max(cfg.total_steps - cfg.warmup_steps, 1)
        progress = min((step - cfg.warmup_steps) / decay_steps, 1.0)
        return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))


def lr_schedule(step: int, config: TrainConfig) -> float:
    return SchedulePolicy_WarmupCosine(SchedulePolicy_WarmupCosine.Config.from_train_config(config))(step)
