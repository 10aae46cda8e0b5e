import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from tapmicro._exceptions import InvalidConfigError, NumericError, UnsupportedModeError
from tapmicro._models import ModelConfig

from ._init import init_weights
from ._scan import associative_scan


@dataclass
class RecurrentState:
    """Per-tube recurrent state of one layer: h [..., N, D] plus the causal-conv history [..., N, k-1, D]."""

    h: torch.Tensor
    conv: Optional[torch.Tensor] = field(default=None)

    @staticmethod
    def zeros(
        batch_shape: Sequence[int],
        lru_width: int,
        conv_width: int = 0,
        dtype: torch.dtype = torch.float32,
        device: Optional[torch.device] = None,
    ) -> "RecurrentState":
        h = torch.zeros((*batch_shape, lru_width), dtype=dtype, device=device)
        conv = None
        if conv_width > 1:
            conv = torch.zeros((*batch_shape, conv_width - 1, lru_width), dtype=dtype, device=device)
        return RecurrentState(h=h, conv=conv)

    def append_tubes(self, count: int) -> "RecurrentState":
        """Extend the tube axis (-2 of h) with `count` zero states."""
        h = torch.cat([self.h, self.h.new_zeros((*self.h.shape[:-2], count, self.h.shape[-1]))], dim=-2)
        conv = None
        if self.conv is not None:
            pad = self.conv.new_zeros((*self.conv.shape[:-3], count, *self.conv.shape[-2:]))
            conv = torch.cat([self.conv, pad], dim=-3)
        return RecurrentState(h=h, conv=conv)


def clamp_forget_gate(r: torch.Tensor, lo: float, hi: float) -> torch.Tensor:
    if not 0.0 <= lo < hi <= 1.0:
        raise InvalidConfigError(f"Forget gate range must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
    return r.clamp(lo, hi)


def inverse_softplus(value: torch.Tensor) -> torch.Tensor:
    return value + torch.log(-torch.expm1(-value))


class RGLRU(nn.Module):
    """Real-gated linear recurrent unit.

    r = sigmoid(W_r x + b_r), i = sigmoid(W_i x + b_i), a = exp(-c * softplus(lambda) * r),
    h_t = a * h_{t-1} + sqrt(1 - a^2) * (i * x).
    """

    def __init__(
        self,
        lru_width: int,
        decay_constant: float = 8.0,
        forget_gate_clamp: Optional[Tuple[float, float]] = None,
        clamp_target: Literal["gate", "decay"] = "gate",
    ):
        super().__init__()
        self.lru_width = lru_width
        self.decay_constant = decay_constant
        self.forget_gate_clamp = forget_gate_clamp
        self.clamp_target = clamp_target
        self.gate_r = nn.Linear(lru_width, lru_width)
        self.gate_i = nn.Linear(lru_width, lru_width)
        self.decay_param = nn.Parameter(torch.empty(lru_width))
        self.reset_decay()

    @torch.no_grad()
    def reset_decay(self, a_min: float = 0.9, a_max: float = 0.999) -> None:
        # -log(a) at r = 0.5 is log-uniform between -log(a_max) and -log(a_min)
        lo, hi = math.log(-math.log(a_max)), math.log(-math.log(a_min))
        neg_log_a = torch.exp(torch.empty(self.lru_width).uniform_(lo, hi))
        self.decay_param.copy_(inverse_softplus(2.0 * neg_log_a / self.decay_constant))

    def coefficients(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Decay a_t and normalized input sqrt(1 - a_t^2) * i_t * x_t for every position of x."""
        r = torch.sigmoid(self.gate_r(x))
        i = torch.sigmoid(self.gate_i(x))
        if self.forget_gate_clamp is not None and self.clamp_target == "gate":
            r = clamp_forget_gate(r, *self.forget_gate_clamp)
        log_a = -self.decay_constant * F.softplus(self.decay_param) * r

        if self.forget_gate_clamp is not None and self.clamp_target == "decay":
            lo, hi = self.forget_gate_clamp
            a = 1.0 - (1.0 - torch.exp(log_a)).clamp(lo, hi)
            multiplier = torch.sqrt((1.0 - a * a).clamp_min(0.0))
        else:
            a = torch.exp(log_a)
            multiplier = torch.sqrt(-torch.expm1(2.0 * log_a))
        return a, multiplier * (i * x)

    def step(self, h: torch.Tensor, x_t: torch.Tensor) -> torch.Tensor:
        a, b = self.coefficients(x_t)
        return a * h + b

    def scan(self, x: torch.Tensor, h0: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """Run the recurrence over x [..., T, D]; returns (all states, final state)."""
        a, b = self.coefficients(x)
        y = associative_scan(a, b, h0)
        return y, y[..., -1, :]


class CausalConv1d(nn.Module):
    """Depthwise causal convolution over time (dim -2)."""

    def __init__(self, width: int, kernel_size: int = 4):
        super().__init__()
        self.kernel_size = kernel_size
        self.weight = nn.Parameter(torch.randn(kernel_size, width) / math.sqrt(kernel_size))
        self.bias = nn.Parameter(torch.zeros(width))

    def forward(self, x: torch.Tensor, history: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        k = self.kernel_size
        num_steps = x.shape[-2]
        if history is None:
            history = x.new_zeros((*x.shape[:-2], k - 1, x.shape[-1]))
        padded = torch.cat([history, x], dim=-2)
        y = self.bias.expand_as(x)
        for i in range(k):
            y = y + self.weight[i] * padded[..., i : i + num_steps, :]
        return y, padded[..., padded.shape[-2] - (k - 1) :, :]


class RecurrentBlock(nn.Module):
    """Temporal half of a layer: every token tube [T, C] goes through its own gated recurrence."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.lru_width = config.lru_width
        self.conv_width = config.conv_width if config.temporal_conv else 0
        self.norm = nn.LayerNorm(config.width)
        self.proj_in = nn.Linear(config.width, config.lru_width)
        self.conv = CausalConv1d(config.lru_width, config.conv_width) if config.temporal_conv else None
        self.lru = RGLRU(
            config.lru_width,
            decay_constant=config.decay_constant,
            forget_gate_clamp=config.forget_gate_clamp,
            clamp_target=config.forget_gate_clamp_target,
        )
        self.proj_out = nn.Linear(config.lru_width, config.width)
        init_weights(self, config.init_std)

    def initial_state(self, batch_shape: Sequence[int], dtype: torch.dtype, device: Optional[torch.device] = None):
        return RecurrentState.zeros(batch_shape, self.lru_width, self.conv_width, dtype=dtype, device=device)

    def forward(
        self,
        tokens: torch.Tensor,
        state: Optional[RecurrentState] = None,
        mode: Literal["scan", "step"] = "scan",
    ) -> Tuple[torch.Tensor, RecurrentState]:
        """Process tokens [..., T, N, C]; the state, when given, continues each of the N tubes."""
        if mode == "step" and state is None:
            raise UnsupportedModeError("Step mode needs the recurrent state of every tube.")

        x = rearrange(self.proj_in(self.norm(tokens)), "... t n d -> ... n t d")
        conv_history = None
        if self.conv is not None:
            x, conv_history = self.conv(x, None if state is None else state.conv)

        h0 = None if state is None else state.h
        if mode == "scan":
            y, h_last = self.lru.scan(x, h0)
        elif mode == "step":
            h = h0
            outputs = []
            for t in range(x.shape[-2]):
                h = self.lru.step(h, x[..., t, :])
                outputs.append(h)
            if not torch.isfinite(h).all():
                raise NumericError("Recurrent state is no longer finite.", diagnostics={"lru_width": self.lru_width})
            y, h_last = torch.stack(outputs, dim=-2), h
        else:
            raise UnsupportedModeError(f"Unknown recurrent mode '{mode}'.")

        out = self.proj_out(rearrange(y, "... n t d -> ... t n d"))
        return tokens + out, RecurrentState(h=h_last, conv=conv_history)
