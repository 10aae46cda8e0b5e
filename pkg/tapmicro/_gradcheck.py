"""Finite-difference verification of analytic gradients."""

from typing import Callable, Sequence

import torch

from tapmicro._exceptions import UnsupportedModeError
from tapmicro._utils import logger


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    eps: float = 1e-6,
    num_samples: int = 200,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between autograd and central differences over a random subsample of parameter entries.

    `loss_fn` re-evaluates the scalar loss from the current parameter values; every parameter must be float64.
    Differences are scaled by at least `floor`, so entries with near-zero gradients are judged in absolute terms.
    """
    params = [p for p in params if p.requires_grad]
    for p in params:
        if p.dtype != torch.float64:
            raise UnsupportedModeError(f"Gradient checks need float64 parameters, got {p.dtype}")
    if not params:
        return 0.0

    for p in params:
        p.grad = None
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, params, allow_unused=True)
    analytic = [torch.zeros_like(p) if g is None else g.detach() for p, g in zip(params, analytic)]

    sizes = torch.tensor([p.numel() for p in params])
    total = int(sizes.sum())
    generator = torch.Generator().manual_seed(seed)
    picks = torch.randperm(total, generator=generator)[: min(num_samples, total)]
    offsets = torch.cumsum(sizes, dim=0)

    worst = 0.0
    with torch.no_grad():
        for flat in picks.tolist():
            which = int(torch.searchsorted(offsets, torch.tensor(flat), right=True))
            local = flat - (int(offsets[which - 1]) if which > 0 else 0)
            view = params[which].view(-1)
            original = float(view[local])
            view[local] = original + eps
            plus = float(loss_fn())
            view[local] = original - eps
            minus = float(loss_fn())
            view[local] = original
            numeric = (plus - minus) / (2 * eps)
            error = relative_error(float(analytic[which].view(-1)[local]), numeric, floor)
            worst = max(worst, error)
    logger.debug(f"Gradient check over {len(picks)} entries: max relative error {worst:.3e}.")
    return worst
