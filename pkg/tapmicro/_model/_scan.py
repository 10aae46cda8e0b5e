"""Linear recurrences h_t = a_t * h_{t-1} + b_t over the time axis (dim -2)."""

from typing import Optional

import torch


def combine(a_prev: torch.Tensor, b_prev: torch.Tensor, a_next: torch.Tensor, b_next: torch.Tensor):
    """Associative operator: apply (a_prev, b_prev) first, then (a_next, b_next)."""
    return a_next * a_prev, a_next * b_prev + b_next


def associative_scan(a: torch.Tensor, b: torch.Tensor, h0: Optional[torch.Tensor] = None) -> torch.Tensor:
    """All prefix states of the recurrence in ceil(log2 T) doubling rounds.

    Args:
        a: decays [..., T, D].
        b: inputs [..., T, D].
        h0: state before the first step [..., D]; zeros when omitted.

    Returns:
        states h_1..h_T as [..., T, D].
    """
    if a.shape != b.shape:
        raise ValueError(f"decay and input shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    if h0 is not None:
        b = torch.cat([a[..., :1, :] * h0.unsqueeze(-2) + b[..., :1, :], b[..., 1:, :]], dim=-2)

    num_steps = a.shape[-2]
    offset = 1
    while offset < num_steps:
        a_new, b_new = combine(a[..., :-offset, :], b[..., :-offset, :], a[..., offset:, :], b[..., offset:, :])
        a = torch.cat([a[..., :offset, :], a_new], dim=-2)
        b = torch.cat([b[..., :offset, :], b_new], dim=-2)
        offset *= 2
    return b


def sequential_scan(a: torch.Tensor, b: torch.Tensor, h0: Optional[torch.Tensor] = None) -> torch.Tensor:
    h = torch.zeros_like(b[..., 0, :]) if h0 is None else h0
    states = []
    for t in range(a.shape[-2]):
        h = a[..., t, :] * h + b[..., t, :]
        states.append(h)
    if not states:
        return b.clone()
    return torch.stack(states, dim=-2)
