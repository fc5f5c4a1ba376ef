"""Named parameter sets, freezing and gradient extraction."""

from __future__ import annotations

from typing import Iterable

import torch
from torch import nn


class GraphConsumedError(RuntimeError):
    pass


def param_set(module: nn.Module) -> dict[str, nn.Parameter]:
    """Stable name -> parameter mapping."""
    return dict(module.named_parameters())


def trainable_names(module: nn.Module) -> list[str]:
    return [n for n, p in module.named_parameters() if p.requires_grad]


def set_trainable(module: nn.Module, trainable: bool) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(trainable)
    return module


def backward(loss: torch.Tensor, module: nn.Module, retain_graph: bool = False) -> dict[str, torch.Tensor]:
    """Gradients of a scalar loss for every trainable parameter of ``module``.

    Frozen parameters are absent from the result; trainable parameters the
    loss does not depend on get zeros.
    """
    if loss.dim() != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    named = [(n, p) for n, p in module.named_parameters() if p.requires_grad]
    if not named:
        return {}
    try:
        grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True, retain_graph=retain_graph)
    except RuntimeError as exc:
        if "second time" in str(exc) or "freed" in str(exc):
            raise GraphConsumedError("computation graph already consumed by a previous backward") from exc
        raise
    return {n: (g if g is not None else torch.zeros_like(p)) for (n, p), g in zip(named, grads)}


def count_parameters(module: nn.Module, names: Iterable[str] | None = None) -> int:
    params = param_set(module)
    return sum(params[n].numel() for n in (names if names is not None else params))
