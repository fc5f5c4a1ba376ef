"""Masked binary and weighted categorical cross-entropy."""

from __future__ import annotations

import torch

BCE_EPS = 1e-7


def _mask_for(x: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is None:
        return torch.ones_like(x, dtype=torch.bool)
    if mask.shape != x.shape:
        raise ValueError(f"mask shape {tuple(mask.shape)} != {tuple(x.shape)}")
    return mask.bool()


def bce_loss(probs: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean of ``-[y log p + (1-y) log(1-p)]`` over unmasked positions, p clamped to [eps, 1-eps]."""
    if probs.shape != targets.shape:
        raise ValueError(f"probability shape {tuple(probs.shape)} != target shape {tuple(targets.shape)}")
    m = _mask_for(probs, mask)
    if not m.any():
        raise ValueError("every position is masked")
    y = targets.to(probs.dtype)
    if not torch.all((y[m] == 0) | (y[m] == 1)):
        raise ValueError("BCE targets must be 0 or 1")
    p = probs.clamp(BCE_EPS, 1 - BCE_EPS)
    per = -(y * torch.log(p) + (1 - y) * torch.log1p(-p))
    return per[m].mean()


def wce_loss(logits: torch.Tensor, targets: torch.Tensor, weights, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Class-weighted cross-entropy normalized by the sum of applied weights."""
    n_classes = logits.shape[-1]
    weights = torch.as_tensor(weights, dtype=logits.dtype)
    if weights.shape != (n_classes,):
        raise ValueError(f"need {n_classes} class weights, got {tuple(weights.shape)}")
    if logits.shape[:-1] != targets.shape:
        raise ValueError("logits and targets disagree in shape")
    m = _mask_for(targets, mask)
    if not m.any():
        raise ValueError("every position is masked")
    t = targets.long()[m]
    if t.min() < 0 or t.max() >= n_classes:
        raise ValueError("category target out of range")
    logp = torch.log_softmax(logits[m], dim=-1).gather(-1, t[:, None])[:, 0]
    w = weights[t]
    return -(w * logp).sum() / w.sum()
