"""Central finite-difference gradient oracle."""

import torch

EPS = 1e-5
FLOOR = 1e-6


def max_relative_error(fn, tensors, eps=EPS):
    """Compare autograd gradients of scalar ``fn()`` against central differences.

    ``tensors`` are float64 leaves; each element is perturbed in place.
    Relative error is |a - n| / max(|a|, |n|, FLOOR).
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    analytic = torch.autograd.grad(loss, tensors, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for t, a in zip(tensors, analytic):
            a = torch.zeros_like(t) if a is None else a
            flat = t.view(-1)
            af = a.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = fn().item()
                flat[i] = orig - eps
                down = fn().item()
                flat[i] = orig
                num = (up - down) / (2 * eps)
                err = abs(af[i].item() - num) / max(abs(af[i].item()), abs(num), FLOOR)
                worst = max(worst, err)
    return worst
