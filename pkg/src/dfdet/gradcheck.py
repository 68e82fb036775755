"""Analytic gradients and the central finite-difference oracle."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad(loss_fn, params):
    """Exact gradients of a scalar loss w.r.t. each parameter array.

    `loss_fn` maps a list of Tensors to a scalar Tensor built from the
    supported op vocabulary.
    """
    tensors = [Tensor(np.asarray(p), requires_grad=True) for p in params]
    loss = loss_fn(tensors)
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    loss.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


def finite_diff_check(loss_fn, params, h=1e-5):
    """Worst relative error between analytic and central-difference gradients.

    Runs in float64; relative error uses denominator max(|a|, |b|, 1e-8).
    """
    params64 = [np.asarray(p, dtype=np.float64) for p in params]
    analytic = grad(loss_fn, params64)

    def eval_loss(ps):
        out = loss_fn([Tensor(p) for p in ps])
        return float(out.data)

    worst = 0.0
    for i, p in enumerate(params64):
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = eval_loss(params64)
            flat[j] = orig - h
            down = eval_loss(params64)
            flat[j] = orig
            num_flat[j] = (up - down) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(analytic[i]), np.abs(numeric)), 1e-8)
        rel = np.abs(analytic[i] - numeric) / denom
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return worst
