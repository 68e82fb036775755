"""Adam with bias correction, over lists of numpy parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import assert_finite


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def init(cls, params):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            step=0,
        )


def adam_step(params, grads, state: AdamState, cfg: AdamConfig):
    """One Adam update. Returns (new_params, new_state); inputs untouched."""
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"param shape {p.shape} != grad shape {g.shape}")
        assert_finite(g, "gradient")
        m2 = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v2 = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        mhat = m2 / bc1
        vhat = v2 / bc2
        new_params.append((p - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)).astype(p.dtype))
        new_m.append(m2.astype(p.dtype))
        new_v.append(v2.astype(p.dtype))
    return new_params, AdamState(m=new_m, v=new_v, step=t)
