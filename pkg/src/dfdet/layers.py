"""Layer specs, initialization, and a small sequential network.

Layer kinds: dense, conv2d, relu, global-avg-pool, sigmoid, time-embed.
The time-embed layer maps a sinusoidal timestep encoding through a dense
projection; model classes decide where its output is injected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor, assert_finite

KINDS = ("dense", "conv2d", "relu", "global-avg-pool", "sigmoid", "time-embed")


@dataclass
class LayerSpec:
    kind: str
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


def he_normal(rng, shape, fan_in):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def init_params(spec: LayerSpec, rng, zero=False):
    """Parameter arrays for a layer: [] for activations, [w, b] otherwise."""
    if spec.kind == "dense" or spec.kind == "time-embed":
        n_in, n_out = spec.dims["in"], spec.dims["out"]
        w = np.zeros((n_out, n_in), np.float32) if zero else he_normal(rng, (n_out, n_in), n_in)
        return [w, np.zeros(n_out, np.float32)]
    if spec.kind == "conv2d":
        c, k_, kk = spec.dims["in"], spec.dims["out"], spec.dims["k"]
        fan_in = c * kk * kk
        w = (
            np.zeros((k_, c, kk, kk), np.float32)
            if zero
            else he_normal(rng, (k_, c, kk, kk), fan_in)
        )
        return [w, np.zeros(k_, np.float32)]
    return []


def apply_layer(spec: LayerSpec, params, x: Tensor) -> Tensor:
    if spec.kind == "dense" or spec.kind == "time-embed":
        return T.dense(x, params[0], params[1])
    if spec.kind == "conv2d":
        return T.conv2d(
            x, params[0], params[1],
            stride=spec.dims.get("stride", 1),
            padding=spec.dims.get("pad", 0),
        )
    if spec.kind == "relu":
        return x.relu()
    if spec.kind == "sigmoid":
        return x.sigmoid()
    if spec.kind == "global-avg-pool":
        return T.global_avg_pool(x)
    raise ValueError(f"unknown layer kind {spec.kind!r}")


class Network:
    """Sequential stack over LayerSpecs; parameters held as flat list."""

    def __init__(self, specs, rng=None, zero_last=False):
        self.specs = list(specs)
        self.param_slices = []
        self.params = []
        param_layers = [i for i, s in enumerate(self.specs) if s.kind in ("dense", "conv2d", "time-embed")]
        for i, spec in enumerate(self.specs):
            zero = rng is None or (zero_last and param_layers and i == param_layers[-1])
            ps = init_params(spec, rng, zero=zero) if spec.kind in ("dense", "conv2d", "time-embed") else []
            start = len(self.params)
            self.params.extend(ps)
            self.param_slices.append((start, len(self.params)))

    def forward(self, x, params=None):
        """Run the stack; `params` (list of Tensor or ndarray) overrides self.params."""
        raw = self.params if params is None else params
        plist = [p if isinstance(p, Tensor) else Tensor(p) for p in raw]
        h = x if isinstance(x, Tensor) else Tensor(x)
        for spec, (a, b) in zip(self.specs, self.param_slices):
            h = apply_layer(spec, plist[a:b], h)
        assert_finite(h.data, "network output")
        return h

    def set_params(self, params):
        if len(params) != len(self.params):
            raise ValueError("parameter count mismatch")
        self.params = [np.asarray(p, dtype=np.float32) for p in params]
