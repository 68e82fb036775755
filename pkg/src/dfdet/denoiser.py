"""Small convolutional noise predictor with sinusoidal time conditioning.

Stands in for a large pretrained diffusion backbone: four 3x3 convs
(C -> 16 -> 16 -> 16 -> C) with the projected time embedding added to the
first feature map. The final conv starts at zero so an untrained model
predicts zero noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, pack_network, save_checkpoint, unpack_network
from .diffusion import NoiseSchedule
from .layers import LayerSpec, init_params
from .optim import AdamConfig, AdamState, adam_step
from .tensor import NumericError, Tensor, assert_finite


def time_embedding(t, dim):
    """Sinusoidal embedding of integer timesteps; defined for t = 0."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float32))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float32) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(np.float32)


def denoiser_specs(channels=1, hidden=16, time_embed_dim=16):
    return [
        LayerSpec("conv2d", {"in": channels, "out": hidden, "k": 3, "stride": 1, "pad": 1}),
        LayerSpec("time-embed", {"in": time_embed_dim, "out": hidden}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"in": hidden, "out": hidden, "k": 3, "stride": 1, "pad": 1}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"in": hidden, "out": hidden, "k": 3, "stride": 1, "pad": 1}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"in": hidden, "out": channels, "k": 3, "stride": 1, "pad": 1}),
    ]


class Denoiser:
    def __init__(self, channels=1, hidden=16, time_embed_dim=16, rng=None, params=None):
        self.channels = channels
        self.hidden = hidden
        self.time_embed_dim = time_embed_dim
        self.specs = denoiser_specs(channels, hidden, time_embed_dim)
        if params is not None:
            self.params = [np.asarray(p, np.float32) for p in params]
        else:
            if rng is None:
                raise ValueError("need rng for fresh initialization")
            self.params = []
            conv_specs = [s for s in self.specs if s.kind in ("conv2d", "time-embed")]
            for i, spec in enumerate(conv_specs):
                self.params.extend(init_params(spec, rng, zero=(i == len(conv_specs) - 1)))

    def forward(self, x: Tensor, t, params) -> Tensor:
        """x: (B,C,H,W) Tensor; t: scalar or (B,) ints; params: 10 Tensors."""
        w1, b1, wt, bt, w2, b2, w3, b3, w4, b4 = params
        emb = time_embedding(
            np.broadcast_to(np.atleast_1d(t), (x.shape[0],)), self.time_embed_dim
        ).astype(x.dtype)
        h = T.conv2d(x, w1, b1, stride=1, padding=1)
        te = T.dense(Tensor(emb), wt, bt)
        h = h + te.reshape(x.shape[0], self.hidden, 1, 1)
        h = h.relu()
        h = T.conv2d(h, w2, b2, stride=1, padding=1).relu()
        h = T.conv2d(h, w3, b3, stride=1, padding=1).relu()
        return T.conv2d(h, w4, b4, stride=1, padding=1)

    def eps_predict(self, x_t, t):
        x = np.asarray(x_t, dtype=np.float32)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        if x.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[1]}")
        out = self.forward(Tensor(x), t, [Tensor(p) for p in self.params]).data
        assert_finite(out, "eps prediction")
        return out[0] if squeeze else out

    def save(self, path, sched: NoiseSchedule):
        entries = pack_network(self.specs, self.params)
        entries.append(("schedule", [sched.T], sched.beta.astype(np.float32)))
        save_checkpoint(path, entries)

    @classmethod
    def load(cls, path):
        entries = load_checkpoint(path)
        sched_entries = [e for e in entries if e[0] == "schedule"]
        if not sched_entries:
            raise ValueError(f"{path}: no schedule entry in denoiser checkpoint")
        beta = sched_entries[0][2].astype(np.float64)
        sched = NoiseSchedule(beta=beta, alpha_bar=np.concatenate([[1.0], np.cumprod(1.0 - beta)]))
        specs, params = unpack_network([e for e in entries if e[0] != "schedule"])
        conv = [s for s in specs if s.kind == "conv2d"]
        te = [s for s in specs if s.kind == "time-embed"]
        model = cls(
            channels=conv[0].dims["in"],
            hidden=conv[0].dims["out"],
            time_embed_dim=te[0].dims["in"],
            params=params,
        )
        return model, sched


@dataclass
class DenoiserTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    T: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.15

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.T) < 1 or self.lr <= 0:
            raise ValueError("train config values must be positive")


def train_denoiser(real_images, sched: NoiseSchedule, cfg: DenoiserTrainConfig, rng):
    """Minimize E ||eps - eps_hat(q_sample(x0, t, eps), t)||^2, t ~ U[1, T].

    Returns (Denoiser, per-epoch mean loss). Fresh noise is drawn per
    sample per epoch; aborts on a non-finite loss.
    """
    x_all = np.asarray(real_images, dtype=np.float32)
    if x_all.ndim != 4 or len(x_all) == 0:
        raise ValueError("real_images must be a non-empty (n, C, H, W) array")
    n = len(x_all)
    model = Denoiser(channels=x_all.shape[1], rng=rng)
    state = AdamState.init(model.params)
    adam = AdamConfig(lr=cfg.lr)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss, batches = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x0 = x_all[idx]
            t = rng.integers(1, sched.T + 1, size=len(idx))
            eps = rng.standard_normal(x0.shape).astype(np.float32)
            ab = sched.alpha_bar[t].astype(np.float32)[:, None, None, None]
            x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

            ptensors = [Tensor(p, requires_grad=True) for p in model.params]
            pred = model.forward(Tensor(x_t), t, ptensors)
            diff = pred - Tensor(eps)
            loss = (diff * diff).mean()
            if not np.isfinite(loss.data):
                raise NumericError("denoiser training diverged (non-finite loss)")
            loss.backward()
            grads = [p.grad for p in ptensors]
            model.params, state = adam_step(model.params, grads, state, adam)
            epoch_loss += float(loss.data)
            batches += 1
        history.append(epoch_loss / batches)
    return model, history
