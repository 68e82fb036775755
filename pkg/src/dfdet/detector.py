"""Teacher/student binary detectors and the distillation training loop.

Both models share one architecture (4 convs + global average pool into a
32-wide feature vector, then a sigmoid head) and differ only in input
channels: the teacher reads reconstruction-error maps, the student reads
the image stacked with its first-leg noise. The teacher is pretrained,
then frozen; the student trains on BCE plus an optional feature-matching
distillation term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, pack_network, save_checkpoint, unpack_network
from .forensics import make_student_input
from .layers import LayerSpec, Network
from .optim import AdamConfig, AdamState, adam_step
from .tensor import NumericError, Tensor

PROB_CLAMP = 1e-7
FEATURE_WIDTH = 32


class FrozenModelError(RuntimeError):
    pass


def detector_specs(in_channels, feature_width=FEATURE_WIDTH):
    return [
        LayerSpec("conv2d", {"in": in_channels, "out": 16, "k": 3, "stride": 1, "pad": 1}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"in": 16, "out": 16, "k": 3, "stride": 2, "pad": 1}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"in": 16, "out": feature_width, "k": 3, "stride": 1, "pad": 1}),
        LayerSpec("relu"),
        LayerSpec("conv2d", {"in": feature_width, "out": feature_width, "k": 3, "stride": 2, "pad": 1}),
        LayerSpec("relu"),
        LayerSpec("global-avg-pool"),
    ]


class DetectorModel:
    """Feature extractor + sigmoid head; optionally frozen."""

    def __init__(self, in_channels, feature_width=FEATURE_WIDTH, rng=None,
                 params=None, frozen=False, zero_init=False):
        self.in_channels = in_channels
        self.feature_width = feature_width
        self.feature_net = Network(detector_specs(in_channels, feature_width),
                                   rng=rng if params is None and not zero_init else None)
        self.head_spec = LayerSpec("dense", {"in": feature_width, "out": 1})
        if zero_init:
            self.feature_net.set_params([np.zeros_like(p) for p in self.feature_net.params])
            head = [np.zeros((1, feature_width), np.float32), np.zeros(1, np.float32)]
        elif params is not None:
            self.feature_net.set_params(params[:-2])
            head = [np.asarray(p, np.float32) for p in params[-2:]]
        else:
            from .layers import he_normal
            head = [he_normal(rng, (1, feature_width), feature_width), np.zeros(1, np.float32)]
        self.head_params = head
        self.frozen = frozen

    @property
    def params(self):
        return self.feature_net.params + self.head_params

    def set_params(self, params):
        if self.frozen:
            raise FrozenModelError("model is frozen; parameter updates rejected")
        self.feature_net.set_params(params[:-2])
        self.head_params = [np.asarray(p, np.float32) for p in params[-2:]]

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float32)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        return x, squeeze

    def features(self, x):
        x, squeeze = self._check_input(x)
        out = self.feature_net.forward(x).data
        return out[0] if squeeze else out

    def features_t(self, x: Tensor, feature_tensors):
        return self.feature_net.forward(x, params=feature_tensors)

    def prob(self, x):
        x, squeeze = self._check_input(x)
        feats = self.feature_net.forward(x)
        p = T.dense(feats, Tensor(self.head_params[0]), Tensor(self.head_params[1]))
        out = np.clip(1.0 / (1.0 + np.exp(-p.data[:, 0])), PROB_CLAMP, 1.0 - PROB_CLAMP)
        return out[0] if squeeze else out

    def save(self, path):
        specs = self.feature_net.specs + [self.head_spec]
        save_checkpoint(path, pack_network(specs, self.params))

    @classmethod
    def load(cls, path, frozen=False):
        specs, params = unpack_network(load_checkpoint(path))
        conv = [s for s in specs if s.kind == "conv2d"]
        return cls(
            in_channels=conv[0].dims["in"],
            feature_width=specs[-1].dims["in"],
            params=params,
            frozen=frozen,
        )


@dataclass
class Prediction:
    prob: float
    label: int = field(init=False)

    def __post_init__(self):
        # ties at the 0.5 threshold classify as fake
        self.label = int(self.prob >= 0.5)


@dataclass
class TrainConfig:
    lam: float = 0.5
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    use_kd: bool = True
    kd_squared: bool = False

    def __post_init__(self):
        if self.lam < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("invalid training config")


# -- losses --------------------------------------------------------------


def bce_loss(probs, labels):
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("probs/labels shape mismatch")
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def kd_loss(teacher_feats, student_feats, squared=False):
    tf = np.asarray(teacher_feats, dtype=np.float64)
    sf = np.asarray(student_feats, dtype=np.float64)
    if tf.shape != sf.shape:
        raise ValueError(f"feature shapes differ: {tf.shape} vs {sf.shape}")
    per_sample = np.sum((tf - sf) ** 2, axis=-1)
    if not squared:
        per_sample = np.sqrt(per_sample)
    return float(np.mean(per_sample))


def total_loss(cls_loss, kd, lam):
    return cls_loss + lam * kd


def _bce_t(probs: Tensor, labels) -> Tensor:
    y = Tensor(labels.astype(probs.dtype))
    p = probs.clip(PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -((y * p.log() + (1.0 - y) * (1.0 - p).log()).mean())


def _kd_t(teacher_feats, student_feats: Tensor, squared=False) -> Tensor:
    diff = student_feats - Tensor(teacher_feats.astype(student_feats.dtype))
    per_sample = (diff * diff).sum(axis=1)
    if not squared:
        per_sample = (per_sample + 1e-24).sqrt()
    return per_sample.mean()


def student_loss_t(student: DetectorModel, param_tensors, inputs, labels,
                   teacher_feats, cfg: TrainConfig):
    """Differentiable total loss over one minibatch; returns (total, cls, kd)."""
    feats = student.features_t(Tensor(inputs), param_tensors[:-2])
    logits = T.dense(feats, param_tensors[-2], param_tensors[-1]).reshape(len(labels))
    probs = logits.sigmoid()
    cls = _bce_t(probs, labels)
    kd = _kd_t(teacher_feats, feats, squared=cfg.kd_squared)
    tot = cls + cfg.lam * kd if cfg.use_kd else cls
    return tot, cls, kd


# -- training loops --------------------------------------------------------


def _train_detector(inputs, labels, cfg: TrainConfig, rng, in_channels,
                    teacher=None, teacher_inputs=None):
    """Shared minibatch loop; distills against `teacher` when given."""
    model = DetectorModel(in_channels, rng=rng)
    state = AdamState.init(model.params)
    adam = AdamConfig(lr=cfg.lr)
    n = len(inputs)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            tfeats = (
                teacher.features(teacher_inputs[idx])
                if teacher is not None
                else np.zeros((len(idx), model.feature_width), np.float32)
            )
            ptensors = [Tensor(p, requires_grad=True) for p in model.params]
            tot, cls, kd = student_loss_t(model, ptensors, inputs[idx], labels[idx], tfeats, cfg)
            if not np.isfinite(tot.data):
                raise NumericError("detector training diverged (non-finite loss)")
            tot.backward()
            grads = [p.grad for p in ptensors]
            new_params, state = adam_step(model.params, grads, state, adam)
            model.feature_net.set_params(new_params[:-2])
            model.head_params = new_params[-2:]
            sums += [float(cls.data), float(kd.data), float(tot.data)]
            batches += 1
        history.append(tuple(sums / batches))
    return model, history


def pretrain_teacher(dire_images, labels, cfg: TrainConfig, rng):
    """Train a detector on reconstruction-error maps, then freeze it."""
    dire_images = np.asarray(dire_images, dtype=np.float32)
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        raise ValueError("teacher pretraining needs both classes present")
    cfg_no_kd = TrainConfig(lam=0.0, lr=cfg.lr, epochs=cfg.epochs,
                            batch_size=cfg.batch_size, seed=cfg.seed, use_kd=False)
    model, _ = _train_detector(dire_images, labels, cfg_no_kd, rng,
                               in_channels=dire_images.shape[1])
    model.frozen = True
    return model


def train_student(samples, teacher: DetectorModel, cfg: TrainConfig, rng):
    """Distillation training on precomputed DireSamples.

    Teacher stays bit-identical; history rows are (cls, kd, total) per
    epoch. With use_kd=False the kd value is still recorded but takes no
    part in the gradient.
    """
    if not teacher.frozen:
        raise ValueError("teacher must be frozen before student training")
    inputs = np.stack([make_student_input(s.x0, s.eps0) for s in samples]).astype(np.float32)
    dires = np.stack([s.dire for s in samples]).astype(np.float32)
    labels = np.array([s.label for s in samples], dtype=np.float64)
    return _train_detector(inputs, labels, cfg, rng,
                           in_channels=inputs.shape[1],
                           teacher=teacher, teacher_inputs=dires)


def predict(student: DetectorModel, x0, eps0) -> Prediction:
    return Prediction(prob=float(student.prob(make_student_input(x0, eps0))))
