"""Corpus generation, augmentation, and bit-exact dataset persistence.

"Real" images are Gaussian random fields: white noise smoothed by a
per-image random-width Gaussian kernel, centered and rescaled into
[-1, 1]. Fakes come from the toy diffusion sampler; unseen-generator
variants use a different step count and a differently seeded denoiser.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .diffusion import NoiseSchedule, StepPlan, ddim_sample, make_step_plan
from .forensics import DireSample
from .rng import Rng

MAGIC = b"DDFD"
FEATURE_MAGIC = b"DDFS"
VERSION = 1

UNSEEN_PREFIX = "unseen-"


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (n, C, H, W) float32 in [-1, 1]
    labels: np.ndarray  # (n,) uint8, 0 real / 1 fake
    gen_tags: list
    split: str = "train"

    def __post_init__(self):
        if not (len(self.images) == len(self.labels) == len(self.gen_tags)):
            raise DatasetError("images/labels/gen_tags lengths differ")

    def __len__(self):
        return len(self.images)


def concat_datasets(datasets, split):
    ds = Dataset(
        images=np.concatenate([d.images for d in datasets]),
        labels=np.concatenate([d.labels for d in datasets]),
        gen_tags=[t for d in datasets for t in d.gen_tags],
        split=split,
    )
    assert_split_hygiene(ds)
    return ds


def assert_split_hygiene(ds: Dataset):
    if ds.split == "train":
        bad = sorted({t for t in ds.gen_tags if t.startswith(UNSEEN_PREFIX)})
        if bad:
            raise DatasetError(f"unseen generator tags in training split: {bad}")


def params_tag(denoiser):
    digest = hashlib.sha256()
    for p in denoiser.params:
        digest.update(np.asarray(p, np.float32).tobytes())
    return digest.hexdigest()[:8]


def gen_real(n: int, size: int, rng: Rng) -> Dataset:
    """Gaussian random fields, deterministic per (seed, index)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    images = np.empty((n, 1, size, size), np.float32)
    for i in range(n):
        g = rng.split(i).generator()
        sigma = g.uniform(0.3, 2.0)
        field_ = ndimage.gaussian_filter(g.standard_normal((size, size)), sigma)
        field_ -= field_.mean()
        field_ /= max(np.abs(field_).max(), 1e-8)
        images[i, 0] = field_
    return Dataset(images=images, labels=np.zeros(n, np.uint8),
                   gen_tags=["grf"] * n)


def gen_fake(denoiser, sched: NoiseSchedule, n: int, plan: StepPlan, rng: Rng,
             size: int = 16, tag: str = None) -> Dataset:
    """Diffusion samples from unit-Gaussian latents, clipped to [-1, 1]."""
    tag = tag or f"ddim-{params_tag(denoiser)}-S{plan.S}"
    x_T = np.stack([
        rng.split(i).generator().standard_normal((denoiser.channels, size, size))
        for i in range(n)
    ]).astype(np.float32)
    images = np.clip(ddim_sample(denoiser, sched, plan, x_T), -1.0, 1.0)
    return Dataset(images=images.astype(np.float32),
                   labels=np.ones(n, np.uint8), gen_tags=[tag] * n)


def gen_unseen_fake(denoiser, sched: NoiseSchedule, n: int, rng: Rng,
                    size: int = 16, s_values=(10, 5)) -> Dataset:
    """Variant-process fakes whose tags are barred from training splits."""
    parts = []
    per = max(1, n // len(s_values))
    for j, s in enumerate(s_values):
        plan = make_step_plan(sched.T, s)
        tag = f"{UNSEEN_PREFIX}ddim-{params_tag(denoiser)}-S{s}"
        parts.append(gen_fake(denoiser, sched, per, plan, rng.split(10_000 + j),
                              size=size, tag=tag))
    return Dataset(
        images=np.concatenate([p.images for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        gen_tags=[t for p in parts for t in p.gen_tags],
        split="test",
    )


def resize_images(images, out_size: int):
    """Bilinear resize on the spatial axes; identity when sizes match."""
    images = np.asarray(images, np.float32)
    h = images.shape[-2]
    if h == out_size:
        return images
    zoom = [1.0] * (images.ndim - 2) + [out_size / h, out_size / images.shape[-1]]
    return ndimage.zoom(images, zoom, order=1).astype(np.float32)


def center_crop(images, out_size: int):
    h, w = images.shape[-2:]
    if (h, w) == (out_size, out_size):
        return images
    top, left = (h - out_size) // 2, (w - out_size) // 2
    return images[..., top : top + out_size, left : left + out_size]


# -- augmentation ----------------------------------------------------------


@dataclass
class NormStats:
    """Per-channel standardization statistics from the training split."""

    x0_mean: np.ndarray
    x0_std: np.ndarray
    dire_mean: np.ndarray
    dire_std: np.ndarray


def compute_norm_stats(samples) -> NormStats:
    x0 = np.stack([s.x0 for s in samples])
    dire = np.stack([s.dire for s in samples])
    axes = (0, 2, 3)
    return NormStats(
        x0_mean=x0.mean(axis=axes), x0_std=np.maximum(x0.std(axis=axes), 1e-6),
        dire_mean=dire.mean(axis=axes), dire_std=np.maximum(dire.std(axis=axes), 1e-6),
    )


@dataclass
class AugmentConfig:
    hflip_prob: float = 0.5
    normalize_image: bool = True
    normalize_noise: bool = False  # first-leg noise is never standardized
    stats: NormStats = None

    def __post_init__(self):
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError("hflip_prob must be in [0, 1]")


def _standardize(arr, mean, std):
    return ((arr - mean[:, None, None]) / std[:, None, None]).astype(np.float32)


def augment(sample: DireSample, cfg: AugmentConfig, rng: Rng,
            force_flip: bool = None) -> DireSample:
    """One joint flip decision for x0/dire/eps0, then standardization of
    x0 and dire only."""
    flip = force_flip if force_flip is not None else (
        rng.generator().uniform() < cfg.hflip_prob
    )
    x0, dire, eps0 = sample.x0, sample.dire, sample.eps0
    if flip:
        x0, dire, eps0 = x0[..., ::-1].copy(), dire[..., ::-1].copy(), eps0[..., ::-1].copy()
    if cfg.normalize_image and cfg.stats is not None:
        x0 = _standardize(x0, cfg.stats.x0_mean, cfg.stats.x0_std)
        dire = _standardize(dire, cfg.stats.dire_mean, cfg.stats.dire_std)
    if cfg.normalize_noise:
        raise ValueError("noise channels are contractually left unnormalized")
    return replace(sample, x0=x0, dire=dire, eps0=eps0)


# -- persistence -----------------------------------------------------------


def _write_str(blob, s):
    raw = s.encode("utf-8")
    blob += struct.pack("<I", len(raw))
    blob += raw


def _read_str(blob, off):
    (n,) = struct.unpack_from("<I", blob, off)
    off += 4
    return blob[off : off + n].decode("utf-8"), off + n


def save_dataset(ds: Dataset, path):
    n, c, h, w = ds.images.shape
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<IIIII", VERSION, n, c, h, w)
    blob += np.asarray(ds.images, "<f4").tobytes()
    blob += np.asarray(ds.labels, np.uint8).tobytes()
    for tag in ds.gen_tags:
        _write_str(blob, tag)
    _write_str(blob, ds.split)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DatasetError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    try:
        version, n, c, h, w = struct.unpack_from("<IIIII", blob, 4)
        if version != VERSION:
            raise DatasetError(f"version mismatch: file {version}, supported {VERSION}")
        off = 24
        count = n * c * h * w
        images = np.frombuffer(blob, "<f4", count=count, offset=off).reshape(n, c, h, w).copy()
        off += 4 * count
        labels = np.frombuffer(blob, np.uint8, count=n, offset=off).copy()
        off += n
        tags = []
        for _ in range(n):
            tag, off = _read_str(blob, off)
            tags.append(tag)
        split, off = _read_str(blob, off)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"truncated dataset file: {exc}") from exc
    return Dataset(images=images, labels=labels, gen_tags=tags, split=split)


def save_features(samples, path, split="train"):
    """Persist a batch of DireSamples (x0, dire, eps0, label, tag)."""
    x0 = np.stack([s.x0 for s in samples]).astype("<f4")
    dire = np.stack([s.dire for s in samples]).astype("<f4")
    eps0 = np.stack([s.eps0 for s in samples]).astype("<f4")
    n, c, h, w = x0.shape
    blob = bytearray()
    blob += FEATURE_MAGIC
    blob += struct.pack("<IIIII", VERSION, n, c, h, w)
    for arr in (x0, dire, eps0):
        blob += arr.tobytes()
    blob += np.array([s.label for s in samples], np.uint8).tobytes()
    for s in samples:
        _write_str(blob, s.gen_tag)
    _write_str(blob, split)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_features(path):
    """Returns (list of DireSample, split)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise DatasetError(f"bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}")
    version, n, c, h, w = struct.unpack_from("<IIIII", blob, 4)
    if version != VERSION:
        raise DatasetError(f"version mismatch: file {version}, supported {VERSION}")
    off = 24
    count = n * c * h * w
    arrays = []
    for _ in range(3):
        arrays.append(np.frombuffer(blob, "<f4", count=count, offset=off).reshape(n, c, h, w).copy())
        off += 4 * count
    labels = np.frombuffer(blob, np.uint8, count=n, offset=off)
    off += n
    samples = []
    tags = []
    for _ in range(n):
        tag, off = _read_str(blob, off)
        tags.append(tag)
    split, off = _read_str(blob, off)
    for i in range(n):
        samples.append(DireSample(x0=arrays[0][i], dire=arrays[1][i],
                                  eps0=arrays[2][i], label=int(labels[i]),
                                  gen_tag=tags[i]))
    return samples, split
