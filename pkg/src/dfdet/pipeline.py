"""Dataset-level glue: batch feature extraction, input preparation with
train-split normalization, and per-generator evaluation."""

from __future__ import annotations

import numpy as np

from .datagen import AugmentConfig, Dataset, NormStats, augment, compute_norm_stats
from .detector import DetectorModel
from .diffusion import NoiseSchedule, StepPlan
from .forensics import DireSample, compute_dire, extract_eps0, make_student_input
from .metrics import accuracy, average_precision
from .rng import Rng


def extract_features(ds: Dataset, denoiser, sched: NoiseSchedule, plan: StepPlan,
                     chunk: int = 200):
    """DIRE + first-leg noise for every image; returns list of DireSample."""
    samples = []
    for start in range(0, len(ds), chunk):
        x0 = ds.images[start : start + chunk]
        dire = compute_dire(x0, denoiser, sched, plan)
        eps0 = extract_eps0(x0, denoiser, sched, plan)
        for i in range(len(x0)):
            samples.append(DireSample(
                x0=x0[i], dire=dire[i], eps0=eps0[i],
                label=int(ds.labels[start + i]), gen_tag=ds.gen_tags[start + i],
            ))
    return samples


def prepare_train_samples(samples, rng: Rng, hflip_prob: float = 0.5,
                          stats: NormStats = None):
    """Augment + standardize a training batch; returns (samples, stats)."""
    stats = stats or compute_norm_stats(samples)
    cfg = AugmentConfig(hflip_prob=hflip_prob, stats=stats)
    out = [augment(s, cfg, rng.split(i)) for i, s in enumerate(samples)]
    return out, stats


def prepare_eval_samples(samples, stats: NormStats):
    """Test-time path: no flips, same train-split standardization."""
    cfg = AugmentConfig(hflip_prob=0.0, stats=stats)
    return [augment(s, cfg, Rng(0), force_flip=False) for s in samples]


def student_scores(student: DetectorModel, samples, stats: NormStats):
    prepared = prepare_eval_samples(samples, stats)
    inputs = np.stack([make_student_input(s.x0, s.eps0) for s in prepared])
    return student.prob(inputs)


def evaluate_per_generator(student: DetectorModel, samples, stats: NormStats,
                           threshold: float = 0.5):
    """Accuracy/AP per fake-generator tag, each scored against all reals."""
    scores = student_scores(student, samples, stats)
    labels = np.array([s.label for s in samples])
    tags = np.array([s.gen_tag for s in samples])
    real_mask = labels == 0
    results = {}
    for tag in sorted(set(tags[~real_mask])):
        mask = real_mask | (tags == tag)
        results[tag] = {
            "accuracy": accuracy(scores[mask], labels[mask], threshold),
            "ap": average_precision(scores[mask], labels[mask]),
            "n_real": int(real_mask.sum()),
            "n_fake": int((tags == tag).sum()),
        }
    results["overall"] = {
        "accuracy": accuracy(scores, labels, threshold),
        "ap": average_precision(scores, labels),
        "n_real": int(real_mask.sum()),
        "n_fake": int((~real_mask).sum()),
    }
    return results
