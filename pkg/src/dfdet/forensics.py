"""Feature extraction for detection: reconstruction error and first-leg noise.

compute_dire inverts an image to noise and reconstructs it (2S denoiser
calls); extract_eps0 isolates the noise the model assigns to the first
inversion leg (exactly 1 call). The student consumes the image with eps0
stacked on the channel axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import NoiseSchedule, StepPlan, ddim_invert, ddim_inversion_step, ddim_sample


@dataclass
class DireSample:
    x0: np.ndarray    # (C, H, W), values in [-1, 1]
    dire: np.ndarray  # |x0 - x0'|, elementwise >= 0
    eps0: np.ndarray  # first-leg noise, same shape as x0
    label: int        # 0 real, 1 fake
    gen_tag: str

    def __post_init__(self):
        if not (self.x0.shape == self.dire.shape == self.eps0.shape):
            raise ValueError("x0/dire/eps0 shapes must match")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def compute_dire(x0, denoiser, sched: NoiseSchedule, plan: StepPlan):
    """|x0 - reconstruct(invert(x0))|; exactly 2S denoiser calls."""
    x0 = np.asarray(x0, dtype=np.float32)
    x_T = ddim_invert(denoiser, sched, plan, x0)
    x0_rec = ddim_sample(denoiser, sched, plan, x_T)
    return np.abs(x0 - x0_rec)


def extract_eps0(x0, denoiser, sched: NoiseSchedule, plan: StepPlan):
    """Noise attributed to the first inversion leg; exactly 1 denoiser call.

    The clean image is known, so solving the first-leg relation
    x_1 = sqrt(abar_1) x0 + sqrt(1 - abar_1) eps0 for eps0 returns the
    model's own t=0 prediction.
    """
    x0 = np.asarray(x0, dtype=np.float32)
    t1 = plan.tau[0]
    eps_hat = denoiser.eps_predict(x0, 0)
    x1 = ddim_inversion_step(x0, eps_hat, 0, t1, sched)
    ab1 = sched.alpha_bar[t1]
    return ((x1 - np.sqrt(ab1) * x0) / np.sqrt(1.0 - ab1)).astype(np.float32)


def make_student_input(x0, eps0):
    """Channel stack [x0 ; eps0], image channels first."""
    x0, eps0 = np.asarray(x0), np.asarray(eps0)
    if x0.shape[-2:] != eps0.shape[-2:]:
        raise ValueError(f"spatial shapes differ: {x0.shape} vs {eps0.shape}")
    return np.concatenate([x0, eps0], axis=-3)
