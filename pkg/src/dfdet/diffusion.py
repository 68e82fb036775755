"""Noise schedules and deterministic DDIM stepping in both directions.

Convention: alpha_bar is indexed 0..T with alpha_bar[0] = 1 (clean data);
the sampler and inverter evaluate the noise predictor at the current
timestep of each leg. sigma is fixed to 0, so both trajectories are pure
functions of (input, plan, denoiser parameters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import assert_finite

# desk-scale defaults; T=1000 / beta 1e-4..0.02 scaled down to keep
# per-leg alpha_bar steps moderate at S=20
DEFAULT_T = 100
DEFAULT_BETA_START = 1e-3
DEFAULT_BETA_END = 0.15


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray       # (T,), beta[t-1] is the step-t beta
    alpha_bar: np.ndarray  # (T+1,), alpha_bar[0] = 1

    @property
    def T(self):
        return len(self.beta)


@dataclass(frozen=True)
class StepPlan:
    tau: tuple  # strictly increasing timesteps in [1, T]

    @property
    def S(self):
        return len(self.tau)


@dataclass(frozen=True)
class DdimStepConfig:
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma != 0.0:
            raise ValueError("only the deterministic sigma=0 sampler is supported")


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - beta)])
    return NoiseSchedule(beta=beta, alpha_bar=alpha_bar)


def make_step_plan(T: int, S: int) -> StepPlan:
    if not (1 <= S <= T):
        raise ValueError(f"need 1 <= S <= T, got S={S}, T={T}")
    # round-half-up keeps the spacing deterministic across platforms
    tau = tuple(int(np.floor(i * T / S + 0.5)) for i in range(1, S + 1))
    return StepPlan(tau=tau)


def _check_t(t, T):
    if not (0 <= t <= T):
        raise ValueError(f"timestep {t} outside [0, {T}]")


def q_sample(x0, t: int, eps, sched: NoiseSchedule):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0, eps = np.asarray(x0), np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    _check_t(t, sched.T)
    ab = sched.alpha_bar[t]
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype)


def predict_x0(x_t, eps_hat, t: int, sched: NoiseSchedule):
    """Clean-image estimate implied by a noise prediction at step t."""
    if t < 1:
        raise ValueError("predict_x0 needs t >= 1")
    _check_t(t, sched.T)
    ab = sched.alpha_bar[t]
    x_t, eps_hat = np.asarray(x_t), np.asarray(eps_hat)
    return ((x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)).astype(x_t.dtype)


def ddim_reverse_step(x_t, eps_hat, t: int, t_prev: int, sched: NoiseSchedule,
                      cfg: DdimStepConfig = DdimStepConfig()):
    """One deterministic reverse leg t -> t_prev."""
    if not (0 <= t_prev < t <= sched.T):
        raise ValueError(f"need 0 <= t_prev < t <= T, got t_prev={t_prev}, t={t}")
    ab_prev = sched.alpha_bar[t_prev]
    x0_hat = predict_x0(x_t, eps_hat, t, sched)
    out = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * np.asarray(eps_hat)
    return out.astype(np.asarray(x_t).dtype)


def ddim_inversion_step(x_t, eps_hat, t: int, t_next: int, sched: NoiseSchedule):
    """One deterministic inversion leg t -> t_next (toward noise)."""
    if not (0 <= t < t_next <= sched.T):
        raise ValueError(f"need 0 <= t < t_next <= T, got t={t}, t_next={t_next}")
    ab_t = sched.alpha_bar[t]
    ab_n = sched.alpha_bar[t_next]
    x_t, eps_hat = np.asarray(x_t), np.asarray(eps_hat)
    ratio = x_t / np.sqrt(ab_t) + (
        np.sqrt((1.0 - ab_n) / ab_n) - np.sqrt((1.0 - ab_t) / ab_t)
    ) * eps_hat
    return (np.sqrt(ab_n) * ratio).astype(x_t.dtype)


class CallCountingDenoiser:
    """Wraps any eps-predictor and counts evaluations."""

    def __init__(self, denoiser):
        self.inner = denoiser
        self.calls = 0

    def eps_predict(self, x_t, t):
        self.calls += 1
        return self.inner.eps_predict(x_t, t)


def ddim_sample(denoiser, sched: NoiseSchedule, plan: StepPlan, x_T):
    """Reverse trajectory tau_S -> ... -> tau_1 -> 0; exactly S denoiser calls."""
    x = np.asarray(x_T)
    steps = list(plan.tau)[::-1] + [0]
    for t, t_prev in zip(steps[:-1], steps[1:]):
        eps_hat = denoiser.eps_predict(x, t)
        x = ddim_reverse_step(x, eps_hat, t, t_prev, sched)
    assert_finite(x, "ddim_sample output")
    return x


def ddim_invert(denoiser, sched: NoiseSchedule, plan: StepPlan, x0):
    """Inversion trajectory 0 -> tau_1 -> ... -> tau_S; exactly S denoiser calls."""
    x = np.asarray(x0)
    steps = [0] + list(plan.tau)
    for t, t_next in zip(steps[:-1], steps[1:]):
        eps_hat = denoiser.eps_predict(x, t)
        x = ddim_inversion_step(x, eps_hat, t, t_next, sched)
    assert_finite(x, "ddim_invert output")
    return x
