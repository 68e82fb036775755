import numpy as np
import pytest

from dfdet.diffusion import (CallCountingDenoiser, make_linear_schedule,
                             make_step_plan)
from dfdet.forensics import (DireSample, compute_dire, extract_eps0,
                             make_student_input)
from dfdet.rng import make_rng

SCHED = make_linear_schedule(10, 0.02, 0.2)
PLAN = make_step_plan(10, 4)


class ConstantDenoiser:
    channels = 1

    def __init__(self, c):
        self.c = c

    def eps_predict(self, x, t):
        return np.full_like(x, self.c)


def test_constant_denoiser_dire_is_zero():
    d = ConstantDenoiser(0.4)
    x0 = make_rng(0).standard_normal((1, 1, 6, 6)).astype(np.float32)
    dire = compute_dire(x0, d, SCHED, PLAN)
    np.testing.assert_allclose(dire, np.zeros_like(x0), atol=2e-6)


def test_dire_nonnegative():
    rng = make_rng(1)

    class Wobble:
        def eps_predict(self, x, t):
            return 0.1 * x

    x0 = rng.standard_normal((2, 1, 6, 6)).astype(np.float32)
    assert np.all(compute_dire(x0, Wobble(), SCHED, PLAN) >= 0)


def test_dire_call_count_is_2S():
    cc = CallCountingDenoiser(ConstantDenoiser(0.0))
    compute_dire(np.zeros((1, 1, 4, 4), np.float32), cc, SCHED, PLAN)
    assert cc.calls == 2 * PLAN.S


def test_eps0_constant_denoiser():
    c = 0.7
    x0 = make_rng(2).standard_normal((1, 1, 4, 4)).astype(np.float32)
    eps0 = extract_eps0(x0, ConstantDenoiser(c), SCHED, PLAN)
    np.testing.assert_allclose(eps0, np.full_like(x0, c), atol=1e-6)


def test_eps0_equals_t0_prediction():
    class Affine:
        def eps_predict(self, x, t):
            return 0.3 * x - 0.1

    d = Affine()
    x0 = make_rng(3).standard_normal((2, 1, 8, 8)).astype(np.float32)
    eps0 = extract_eps0(x0, d, SCHED, PLAN)
    np.testing.assert_allclose(eps0, d.eps_predict(x0, 0), atol=1e-5)


def test_eps0_single_call():
    cc = CallCountingDenoiser(ConstantDenoiser(0.2))
    extract_eps0(np.zeros((1, 1, 4, 4), np.float32), cc, SCHED, PLAN)
    assert cc.calls == 1


class TestStudentInput:
    def test_channel_counts(self):
        x0 = np.zeros((1, 4, 4))
        eps0 = np.zeros((1, 4, 4))
        assert make_student_input(x0, eps0).shape == (2, 4, 4)

    def test_image_channels_first_bit_exact(self):
        rng = make_rng(4)
        x0 = rng.standard_normal((1, 4, 4)).astype(np.float32)
        eps0 = rng.standard_normal((1, 4, 4)).astype(np.float32)
        out = make_student_input(x0, eps0)
        assert out[0].tobytes() == x0[0].tobytes()
        assert out[1].tobytes() == eps0[0].tobytes()

    def test_argument_order_pins_channel_order(self):
        a = np.ones((1, 2, 2))
        b = np.zeros((1, 2, 2))
        assert make_student_input(a, b)[0, 0, 0] == 1.0
        assert make_student_input(b, a)[0, 0, 0] == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            make_student_input(np.zeros((1, 4, 4)), np.zeros((1, 5, 5)))


class TestDireSample:
    def test_shape_invariant(self):
        with pytest.raises(ValueError):
            DireSample(x0=np.zeros((1, 4, 4)), dire=np.zeros((1, 5, 5)),
                       eps0=np.zeros((1, 4, 4)), label=0, gen_tag="x")

    def test_label_invariant(self):
        with pytest.raises(ValueError):
            DireSample(x0=np.zeros((1, 4, 4)), dire=np.zeros((1, 4, 4)),
                       eps0=np.zeros((1, 4, 4)), label=2, gen_tag="x")
