import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfdet.detector import (DetectorModel, FrozenModelError, Prediction,
                            TrainConfig, bce_loss, kd_loss, predict,
                            pretrain_teacher, total_loss, train_student,
                            student_loss_t)
from dfdet.forensics import DireSample
from dfdet.gradcheck import finite_diff_check
from dfdet.rng import make_rng


class TestBce:
    def test_perfect_prediction(self):
        assert bce_loss([1.0], [1.0]) == pytest.approx(0.0, abs=1e-6)

    def test_half_probability(self):
        assert bce_loss([0.5], [0.0]) == pytest.approx(math.log(2), abs=1e-9)

    def test_batch_average(self):
        assert bce_loss([1.0, 0.5], [1.0, 0.0]) == pytest.approx(
            (bce_loss([1.0], [1.0]) + math.log(2)) / 2, abs=1e-9)

    def test_clamping_keeps_finite(self):
        assert np.isfinite(bce_loss([0.0, 1.0], [1.0, 0.0]))


class TestKd:
    def test_identical_features(self):
        f = np.ones((3, 4))
        assert kd_loss(f, f) == 0.0

    def test_euclidean_norm(self):
        tf = np.array([[3.0, 4.0]])
        sf = np.zeros((1, 2))
        assert kd_loss(tf, sf) == pytest.approx(5.0, abs=1e-9)

    def test_squared_variant(self):
        tf = np.array([[3.0, 4.0]])
        assert kd_loss(tf, np.zeros((1, 2)), squared=True) == pytest.approx(25.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 100.0))
    def test_homogeneity(self, c):
        rng = make_rng(5)
        tf = rng.standard_normal((4, 8))
        sf = rng.standard_normal((4, 8))
        base = kd_loss(tf, sf)
        scaled = kd_loss(sf + c * (tf - sf), sf)
        assert scaled == pytest.approx(c * base, rel=1e-6, abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            kd_loss(np.zeros((2, 3)), np.zeros((2, 4)))


class TestTotalLoss:
    def test_lambda_zero(self):
        assert total_loss(0.7, 123.0, 0.0) == 0.7

    def test_paper_lambda(self):
        assert total_loss(0.3, 0.2, 0.5) == pytest.approx(0.4, abs=1e-9)

    def test_kd_zero(self):
        assert total_loss(0.9, 0.0, 0.5) == 0.9


class TestPrediction:
    def test_tie_goes_to_fake(self):
        assert Prediction(prob=0.5).label == 1

    def test_below_threshold(self):
        assert Prediction(prob=0.4999).label == 0


class TestDetectorModel:
    def test_zero_net_zero_features(self):
        m = DetectorModel(in_channels=1, zero_init=True)
        f = m.features(np.zeros((2, 1, 8, 8), np.float32))
        np.testing.assert_array_equal(f, np.zeros((2, 32)))

    def test_feature_width(self):
        m = DetectorModel(in_channels=2, rng=make_rng(0))
        f = m.features(np.zeros((1, 2, 16, 16), np.float32))
        assert f.shape == (1, 32)

    def test_channel_mismatch(self):
        m = DetectorModel(in_channels=1, rng=make_rng(1))
        with pytest.raises(ValueError, match="channels"):
            m.features(np.zeros((1, 2, 8, 8), np.float32))

    def test_frozen_rejects_updates(self):
        m = DetectorModel(in_channels=1, rng=make_rng(2), frozen=True)
        with pytest.raises(FrozenModelError):
            m.set_params([np.zeros_like(p) for p in m.params])

    def test_save_load_roundtrip(self, tmp_path):
        m = DetectorModel(in_channels=2, rng=make_rng(3))
        path = tmp_path / "det.ddck"
        m.save(path)
        loaded = DetectorModel.load(path)
        assert loaded.in_channels == 2
        x = make_rng(4).standard_normal((2, 2, 8, 8)).astype(np.float32)
        np.testing.assert_array_equal(loaded.prob(x), m.prob(x))


def _tiny_samples(n, rng, flip=False):
    samples = []
    for i in range(n):
        label = i % 2
        base = rng.standard_normal((1, 8, 8)).astype(np.float32)
        # label-dependent mean shift makes the task learnable
        x0 = base + (0.8 if label else -0.8)
        samples.append(DireSample(
            x0=x0, dire=np.abs(base) * (0.3 if label else 1.0),
            eps0=rng.standard_normal((1, 8, 8)).astype(np.float32),
            label=label, gen_tag="fake" if label else "real"))
    return samples


class TestTraining:
    def test_teacher_needs_both_classes(self):
        with pytest.raises(ValueError, match="class"):
            pretrain_teacher(np.zeros((4, 1, 8, 8), np.float32), np.zeros(4),
                             TrainConfig(epochs=1), make_rng(0))

    def test_teacher_learns_and_is_deterministic(self):
        rng = make_rng(6)
        dire = np.abs(rng.standard_normal((64, 1, 8, 8))).astype(np.float32)
        labels = np.arange(64) % 2
        dire[labels == 1] *= 0.2
        cfg = TrainConfig(epochs=15, batch_size=16)
        t1 = pretrain_teacher(dire, labels, cfg, make_rng(7))
        t2 = pretrain_teacher(dire, labels, cfg, make_rng(7))
        for a, b in zip(t1.params, t2.params):
            assert a.tobytes() == b.tobytes()
        assert t1.frozen
        probs = t1.prob(dire)
        acc = np.mean((probs >= 0.5).astype(int) == labels)
        assert acc > 0.9

    def test_student_frozen_teacher_unchanged(self):
        rng = make_rng(8)
        samples = _tiny_samples(32, rng)
        dire = np.stack([s.dire for s in samples])
        labels = np.array([s.label for s in samples])
        teacher = pretrain_teacher(dire, labels, TrainConfig(epochs=3, batch_size=16),
                                   make_rng(9))
        before = [p.copy() for p in teacher.params]
        fixed_in = np.zeros((1, 1, 8, 8), np.float32)
        feats_before = teacher.features(fixed_in)
        student, hist = train_student(samples, teacher,
                                      TrainConfig(epochs=3, batch_size=16),
                                      make_rng(10))
        for a, b in zip(before, teacher.params):
            assert a.tobytes() == b.tobytes()
        assert teacher.features(fixed_in).tobytes() == feats_before.tobytes()
        assert len(hist) == 3 and len(hist[0]) == 3

    def test_no_kd_gradient_path_equals_pure_bce(self):
        rng = make_rng(11)
        samples = _tiny_samples(32, rng)
        dire = np.stack([s.dire for s in samples])
        labels = np.array([s.label for s in samples])
        teacher = pretrain_teacher(dire, labels, TrainConfig(epochs=2, batch_size=16),
                                   make_rng(12))
        cfg = TrainConfig(epochs=2, batch_size=16, use_kd=False)
        s1, h1 = train_student(samples, teacher, cfg, make_rng(13))
        # same training against a different teacher: identical student
        teacher2 = pretrain_teacher(dire * 0.5 + 0.1, labels,
                                    TrainConfig(epochs=2, batch_size=16), make_rng(14))
        s2, h2 = train_student(samples, teacher2, cfg, make_rng(13))
        for a, b in zip(s1.params, s2.params):
            assert a.tobytes() == b.tobytes()
        # kd is still recorded in history
        assert h1[0][1] != h2[0][1]

    def test_unfrozen_teacher_rejected(self):
        rng = make_rng(15)
        samples = _tiny_samples(8, rng)
        teacher = DetectorModel(in_channels=1, rng=make_rng(16))
        with pytest.raises(ValueError, match="frozen"):
            train_student(samples, teacher, TrainConfig(epochs=1), make_rng(17))


def test_total_objective_gradients_vs_finite_differences():
    rng = make_rng(18)
    student = DetectorModel(in_channels=2, feature_width=4, rng=make_rng(19))
    params64 = [rng.standard_normal(p.shape) * 0.3 for p in student.params]
    inputs = rng.standard_normal((2, 2, 6, 6))
    labels = np.array([1.0, 0.0])
    tfeats = rng.standard_normal((2, 4))
    cfg = TrainConfig(lam=0.5, use_kd=True)

    def loss_fn(ps):
        tot, _, _ = student_loss_t(student, ps, inputs, labels, tfeats, cfg)
        return tot

    assert finite_diff_check(loss_fn, params64) < 1e-4


def test_predict_returns_prediction():
    student = DetectorModel(in_channels=2, rng=make_rng(20))
    x0 = np.zeros((1, 8, 8), np.float32)
    eps0 = np.zeros((1, 8, 8), np.float32)
    p = predict(student, x0, eps0)
    assert 0.0 < p.prob < 1.0
    assert p.label in (0, 1)
