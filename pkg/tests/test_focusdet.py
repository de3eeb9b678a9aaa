import numpy as np
import pytest
import torch

from dcfuse import datasynth, focusdet, trainer


def small_det(seed=0, base_width=4):
    torch.manual_seed(seed)
    return focusdet.FocusDetector(base_width=base_width)


class TestFocusDetector:
    def test_output_shape_multiple_of_16(self):
        det = small_det()
        out = det(torch.rand(2, 2, 32, 48))
        assert out.shape == (2, 1, 32, 48)

    def test_output_shape_ragged(self):
        # 50 and 37 are not multiples of 16; internal padding must crop back
        det = small_det()
        out = det(torch.rand(1, 2, 50, 37))
        assert out.shape == (1, 1, 50, 37)

    def test_output_range(self):
        with torch.no_grad():
            out = small_det()(torch.rand(1, 2, 32, 32))
        assert float(out.min()) >= 0.0
        assert float(out.max()) <= 1.0

    def test_init_deterministic(self):
        assert focusdet.param_checksum(small_det(3)) == \
            focusdet.param_checksum(small_det(3))

    def test_arch(self):
        det = focusdet.FocusDetector(base_width=8)
        assert det.arch() == {"kind": "detector", "base_width": 8, "levels": 4}

    def test_bad_levels(self):
        with pytest.raises(ValueError, match="levels"):
            focusdet.FocusDetector(levels=0)


class TestChecksumFreeze:
    def test_checksum_tracks_weights(self):
        det = small_det()
        before = focusdet.param_checksum(det)
        with torch.no_grad():
            next(det.parameters()).add_(1e-3)
        assert focusdet.param_checksum(det) != before

    def test_freeze_disables_grads(self):
        det = small_det()
        frozen = focusdet.freeze_detector(det)
        assert isinstance(frozen, focusdet.FrozenDetector)
        assert all(not p.requires_grad for p in frozen.detector.parameters())

    def test_verify_passes_untouched(self):
        assert focusdet.freeze_detector(small_det()).verify() is True

    def test_verify_catches_tampering(self):
        frozen = focusdet.freeze_detector(small_det())
        with torch.no_grad():
            next(frozen.detector.parameters()).mul_(1.001)
        with pytest.raises(RuntimeError, match="checksum mismatch"):
            frozen.verify()


class TestPredictFpm:
    def test_shape_and_range(self, sample64):
        det = small_det()
        out = focusdet.predict_fpm(det, sample64.s1, sample64.s2)
        assert out.shape == sample64.s1.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_accepts_frozen(self, sample64):
        frozen = focusdet.freeze_detector(small_det(1))
        out = focusdet.predict_fpm(frozen, sample64.s1, sample64.s2)
        assert out.shape == sample64.s1.shape

    def test_argument_order_matters(self, sample64):
        det = small_det(2)
        a = focusdet.predict_fpm(det, sample64.s1, sample64.s2)
        b = focusdet.predict_fpm(det, sample64.s2, sample64.s1)
        assert not np.array_equal(a, b)

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="size mismatch"):
            focusdet.predict_fpm(small_det(), np.zeros((32, 32)),
                                 np.zeros((32, 48)))

    def test_bad_rank(self):
        with pytest.raises(ValueError, match="2-D"):
            focusdet.predict_fpm(small_det(), np.zeros((1, 32, 32)),
                                 np.zeros((1, 32, 32)))


class TestMiou:
    def test_perfect(self):
        t = (np.arange(64).reshape(8, 8) % 3 == 0).astype(float)
        assert focusdet.miou(t, t) == 1.0

    def test_inverted(self):
        t = np.zeros((8, 8))
        t[:4] = 1.0
        assert focusdet.miou(1.0 - t, t) == 0.0

    def test_hand_case(self):
        # truth: left half focus.  pred: all focus.
        # class1 IoU = 32/64, class0 IoU = 0/32 -> mean 0.25
        t = np.zeros((8, 8))
        t[:, :4] = 1.0
        p = np.ones((8, 8))
        assert focusdet.miou(p, t) == pytest.approx(0.25)

    def test_empty_union_counts_as_perfect(self):
        ones = np.ones((8, 8))
        assert focusdet.miou(ones, ones) == 1.0

    def test_soft_predictions_thresholded(self):
        t = np.zeros((4, 4))
        t[0, 0] = 1.0
        p = np.full((4, 4), 0.4)
        p[0, 0] = 0.6
        assert focusdet.miou(p, t) == 1.0
        assert focusdet.miou(p, t, threshold=0.3) < 1.0

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="size mismatch"):
            focusdet.miou(np.zeros((4, 4)), np.zeros((4, 5)))


class TestDetectorLoss:
    def test_finite_and_positive(self, sample64):
        val = focusdet.detector_loss(small_det(), sample64)
        assert np.isfinite(val)
        assert val > 0.0

    def test_perfect_detector_bound(self, sample64):
        # an untrained net must do worse than predicting the mean everywhere
        val = focusdet.detector_loss(small_det(5), sample64)
        cov = sample64.fpm.mean()
        base = cov * (1 - cov)
        assert val > 0.1 * base


class TestTrainDetector:
    def test_smoke_and_determinism(self, tiny_dataset):
        cfg = trainer.TrainConfig(epochs=2, batch_size=4, seed=9)
        det1, log1 = focusdet.train_detector(tiny_dataset, cfg, base_width=4)
        det2, log2 = focusdet.train_detector(tiny_dataset, cfg, base_width=4)
        assert focusdet.param_checksum(det1) == focusdet.param_checksum(det2)
        assert len(log1.epochs) == 2
        for rec in log1.epochs:
            assert np.isfinite(rec.train_loss)
            assert 0.0 <= rec.val_miou <= 1.0
        assert [r.train_loss for r in log1.epochs] == \
            [r.train_loss for r in log2.epochs]

    def test_loss_improves(self, tiny_dataset):
        cfg = trainer.TrainConfig(epochs=3, batch_size=4, seed=9, lr=3e-3)
        _, log = focusdet.train_detector(tiny_dataset, cfg, base_width=4)
        assert log.epochs[-1].train_loss < log.epochs[0].train_loss

    def test_empty_dataset(self):
        from dcfuse import imagio
        man = imagio.DatasetManifest([], root=".")
        cfg = trainer.TrainConfig(epochs=1)
        with pytest.raises(ValueError, match="empty"):
            focusdet.train_detector(man, cfg)
