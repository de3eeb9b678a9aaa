import hashlib
import os

import numpy as np
import pytest
import torch

from dcfuse import focusdet, fusenet, losses, trainer


class TestTrainConfig:
    def test_defaults(self):
        cfg = trainer.TrainConfig()
        assert cfg.lr == 1e-3
        assert cfg.beta1 == 0.9
        assert cfg.beta2 == 0.99
        assert cfg.epsilon == 1e-8
        assert cfg.decay_rate == 0.9
        assert cfg.decay_every == 5
        assert cfg.batch_size == 16
        assert cfg.epochs == 120
        assert cfg.dfpp_enabled is True

    def test_dict_roundtrip(self):
        cfg = trainer.TrainConfig(lr=3e-4, epochs=7, seed=42,
                                  dfpp_enabled=False,
                                  weights=losses.LossWeights(alpha3=4.0))
        back = trainer.TrainConfig.from_dict(cfg.to_dict())
        assert back == cfg
        assert back.weights.alpha3 == 4.0

    def test_from_dict_rejects_unknown(self):
        with pytest.raises((TypeError, ValueError)):
            trainer.TrainConfig.from_dict({"lr": 1e-3, "bogus": 1})


class TestSchedule:
    def test_scheduled_lr_steps(self):
        cfg = trainer.TrainConfig(lr=1e-3, decay_rate=0.9, decay_every=5)
        assert trainer.scheduled_lr(cfg, 0) == 1e-3
        assert trainer.scheduled_lr(cfg, 4) == 1e-3
        assert trainer.scheduled_lr(cfg, 5) == pytest.approx(9e-4)
        assert trainer.scheduled_lr(cfg, 14) == pytest.approx(1e-3 * 0.9 ** 2)
        assert trainer.scheduled_lr(cfg, 120) == pytest.approx(1e-3 * 0.9 ** 24)

    def test_epoch_order_is_permutation(self):
        order = trainer.epoch_order(3, 2, 50)
        assert sorted(order) == list(range(50))

    def test_epoch_order_deterministic_and_epoch_sensitive(self):
        assert trainer.epoch_order(3, 2, 50) == trainer.epoch_order(3, 2, 50)
        assert trainer.epoch_order(3, 2, 50) != trainer.epoch_order(3, 3, 50)
        assert trainer.epoch_order(3, 2, 50) != trainer.epoch_order(4, 2, 50)


class TestValidationSplit:
    def test_partition(self, tiny_dataset):
        train, val = trainer.validation_split(tiny_dataset)
        ids = {e["id"] for e in tiny_dataset}
        assert {e["id"] for e in train} | {e["id"] for e in val} == ids
        assert not ({e["id"] for e in train} & {e["id"] for e in val})

    def test_membership_matches_hash_rule(self, tiny_dataset):
        train, val = trainer.validation_split(tiny_dataset)
        for e in tiny_dataset:
            h = int.from_bytes(
                hashlib.sha256(e["id"].encode()).digest()[:8], "big")
            expect_val = (h % 10 == 0)
            assert (e in val) == expect_val

    def test_fraction_mod(self, tiny_dataset):
        train, val = trainer.validation_split(tiny_dataset, fraction_mod=1)
        assert not train
        assert len(val) == len(tiny_dataset)


class TestAdamStep:
    def test_single_step_hand_computed(self):
        cfg = trainer.TrainConfig(lr=0.1, beta1=0.9, beta2=0.99, epsilon=1e-8)
        p = torch.tensor([1.0, -2.0], dtype=torch.float64)
        g = torch.tensor([0.5, -1.5], dtype=torch.float64)
        state = trainer.AdamState.for_params([p])
        trainer.adam_step([p], [g], state, cfg)
        # bias-corrected first step reduces to p - lr * g/(|g| + eps)
        want = np.array([1.0, -2.0]) - 0.1 * np.sign([0.5, -1.5])
        assert np.allclose(p.numpy(), want, atol=1e-6)
        assert state.t == 1

    def test_three_steps_match_torch_adam(self):
        cfg = trainer.TrainConfig(lr=0.05, beta1=0.9, beta2=0.99, epsilon=1e-8)
        torch.manual_seed(0)
        init = torch.randn(4, dtype=torch.float64)
        target = torch.tensor([1.0, -1.0, 2.0, 0.5], dtype=torch.float64)

        mine = init.clone()
        state = trainer.AdamState.for_params([mine])
        ref = init.clone().requires_grad_(True)
        opt = torch.optim.Adam([ref], lr=0.05, betas=(0.9, 0.99), eps=1e-8)
        for _ in range(3):
            g = 2.0 * (mine - target)
            trainer.adam_step([mine], [g], state, cfg)
            opt.zero_grad()
            ((ref - target) ** 2).sum().backward()
            opt.step()
        assert torch.allclose(mine, ref.detach(), atol=1e-10)

    def test_none_grad_skips_param(self):
        cfg = trainer.TrainConfig(lr=0.1)
        p = torch.tensor([1.0])
        state = trainer.AdamState.for_params([p])
        trainer.adam_step([p], [None], state, cfg)
        assert float(p[0]) == 1.0

    def test_lr_override(self):
        cfg = trainer.TrainConfig(lr=0.1)
        p = torch.tensor([1.0], dtype=torch.float64)
        g = torch.tensor([1.0], dtype=torch.float64)
        state = trainer.AdamState.for_params([p])
        trainer.adam_step([p], [g], state, cfg, lr=0.01)
        assert float(p[0]) == pytest.approx(0.99, abs=1e-6)

    def test_shape_mismatch(self):
        cfg = trainer.TrainConfig()
        p = torch.zeros(3)
        state = trainer.AdamState.for_params([p])
        with pytest.raises(ValueError, match="shape"):
            trainer.adam_step([p], [torch.zeros(4)], state, cfg)

    def test_count_mismatch(self):
        cfg = trainer.TrainConfig()
        p = torch.zeros(3)
        state = trainer.AdamState.for_params([p])
        with pytest.raises(ValueError, match="grads"):
            trainer.adam_step([p], [], state, cfg)


class TestCheckpoint:
    def test_fusion_roundtrip(self, tmp_path):
        torch.manual_seed(4)
        model = fusenet.FusionModel(base_channels=4)
        path = str(tmp_path / "m.ckpt")
        trainer.checkpoint(model, path, meta={"note": "unit"})
        back, meta = trainer.restore_fusion(path, with_meta=True)
        assert meta["note"] == "unit"
        assert back.arch() == model.arch()
        for (ka, ta), (kb, tb) in zip(model.state_dict().items(),
                                      back.state_dict().items()):
            assert ka == kb
            assert torch.equal(ta, tb)

    def test_detector_roundtrip(self, tmp_path):
        torch.manual_seed(5)
        det = focusdet.FocusDetector(base_width=4)
        path = str(tmp_path / "d.ckpt")
        trainer.checkpoint(det, path)
        back = trainer.restore_detector(path)
        assert focusdet.param_checksum(back) == focusdet.param_checksum(det)

    def test_kind_mixup_rejected(self, tmp_path):
        torch.manual_seed(5)
        det = focusdet.FocusDetector(base_width=4)
        path = str(tmp_path / "d.ckpt")
        trainer.checkpoint(det, path)
        with pytest.raises(trainer.ArchitectureMismatch):
            trainer.restore_fusion(path)

    def test_bit_flip_detected(self, tmp_path):
        torch.manual_seed(6)
        model = fusenet.FusionModel(base_channels=4)
        path = str(tmp_path / "m.ckpt")
        trainer.checkpoint(model, path)
        raw = bytearray(open(path, "rb").read())
        raw[len(raw) // 2] ^= 0x40
        with open(path, "wb") as fh:
            fh.write(raw)
        with pytest.raises(trainer.ChecksumError, match="corrupt"):
            trainer.restore(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = str(tmp_path / "junk.ckpt")
        with open(path, "wb") as fh:
            fh.write(b"PNG not really a checkpoint file")
        with pytest.raises(trainer.CheckpointError, match="not a checkpoint"):
            trainer.restore(path)

    def test_rerun_identical_bytes(self, tmp_path):
        torch.manual_seed(7)
        model = fusenet.FusionModel(base_channels=4)
        p1 = str(tmp_path / "a.ckpt")
        p2 = str(tmp_path / "b.ckpt")
        trainer.checkpoint(model, p1, meta={"k": 1})
        trainer.checkpoint(model, p2, meta={"k": 1})
        assert open(p1, "rb").read() == open(p2, "rb").read()


@pytest.fixture(scope="module")
def tiny_frozen():
    torch.manual_seed(11)
    return focusdet.freeze_detector(focusdet.FocusDetector(base_width=4))


def tiny_cfg(**kw):
    base = dict(epochs=2, batch_size=4, seed=13, lr=1e-3)
    base.update(kw)
    return trainer.TrainConfig(**base)


class TestTrainFusion:
    def test_smoke_log_and_artifacts(self, tiny_dataset, tiny_frozen, tmp_path):
        torch.manual_seed(1)
        model = fusenet.FusionModel(base_channels=4)
        out = str(tmp_path / "run")
        model, log = trainer.train_fusion(model, tiny_frozen, tiny_dataset,
                                          tiny_cfg(), out_dir=out,
                                          checkpoint_every=1)
        assert len(log.epochs) == 2
        for rec in log.epochs:
            assert np.isfinite(rec.train.total)
            assert np.isfinite(rec.val.total)
        assert os.path.isfile(os.path.join(out, "best.ckpt"))
        assert os.path.isfile(os.path.join(out, "epoch_0001.ckpt"))
        d = log.to_dict()
        assert "epochs" in d
        assert "wall" not in str(d)

    def test_deterministic_given_seed(self, tiny_dataset, tiny_frozen):
        out = []
        for _ in range(2):
            torch.manual_seed(99)  # overridden inside by cfg.seed
            model = fusenet.FusionModel(base_channels=4)
            model, log = trainer.train_fusion(model, tiny_frozen, tiny_dataset,
                                              tiny_cfg())
            out.append((focusdet.param_checksum(model),
                        [r.train.total for r in log.epochs]))
        assert out[0] == out[1]

    def test_loss_decreases(self, tiny_dataset, tiny_frozen):
        model = fusenet.FusionModel(base_channels=4)
        model, log = trainer.train_fusion(model, tiny_frozen, tiny_dataset,
                                          tiny_cfg(epochs=3))
        assert log.epochs[-1].train.total < log.epochs[0].train.total

    def test_dfpp_disabled_records_zero(self, tiny_dataset, tiny_frozen):
        model = fusenet.FusionModel(base_channels=4)
        model, log = trainer.train_fusion(
            model, tiny_frozen, tiny_dataset,
            tiny_cfg(epochs=1, dfpp_enabled=False))
        assert log.epochs[0].train.dfpp == 0.0

    def test_tampered_detector_aborts(self, tiny_dataset):
        torch.manual_seed(12)
        frozen = focusdet.freeze_detector(focusdet.FocusDetector(base_width=4))
        with torch.no_grad():
            next(frozen.detector.parameters()).mul_(1.01)
        model = fusenet.FusionModel(base_channels=4)
        with pytest.raises(RuntimeError, match="checksum"):
            trainer.train_fusion(model, frozen, tiny_dataset, tiny_cfg())

    def test_divergence_abort(self, tiny_dataset, tiny_frozen, tmp_path,
                              monkeypatch):
        def nan_loss(det, backbone, weights, fused, s1, s2, gt, fpm,
                     dfpp_enabled=True):
            bad = fused.sum() * torch.nan
            return {"total": bad, "dfpp": bad, "perceptual": bad,
                    "ssim": bad, "ffl": bad}

        monkeypatch.setattr(trainer._losses, "total_loss_t", nan_loss)
        model = fusenet.FusionModel(base_channels=4)
        out = str(tmp_path / "diverged")
        with pytest.raises(trainer.TrainingDiverged) as err:
            trainer.train_fusion(model, tiny_frozen, tiny_dataset, tiny_cfg(),
                                 out_dir=out)
        assert err.value.batch_ids
        assert os.path.isfile(os.path.join(out, "diverged_batch.npz"))

    def test_empty_dataset(self, tiny_frozen):
        from dcfuse import imagio
        man = imagio.DatasetManifest([], root=".")
        with pytest.raises(ValueError, match="empty"):
            trainer.train_fusion(fusenet.FusionModel(base_channels=4),
                                 tiny_frozen, man, tiny_cfg())
