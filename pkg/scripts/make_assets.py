"""Regenerate the committed demo assets.

Produces a small all-in-focus image, one synthetic defocus pair derived
from it, and a briefly trained fusion checkpoint, so the fuse and
evaluate commands work straight from a checkout.  Everything is seeded;
rerunning the script reproduces the same bytes.

Run from the repository root:

    python3 scripts/make_assets.py
"""
import os
import sys
import tempfile

import torch

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from dcfuse import datasynth, focusdet, fusenet, imagio, losses, trainer  # noqa: E402

ASSET_DIR = os.path.join(ROOT, "assets")
SEED = 8


def main():
    torch.set_num_threads(1)
    os.makedirs(ASSET_DIR, exist_ok=True)

    sharp = datasynth.vessel_phantom(96, SEED)
    sharp_path = os.path.join(ASSET_DIR, "vessels.png")
    imagio.save_image(sharp, sharp_path, 16)
    print(f"wrote {sharp_path}")

    fpm = datasynth.random_fpm(96, 96, SEED)
    sample = datasynth.synthesize_pair(sharp, fpm, 3.0, seed=SEED)
    pair_dir = os.path.join(ASSET_DIR, "pair")
    os.makedirs(pair_dir, exist_ok=True)
    for key, img in (("S1", sample.s1), ("S2", sample.s2),
                     ("GT", sample.gt), ("FPM", sample.fpm)):
        imagio.save_image(img, os.path.join(pair_dir, key + ".png"), 16)
    print(f"wrote {pair_dir}/S1,S2,GT,FPM.png")

    # short training pass purely so the committed checkpoint fuses sensibly
    with tempfile.TemporaryDirectory() as tmp:
        src_dir = os.path.join(tmp, "src")
        os.makedirs(src_dir)
        imagio.save_image(sharp, os.path.join(src_dir, "vessels.png"), 16)
        data = datasynth.build_dataset(src_dir, os.path.join(tmp, "data"),
                                       tile=64, crop=48, count=48, seed=SEED)
        det_cfg = trainer.TrainConfig(epochs=16, seed=SEED)
        det, _ = focusdet.train_detector(data, det_cfg, base_width=8)
        frozen = focusdet.freeze_detector(det)
        fus_cfg = trainer.TrainConfig(epochs=30, seed=SEED)
        torch.manual_seed(fus_cfg.seed)
        model = fusenet.FusionModel()
        model, log = trainer.train_fusion(
            model, frozen, data, fus_cfg,
            backbone=losses.DetectorEncoderBackbone(frozen))

    ckpt_path = os.path.join(ASSET_DIR, "toy_fusion.ckpt")
    trainer.checkpoint(model, ckpt_path, meta={
        "seed": fus_cfg.seed, "epochs": fus_cfg.epochs,
        "best_epoch": log.best_epoch, "note": "demo-scale training only"})
    print(f"wrote {ckpt_path} (best epoch {log.best_epoch})")


if __name__ == "__main__":
    main()
