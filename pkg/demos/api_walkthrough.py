"""Fuse the committed demo pair through the Python API and score it.

Loads the two partially focused source images, runs the bundled
demo-scale checkpoint, prints the metric battery against each source and
the ground truth, and saves the fused image plus the per-pixel decision
map next to this script's output directory.

    python3 demos/api_walkthrough.py [out_dir]
"""
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(
    os.path.abspath(__file__))), "src"))

from dcfuse import fusenet, imagio, metrics, trainer

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PAIR = os.path.join(ROOT, "assets", "pair")


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
    os.makedirs(out_dir, exist_ok=True)

    s1 = imagio.load_image(os.path.join(PAIR, "S1.png"))
    s2 = imagio.load_image(os.path.join(PAIR, "S2.png"))
    gt = imagio.load_image(os.path.join(PAIR, "GT.png"))
    model = trainer.restore_fusion(
        os.path.join(ROOT, "assets", "toy_fusion.ckpt"))

    fused = fusenet.fuse(model, s1, s2)
    imagio.save_image(fused, os.path.join(out_dir, "fused.png"), 16)

    # where each source wins the focus comparison, at feature resolution
    f1 = fusenet.extract_features(model, s1)
    f2 = fusenet.extract_features(model, s2)
    d = fusenet.decision_tensor(fusenet.channel_sf(f1, model.window),
                                fusenet.channel_sf(f2, model.window))
    decision = np.asarray(d.mean(axis=0))
    imagio.save_image(decision, os.path.join(out_dir, "decision.png"), 8)

    print(f"{'image':8s} {'psnr':>7s} {'ssim':>7s} {'q_e':>7s} {'sd':>7s}")
    for name, img in (("s1", s1), ("s2", s2), ("fused", fused)):
        print(f"{name:8s} {metrics.psnr(img, gt):7.2f} "
              f"{metrics.ssim_metric(img, gt):7.4f} "
              f"{metrics.q_e(img, s1, s2):7.4f} "
              f"{metrics.sd(img):7.2f}")
    share = float(np.mean(decision >= 0.5))
    print(f"decision map: {100 * share:.1f}% of pixels favor S1 features")
    print(f"outputs under {out_dir}/")


if __name__ == "__main__":
    main()
