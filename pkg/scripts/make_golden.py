"""Regenerate the committed metric reference images and values.

Builds three small fusion cases from the synthetic pipeline, saves every
image as 16-bit PNG under tests/golden/, reloads them, and records the
metric values computed by the independent reference implementations in
tests/oracles.py.  The stored JSON is what the test suite compares the
package's own metrics against, so this script must never import the
package's metric code for the values it writes.

Run from the repository root:

    python3 scripts/make_golden.py
"""
import json
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "tests"))
sys.path.insert(0, os.path.join(ROOT, "src"))

import oracles as orc  # noqa: E402
from dcfuse import datasynth, imagio  # noqa: E402

GOLDEN_DIR = os.path.join(ROOT, "tests", "golden")

# (name, phantom/fpm seed, blur sigma, fused builder)
CASES = [
    ("identity", 101, 2.5, lambda s: s.gt),
    ("average", 202, 3.5, lambda s: 0.5 * (s.s1 + s.s2)),
    ("onesided", 303, 1.5, lambda s: s.s1),
]


def build_case(name, seed, sigma, make_fused):
    gt = datasynth.vessel_phantom(64, seed)
    fpm = datasynth.random_fpm(64, 64, seed)
    sample = datasynth.synthesize_pair(gt, fpm, sigma, seed=seed)
    case_dir = os.path.join(GOLDEN_DIR, name)
    os.makedirs(case_dir, exist_ok=True)
    images = {"S1": sample.s1, "S2": sample.s2, "GT": sample.gt,
              "FUSED": make_fused(sample)}
    for key, img in images.items():
        imagio.save_image(img, os.path.join(case_dir, key + ".png"), 16)
    # metric inputs are the quantized on-disk images, not the float originals
    loaded = {key: imagio.load_image(os.path.join(case_dir, key + ".png"))
              for key in images}
    f, s1, s2, gt = (loaded[k] for k in ("FUSED", "S1", "S2", "GT"))
    return {
        "q_e": orc.q_e_ref(f, s1, s2),
        "q_cv": orc.q_cv_ref(f, s1, s2),
        "q_p": orc.q_p_ref(f, s1, s2),
        "sd": orc.sd_ref(f),
        "psnr": orc.psnr_ref(f, gt),
        "mse": orc.mse_ref(f, gt),
        "ssim": orc.ssim_valid_ref(f, gt),
    }


def main():
    golden = {name: build_case(name, seed, sigma, fn)
              for name, seed, sigma, fn in CASES}
    out = os.path.join(GOLDEN_DIR, "metrics_golden.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(golden, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, vals in golden.items():
        print(name)
        for metric, value in sorted(vals.items()):
            print(f"  {metric:5s} {value!r}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
