"""Synthetic multi-focus pair generation.

A training sample starts from an all-in-focus tile.  A random binary focus
map decides which pixels stay sharp in the first source; the complementary
region stays sharp in the second.  The out-of-focus region of each source is
the tile convolved with a normalized Gaussian kernel.  Samples are derived
from per-id sub-seeds so parallel and serial builds produce identical bytes.
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d, gaussian_filter

from . import imagio

SOURCE_EXTENSIONS = (".png", ".tif", ".tiff")
SIGMA_RANGE = (2.0, 5.0)

__all__ = [
    "MultiFocusSample", "random_fpm", "gaussian_defocus", "synthesize_pair",
    "vessel_phantom", "build_dataset", "load_sample",
]


@dataclass
class MultiFocusSample:
    """One training tuple: two partially focused sources, the sharp image,
    and the binary map of where the first source is in focus."""
    s1: np.ndarray
    s2: np.ndarray
    gt: np.ndarray
    fpm: np.ndarray
    seed: int = 0

    def validate(self):
        imagio.require_same_shape(self.s1, self.s2, self.gt, self.fpm,
                                  names=["S1", "S2", "GT", "FPM"])
        vals = np.unique(self.fpm)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError(f"focus map values must be exactly 0/1, got {vals[:8]}")


def random_fpm(h, w, seed, smoothness=8.0):
    """Generate a smooth random binary focus map.

    White noise is Gaussian-smoothed with the given spatial scale and
    thresholded at its median, producing curved blob-shaped regions with
    near-balanced coverage.  Regenerates if either class would cover less
    than 10% of the map.
    """
    if h < 16 or w < 16:
        raise ValueError(f"focus map size must be at least 16x16, got {h}x{w}")
    if smoothness <= 0:
        raise ValueError("smoothness must be positive")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), 0xF9))))
    for _ in range(64):
        noise = rng.standard_normal((h, w))
        field = gaussian_filter(noise, sigma=float(smoothness), mode="reflect")
        mask = (field > np.median(field)).astype(np.float64)
        cov = mask.mean()
        if 0.10 <= cov <= 0.90:
            return mask
    raise RuntimeError("could not generate a focus map with balanced coverage")


def _gaussian_kernel1d(sigma):
    # Truncated at radius ceil(3*sigma), renormalized to unit sum.
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_defocus(img, sigma):
    """Blur with a normalized 2-D Gaussian, replicate padding at borders."""
    arr = imagio.require_gray(img)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    k = _gaussian_kernel1d(float(sigma))
    out = correlate1d(arr, k, axis=0, mode="nearest")
    out = correlate1d(out, k, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def synthesize_pair(gt, fpm, sigma, seed=0):
    """Build a two-focus pair from a sharp image and a binary focus map.

    S1 keeps the sharp pixels where fpm=1 and is defocused elsewhere; S2 is
    the complement.  Selection is an exact pixel copy, so S1 equals GT on
    the fpm=1 region bit-for-bit.
    """
    gt = imagio.require_gray(gt, "GT")
    fpm = np.asarray(fpm, dtype=np.float64)
    imagio.require_same_shape(gt, fpm, names=["GT", "FPM"])
    blurred = gaussian_defocus(gt, sigma)
    focus1 = fpm > 0.5
    s1 = np.where(focus1, gt, blurred)
    s2 = np.where(focus1, blurred, gt)
    sample = MultiFocusSample(s1=s1, s2=s2, gt=gt,
                              fpm=focus1.astype(np.float64), seed=int(seed))
    sample.validate()
    return sample


def _stamp(img, cy, cx, patch):
    # accumulate a small patch centered at (cy, cx), clipped at the borders
    h, w = img.shape
    ph, pw = patch.shape
    y0 = cy - ph // 2
    x0 = cx - pw // 2
    ys, xs = max(y0, 0), max(x0, 0)
    ye, xe = min(y0 + ph, h), min(x0 + pw, w)
    if ys >= ye or xs >= xe:
        return
    img[ys:ye, xs:xe] += patch[ys - y0:ye - y0, xs - x0:xe - x0]


def _gauss_patch(sigma, amp):
    r = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return amp * (g[:, None] * g[None, :])


def vessel_phantom(size, seed, n_vessels=18, n_spots=40):
    """Procedural sharp test image: curvy bright filaments over scattered
    blobs on a dim background, loosely styled after maximum-projection
    micrographs.  Deterministic in (size, seed); values span [0, 1] with
    plenty of high-frequency content, which is what makes defocus visibly
    destructive in synthesized pairs.
    """
    ss = np.random.SeedSequence((int(seed), 0xE5))
    rng = np.random.Generator(np.random.PCG64(ss))
    img = np.zeros((size, size), dtype=np.float64)
    for _ in range(n_spots):
        cy, cx = rng.integers(0, size, 2)
        patch = _gauss_patch(float(rng.uniform(1.0, 3.0)),
                             float(rng.uniform(0.25, 0.8)))
        _stamp(img, int(cy), int(cx), patch)
    for _ in range(n_vessels):
        y, x = rng.uniform(0, size, 2)
        heading = rng.uniform(0, 2 * np.pi)
        width = float(rng.uniform(0.6, 1.4))
        amp = float(rng.uniform(0.5, 1.0))
        steps = int(rng.integers(size, 3 * size))
        patch = _gauss_patch(width, amp * 0.25)
        for _ in range(steps):
            _stamp(img, int(round(y)), int(round(x)), patch)
            heading += rng.normal(0.0, 0.15)
            y += np.sin(heading)
            x += np.cos(heading)
            if not (-size * 0.1 < y < size * 1.1 and -size * 0.1 < x < size * 1.1):
                break
    # low-frequency illumination field keeps flat areas off exact zero
    yy = np.linspace(0.0, 1.0, size)[:, None]
    xx = np.linspace(0.0, 1.0, size)[None, :]
    img += 0.08 * (yy * float(rng.uniform(0.3, 1.0))
                   + xx * float(rng.uniform(0.3, 1.0)))
    # fine speckle textures the background too; without it, focus state is
    # undecidable in structure-free areas and defocus leaves them untouched
    speckle = gaussian_filter(rng.standard_normal((size, size)), sigma=0.8,
                              mode="reflect")
    img += 0.035 * speckle / max(float(speckle.std()), 1e-12)
    hi = np.quantile(img, 0.999)
    if hi > 0:
        img = img / hi
    return np.clip(img, 0.0, 1.0) * 0.94 + 0.03


MAX_SOURCE_FIDELITY_DB = 40.0


def _informative(s1, s2, gt, fpm):
    # keep a crop only when both focus classes are present and each source
    # is measurably degraded somewhere; a window where one source matches
    # the sharp image gives the fusion task nothing to recover
    cov = float(fpm.mean())
    if not 0.10 <= cov <= 0.90:
        return False
    for s in (s1, s2):
        err = float(np.mean((s - gt) ** 2))
        if err <= 0 or 10.0 * np.log10(1.0 / err) > MAX_SOURCE_FIDELITY_DB:
            return False
    return True


def _usable_sources(source_dir, tile):
    if not os.path.isdir(source_dir):
        raise FileNotFoundError(f"no such source directory: {source_dir}")
    names = sorted(n for n in os.listdir(source_dir)
                   if n.lower().endswith(SOURCE_EXTENSIONS))
    usable = []
    for n in names:
        path = os.path.join(source_dir, n)
        img = imagio.load_image(path)
        if img.shape[0] >= tile and img.shape[1] >= tile:
            usable.append((n, img))
    if not names:
        raise ValueError(f"source directory {source_dir} contains no images")
    if not usable:
        raise ValueError(
            f"no source image in {source_dir} is at least {tile}x{tile}")
    return usable


def build_dataset(source_dir, out_dir, tile=128, crop=64, count=1000, seed=0,
                  smoothness=None, sigma_range=SIGMA_RANGE, flip_p=0.5):
    """Synthesize `count` training samples and write them plus a manifest.

    Each sample: pick a source image, cut a random tile, generate a focus
    map at tile scale, defocus with a per-sample sigma drawn uniformly from
    `sigma_range`, crop the group down to the training size, and apply
    horizontal/vertical flips with probability `flip_p` each.  The focus map
    and crop window are redrawn (bounded attempts, best effort) until the
    emitted crop holds both focus classes and both sources differ visibly
    from the sharp image.  Everything is derived from a per-sample sub-seed
    of (seed, index), so rebuilds are byte-identical.

    Returns the written DatasetManifest.
    """
    if crop > tile:
        raise ValueError(f"crop {crop} exceeds tile {tile}")
    if smoothness is None:
        smoothness = tile / 16.0
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    if count > 0:
        sources = _usable_sources(source_dir, tile)
        img_dir = os.path.join(out_dir, "images")
        os.makedirs(img_dir, exist_ok=True)
        for idx in range(count):
            ss = np.random.SeedSequence((int(seed), idx))
            rng = np.random.Generator(np.random.PCG64(ss))
            sample_seed = int(ss.generate_state(1, np.uint32)[0])
            _, src = sources[int(rng.integers(len(sources)))]
            ty = int(rng.integers(src.shape[0] - tile + 1))
            tx = int(rng.integers(src.shape[1] - tile + 1))
            gt_tile = imagio.crop(src, tx, ty, tile, tile)
            sigma = float(rng.uniform(*sigma_range))
            for _ in range(64):
                fpm = random_fpm(tile, tile, int(rng.integers(2 ** 31)),
                                 smoothness)
                sample = synthesize_pair(gt_tile, fpm, sigma, seed=sample_seed)
                group = [sample.s1, sample.s2, sample.gt, sample.fpm]
                if crop < tile:
                    cy = int(rng.integers(tile - crop + 1))
                    cx = int(rng.integers(tile - crop + 1))
                    group = [imagio.crop(g, cx, cy, crop, crop) for g in group]
                if _informative(*group):
                    break
            if rng.random() < flip_p:
                group = imagio.augment(group[0], "hflip", group[1:])
            if rng.random() < flip_p:
                group = imagio.augment(group[0], "vflip", group[1:])
            s1, s2, gt, fpm_c = group
            sid = f"s{idx:06d}"
            rel = {
                "path_S1": f"images/{sid}_S1.png",
                "path_S2": f"images/{sid}_S2.png",
                "path_GT": f"images/{sid}_GT.png",
                "path_FPM": f"images/{sid}_FPM.png",
            }
            imagio.save_image(s1, os.path.join(out_dir, rel["path_S1"]), 16)
            imagio.save_image(s2, os.path.join(out_dir, rel["path_S2"]), 16)
            imagio.save_image(gt, os.path.join(out_dir, rel["path_GT"]), 16)
            imagio.save_image(fpm_c, os.path.join(out_dir, rel["path_FPM"]), 8)
            entries.append({"id": sid, **rel, "height": crop, "width": crop,
                            "seed": sample_seed})
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    imagio.write_manifest(entries, manifest_path)
    return imagio.DatasetManifest(entries, root=os.path.abspath(out_dir))


def load_sample(manifest, entry):
    """Load one manifest record back into a MultiFocusSample."""
    if isinstance(entry, int):
        entry = manifest[entry]
    s1 = imagio.load_image(manifest.resolve(entry, "path_S1"))
    s2 = imagio.load_image(manifest.resolve(entry, "path_S2"))
    gt = imagio.load_image(manifest.resolve(entry, "path_GT"))
    fpm = imagio.load_image(manifest.resolve(entry, "path_FPM"))
    if not np.all(np.isin(np.unique(fpm), (0.0, 1.0))):
        raise ValueError(f"{entry['id']}: stored focus map is not binary")
    sample = MultiFocusSample(s1=s1, s2=s2, gt=gt, fpm=fpm,
                              seed=int(entry.get("seed", 0)))
    sample.validate()
    return sample
