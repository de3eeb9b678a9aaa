"""Grayscale image and manifest I/O shared by the rest of the package.

Images travel through the library as 2-D float arrays with intensities in
[0, 1].  On disk they are lossless single-channel PNG rasters, 8- or 16-bit;
binary focus masks are stored as 8-bit {0, 255}.  Dataset manifests are
line-delimited JSON with one sample record per line and paths kept relative
to the manifest location, so a dataset directory can be moved or compared
byte-for-byte across machines.
"""

import json
import os

import numpy as np
from PIL import Image

MANIFEST_KEYS = ("id", "path_S1", "path_S2", "path_GT", "path_FPM",
                 "height", "width", "seed")

__all__ = [
    "load_image", "save_image", "crop", "augment", "AUGMENT_OPS",
    "require_gray", "require_same_shape",
    "DatasetManifest", "write_manifest", "read_manifest",
]


def require_gray(img, name="image"):
    """Validate a [0,1] single-channel float image, returning it as float64.

    Parameters
    ----------
    img : ndarray
        Candidate image, shape (H, W).
    name : str
        Label used in error messages.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"{name} values outside [0,1]: min {arr.min():.6g}, max {arr.max():.6g}")
    return arr


def require_same_shape(*imgs, names=None):
    shapes = [np.asarray(im).shape for im in imgs]
    if len(set(shapes)) > 1:
        labels = names or [f"arg{i}" for i in range(len(imgs))]
        detail = ", ".join(f"{n}={s}" for n, s in zip(labels, shapes))
        raise ValueError(f"shape mismatch: {detail}")


def load_image(path):
    """Read an 8- or 16-bit single-channel raster into a [0,1] float image.

    Intensities are mapped linearly, v / (2^bits - 1).  Multi-channel files
    are rejected rather than silently converted.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image: {path}")
    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            arr = np.asarray(im, dtype=np.float64)
            scale = 255.0
        elif mode in ("I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=np.float64)
            scale = 65535.0
        elif mode == "I":
            # 16-bit PNGs decode to 32-bit int mode in some Pillow versions.
            arr = np.asarray(im, dtype=np.float64)
            if arr.max() > 65535:
                raise ValueError(f"unsupported bit depth in {path}")
            scale = 65535.0
        else:
            raise ValueError(
                f"unsupported image mode '{mode}' in {path}; "
                "expected single-channel 8- or 16-bit")
    return arr / scale


def save_image(img, path, bit_depth=16):
    """Write a [0,1] image as a lossless single-channel PNG.

    Parameters
    ----------
    img : ndarray
        Image to store; validated against the [0,1] contract.
    path : str
        Destination file; parent directory must exist.
    bit_depth : {8, 16}
        Stored precision.  Round trip differs from `img` by at most half a
        quantization step per pixel.
    """
    arr = require_gray(img)
    if bit_depth == 8:
        q = np.rint(arr * 255.0).astype(np.uint8)
        pil = Image.fromarray(q, mode="L")
    elif bit_depth == 16:
        q = np.rint(arr * 65535.0).astype(np.uint16)
        pil = Image.fromarray(q)
        if pil.mode not in ("I;16", "I"):
            raise ValueError(f"unexpected 16-bit encode mode {pil.mode}")
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    pil.save(path, format="PNG")


def crop(img, x, y, w, h):
    """Extract the exact sub-raster of size (h, w) at top-left column x, row y."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"crop expects a 2-D image, got shape {arr.shape}")
    H, W = arr.shape
    if w < 1 or h < 1:
        raise ValueError(f"crop size must be positive, got {w}x{h}")
    if x < 0 or y < 0 or x + w > W or y + h > H:
        raise ValueError(
            f"crop window ({x},{y},{w},{h}) outside image bounds {W}x{H}")
    return arr[y:y + h, x:x + w].copy()


AUGMENT_OPS = ("hflip", "vflip", "rot90", "rot180", "rot270")


def augment(img, op, paired=()):
    """Apply one geometric transform identically to an image group.

    The group is the primary image plus any paired rasters (sources, ground
    truth, masks); applying the same op keeps them pixel-registered.

    Returns
    -------
    list of ndarray
        Transformed [img, *paired] in order.
    """
    group = [np.asarray(im) for im in (img, *paired)]
    require_same_shape(*group)
    if op == "hflip":
        f = lambda a: a[:, ::-1]
    elif op == "vflip":
        f = lambda a: a[::-1, :]
    elif op == "rot90":
        f = lambda a: np.rot90(a, 1)
    elif op == "rot180":
        f = lambda a: np.rot90(a, 2)
    elif op == "rot270":
        f = lambda a: np.rot90(a, 3)
    else:
        raise ValueError(f"unknown augment op '{op}'; expected one of {AUGMENT_OPS}")
    return [np.ascontiguousarray(f(a)) for a in group]


class DatasetManifest:
    """Ordered collection of sample records backed by a JSONL file.

    Each record holds {id, path_S1, path_S2, path_GT, path_FPM, height,
    width, seed} with paths relative to the manifest's directory.
    """

    def __init__(self, entries, root="."):
        self.entries = list(entries)
        self.root = root
        ids = [e["id"] for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids are not unique")
        for e in self.entries:
            missing = [k for k in MANIFEST_KEYS if k not in e]
            if missing:
                raise ValueError(f"manifest record {e.get('id')} missing {missing}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def resolve(self, entry, key):
        """Absolute path for one of the entry's path_* fields."""
        return os.path.join(self.root, entry[key])

    def validate_files(self):
        """Check every referenced file exists and decodes at the declared size."""
        for e in self.entries:
            for key in ("path_S1", "path_S2", "path_GT", "path_FPM"):
                p = self.resolve(e, key)
                img = load_image(p)
                if img.shape != (e["height"], e["width"]):
                    raise ValueError(
                        f"{p}: size {img.shape} does not match manifest "
                        f"({e['height']}, {e['width']})")

    def save(self, path):
        write_manifest(self.entries, path)

    @classmethod
    def load(cls, path):
        return read_manifest(path)


def write_manifest(entries, path):
    """Write sample records as line-delimited JSON with stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            rec = {k: e[k] for k in MANIFEST_KEYS}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such manifest: {path}")
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad manifest line") from exc
    return DatasetManifest(entries, root=os.path.dirname(os.path.abspath(path)))
