"""Training losses for the fusion network.

Four components combine into the training objective: a decision-level
focus-property term driven by the frozen detector, a perceptual term over
deep feature maps, a structural-similarity term, and a focal frequency term
that re-weights hard frequencies each step.  The combination is
total = dfpp + alpha1*perceptual + alpha2*ssim + alpha3*ffl
with defaults alpha1=0.2, alpha2=1, alpha3=8.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import focusdet as _focusdet

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0

__all__ = [
    "LossWeights", "LossBreakdown", "BackboneUnavailable",
    "VGG19Backbone", "DetectorEncoderBackbone", "default_backbone",
    "dfpp_loss", "perceptual_loss", "ssim_loss", "ffl_loss", "ffl_weight",
    "total_loss", "total_loss_t",
]


class BackboneUnavailable(RuntimeError):
    pass


@dataclass
class LossWeights:
    alpha1: float = 0.2
    alpha2: float = 1.0
    alpha3: float = 8.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LossBreakdown:
    total: float
    dfpp: float
    perceptual: float
    ssim: float
    ffl: float

    def to_dict(self):
        return {"total": self.total, "dfpp": self.dfpp,
                "perceptual": self.perceptual, "ssim": self.ssim,
                "ffl": self.ffl}


# ---------------------------------------------------------------------------
# feature backbones for the perceptual term


class VGG19Backbone:
    """Pretrained VGG19 feature taps after the second convolution of each
    block.  Grayscale input is replicated to three channels and normalized
    with the backbone's training statistics.

    Requires pretrained natural-image weights: either downloadable in the
    environment or supplied as a local state-dict file.
    """

    name = "vgg19"
    TAPS = (3, 8, 13, 22, 31)

    def __init__(self, weights_path=None):
        try:
            import torchvision.models as tvm
        except ImportError as exc:
            raise BackboneUnavailable("torchvision is not installed") from exc
        if weights_path:
            net = tvm.vgg19(weights=None)
            sd = torch.load(weights_path, map_location="cpu", weights_only=True)
            net.load_state_dict(sd)
        else:
            try:
                net = tvm.vgg19(weights=tvm.VGG19_Weights.IMAGENET1K_V1)
            except Exception as exc:
                raise BackboneUnavailable(
                    "pretrained VGG19 weights unavailable; pass weights_path "
                    "or use the detector-encoder fallback") from exc
        self._net = net.features[:max(self.TAPS) + 1].eval()
        for p in self._net.parameters():
            p.requires_grad_(False)
        self._mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        self._std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)

    def __call__(self, x):
        if x.dtype != next(self._net.parameters()).dtype:
            self._net = self._net.to(x.dtype)
        h = (x.repeat(1, 3, 1, 1) - self._mean.to(x.dtype)) / self._std.to(x.dtype)
        feats = []
        for i, layer in enumerate(self._net):
            h = layer(h)
            if i in self.TAPS:
                feats.append(h)
        return feats


class DetectorEncoderBackbone:
    """Offline fallback: feature taps from the frozen focus detector's
    encoder, fed the grayscale image duplicated into both pair slots.
    Reports produced with this backbone record its name so they are never
    confused with pretrained-backbone numbers.

    Each tap is unit-normalized along the channel axis (the LPIPS
    convention) so the perceptual term's magnitude reflects feature
    direction, not the detector's arbitrary internal gains.  Without this
    the term dwarfs every other loss and the weights lose their meaning.
    """

    name = "detector-encoder"

    def __init__(self, frozen):
        if not isinstance(frozen, _focusdet.FrozenDetector):
            raise ValueError("DetectorEncoderBackbone needs a FrozenDetector")
        self.frozen = frozen

    @staticmethod
    def _unit(t):
        return t / torch.linalg.vector_norm(
            t, dim=1, keepdim=True).clamp_min(1e-10)

    def __call__(self, x):
        # runs at the detector's own dtype: converting the net would break
        # its freeze-time checksum
        det = self.frozen.detector
        dtype = next(det.parameters()).dtype
        t = det.inc(torch.cat([x, x], dim=1).to(dtype))
        feats = [self._unit(t)]
        for down in det.downs:
            t = down(F.max_pool2d(t, 2))
            feats.append(self._unit(t))
        return feats


def default_backbone(frozen_detector):
    """Pretrained backbone when available, detector-encoder otherwise."""
    try:
        return VGG19Backbone()
    except BackboneUnavailable:
        return DetectorEncoderBackbone(frozen_detector)


# ---------------------------------------------------------------------------
# torch cores (batched, differentiable w.r.t. the fused image)


def _dfpp_t(det, fused, s1, s2, fpm):
    net = det.detector
    dtype = next(net.parameters()).dtype
    pred1 = net(torch.cat([fused, s1], dim=1).to(dtype)).to(fused.dtype)
    pred2 = net(torch.cat([fused, s2], dim=1).to(dtype)).to(fused.dtype)
    return F.mse_loss(pred1, fpm) + F.mse_loss(pred2, 1.0 - fpm)


def _perceptual_t(backbone, fused, gt):
    total = 0.0
    for ff, fg in zip(backbone(fused), backbone(gt)):
        diff = (ff - fg).reshape(ff.shape[0], -1)
        total = total + torch.linalg.vector_norm(diff, dim=1).mean()
    return total


def _gaussian_window(dtype):
    half = SSIM_WINDOW // 2
    x = torch.arange(-half, half + 1, dtype=dtype)
    g = torch.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    g = g / g.sum()
    return (g[:, None] @ g[None, :]).reshape(1, 1, SSIM_WINDOW, SSIM_WINDOW)


def _ssim_mean_t(a, b):
    # Valid-window gaussian SSIM: statistics only where the full window fits.
    if a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    win = _gaussian_window(a.dtype)
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    mu1 = F.conv2d(a, win)
    mu2 = F.conv2d(b, win)
    s11 = F.conv2d(a * a, win) - mu1 * mu1
    s22 = F.conv2d(b * b, win) - mu2 * mu2
    s12 = F.conv2d(a * b, win) - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return (num / den).mean()


def _ssim_loss_t(fused, gt):
    return 1.0 - _ssim_mean_t(fused, gt)


def _ffl_t(fused, gt, weight=None):
    # Unnormalized forward DFT; the spectrum weight is the max-normalized
    # magnitude of the current difference and carries no gradient.
    df = torch.fft.fft2(fused.squeeze(1)) - torch.fft.fft2(gt.squeeze(1))
    mag2 = df.real ** 2 + df.imag ** 2
    if weight is None:
        with torch.no_grad():
            w = torch.sqrt(mag2)
            wmax = w.amax(dim=(-2, -1), keepdim=True)
            weight = torch.where(wmax > 0, w / wmax.clamp_min(1e-300), torch.zeros_like(w))
    return (weight * mag2).mean(dim=(-2, -1)).mean()


def total_loss_t(det, backbone, weights, fused, s1, s2, gt, fpm,
                 dfpp_enabled=True):
    """Batched loss components as tensors; `total` backpropagates into the
    fused prediction (and through it the fusion parameters) only.

    `dfpp_enabled=False` drops the decision-level term entirely (ablation
    arm); the breakdown then records dfpp as 0 so the combination identity
    still holds.
    """
    det.verify()
    if dfpp_enabled:
        dfpp = _dfpp_t(det, fused, s1, s2, fpm)
    else:
        dfpp = fused.new_zeros(())
    per = _perceptual_t(backbone, fused, gt)
    ssim = _ssim_loss_t(fused, gt)
    ffl = _ffl_t(fused, gt)
    total = dfpp + weights.alpha1 * per + weights.alpha2 * ssim + weights.alpha3 * ffl
    return {"total": total, "dfpp": dfpp, "perceptual": per,
            "ssim": ssim, "ffl": ffl}


# ---------------------------------------------------------------------------
# public single-image operations


def _as_batch(img, dtype, name):
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return torch.from_numpy(a).to(dtype)[None, None]


def _require_frozen(det):
    if not isinstance(det, _focusdet.FrozenDetector):
        raise ValueError("detector must be frozen (freeze_detector) before use")
    det.verify()
    return det


def dfpp_loss(det, fused, sample):
    """Decision-level focus-property loss of a fused image against both
    sources, judged by the frozen detector.

    The detector's map of (fused, S1) should match the sample's focus map,
    and of (fused, S2) its complement; the two MSEs are summed.
    """
    _require_frozen(det)
    dtype = next(det.detector.parameters()).dtype
    fused_t = _as_batch(fused, dtype, "fused")
    s1 = _as_batch(sample.s1, dtype, "S1")
    s2 = _as_batch(sample.s2, dtype, "S2")
    fpm = _as_batch(sample.fpm, dtype, "FPM")
    if fused_t.shape != s1.shape:
        raise ValueError(
            f"fused shape {tuple(fused_t.shape[-2:])} does not match sample "
            f"{tuple(s1.shape[-2:])}")
    with torch.no_grad():
        val = _dfpp_t(det, fused_t, s1, s2, fpm)
    return float(val)


def perceptual_loss(fused, gt, backbone):
    """Sum over backbone taps of the L2 feature-difference norm."""
    dtype = torch.float64
    a = _as_batch(fused, dtype, "fused")
    b = _as_batch(gt, dtype, "gt")
    if a.shape != b.shape:
        raise ValueError("image size mismatch")
    with torch.no_grad():
        val = _perceptual_t(backbone, a, b)
    return float(val)


def ssim_loss(fused, gt):
    """1 - mean structural similarity over gaussian-weighted windows."""
    a = _as_batch(fused, torch.float64, "fused")
    b = _as_batch(gt, torch.float64, "gt")
    if a.shape != b.shape:
        raise ValueError("image size mismatch")
    return float(_ssim_loss_t(a, b))


def ffl_weight(fused, gt):
    """The detached spectrum weight used by ffl_loss, for inspection."""
    a = _as_batch(fused, torch.float64, "fused")
    b = _as_batch(gt, torch.float64, "gt")
    df = torch.fft.fft2(a.squeeze(1)) - torch.fft.fft2(b.squeeze(1))
    w = torch.sqrt(df.real ** 2 + df.imag ** 2)
    wmax = w.amax(dim=(-2, -1), keepdim=True)
    w = torch.where(wmax > 0, w / wmax.clamp_min(1e-300), torch.zeros_like(w))
    return w[0].numpy()


def ffl_loss(fused, gt, weight=None):
    """Spectrum-weighted mean squared frequency error.

    An explicit `weight` (same shape as the images) bypasses the dynamic
    weight; finite-difference checks use this to hold the weight constant.
    """
    a = _as_batch(fused, torch.float64, "fused")
    b = _as_batch(gt, torch.float64, "gt")
    if a.shape != b.shape:
        raise ValueError("image size mismatch")
    w = None
    if weight is not None:
        w = torch.from_numpy(np.asarray(weight, dtype=np.float64))[None]
    return float(_ffl_t(a, b, weight=w))


def total_loss(det, backbone, weights, fused, sample):
    """Full weighted combination for one image, as a LossBreakdown."""
    _require_frozen(det)
    dtype = next(det.detector.parameters()).dtype
    fused_t = _as_batch(fused, dtype, "fused")
    s1 = _as_batch(sample.s1, dtype, "S1")
    s2 = _as_batch(sample.s2, dtype, "S2")
    gt = _as_batch(sample.gt, dtype, "GT")
    fpm = _as_batch(sample.fpm, dtype, "FPM")
    with torch.no_grad():
        parts = total_loss_t(det, backbone, weights, fused_t, s1, s2, gt, fpm)
    return LossBreakdown(total=float(parts["total"]), dfpp=float(parts["dfpp"]),
                         perceptual=float(parts["perceptual"]),
                         ssim=float(parts["ssim"]), ffl=float(parts["ffl"]))
