"""Siamese fusion network: shared feature extraction, activity-based feature
selection, and reconstruction.

The two source images pass through identical shared-weight extraction
(two shallow convolutions plus an inverted-residual dual-attention block).
Per channel, a windowed spatial-frequency measure decides which source's
feature is kept at each position; the gated feature map is reconstructed
back to a single image by two convolutions.  Alternative selection rules
used for ablation (pooled spatial frequency, windowed maximum, elementwise
maximum, concatenation) share the same extractor and reconstructor.
"""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

LRELU_SLOPE = 0.2
FUSION_RULES = ("channel_wise_sf", "sf", "c_w_max", "max", "cat")
REFERENCE_PARAM_COUNT = 240_000

__all__ = [
    "LRELU_SLOPE", "FUSION_RULES", "REFERENCE_PARAM_COUNT",
    "FusionModel", "lrelu", "channel_sf", "decision_tensor", "fuse_features",
    "fuse_features_variant", "extract_features", "reconstruct", "fuse",
    "count_parameters", "model_summary",
]


def lrelu(x):
    return F.leaky_relu(x, LRELU_SLOPE)


def _as_tensor(arr, name="tensor"):
    """Accept numpy or torch input; return (tensor, was_numpy)."""
    if isinstance(arr, torch.Tensor):
        return arr, False
    a = np.asarray(arr)
    if not np.issubdtype(a.dtype, np.floating):
        a = a.astype(np.float64)
    return torch.from_numpy(np.ascontiguousarray(a)), True


def _check_window(window):
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")


def _channel_sf_t(x, window):
    # x: (B, C, H, W).  Windowed sum of per-pixel gradient magnitude, where
    # the gradient uses backward differences with replicate boundaries.
    b, c, h, w = x.shape
    flat = x.reshape(b * c, 1, h, w)
    left = F.pad(flat, (1, 0, 0, 0), mode="replicate")[..., :, :w]
    up = F.pad(flat, (0, 0, 1, 0), mode="replicate")[..., :h, :]
    g = torch.sqrt((flat - left) ** 2 + (flat - up) ** 2)
    r = window // 2
    g = F.pad(g, (r, r, r, r), mode="replicate")
    kernel = torch.ones(1, 1, window, window, dtype=x.dtype, device=x.device)
    sf = F.conv2d(g, kernel)
    return sf.reshape(b, c, h, w)


def channel_sf(f, window=11):
    """Per-channel windowed spatial frequency of a (C, H, W) feature tensor.

    At each position the absolute horizontal and vertical backward
    differences are combined as sqrt(RF^2 + CF^2) and summed over the
    surrounding window; borders are replicate-padded.  Output is
    non-negative with the input's shape.
    """
    _check_window(window)
    t, was_numpy = _as_tensor(f, "features")
    if t.dim() != 3:
        raise ValueError(f"expected (C,H,W) features, got shape {tuple(t.shape)}")
    out = _channel_sf_t(t.unsqueeze(0), window).squeeze(0)
    return out.numpy() if was_numpy else out


def decision_tensor(sf1, sf2):
    """Binary selector per (c, x, y): 1 where the first activity wins.

    Ties go to the first source.
    """
    t1, was_numpy = _as_tensor(sf1)
    t2, _ = _as_tensor(sf2)
    if t1.shape != t2.shape:
        raise ValueError(f"shape mismatch: {tuple(t1.shape)} vs {tuple(t2.shape)}")
    d = (t1 >= t2).to(t1.dtype)
    return d.numpy() if was_numpy else d


def fuse_features(f1, f2, d):
    """Gated copy: F1 where the decision is 1, F2 where it is 0."""
    t1, was_numpy = _as_tensor(f1)
    t2, _ = _as_tensor(f2)
    td, _ = _as_tensor(d)
    if not (t1.shape == t2.shape == td.shape):
        raise ValueError(
            f"shape mismatch: {tuple(t1.shape)}, {tuple(t2.shape)}, {tuple(td.shape)}")
    fused = torch.where(td > 0.5, t1, t2)
    return fused.numpy() if was_numpy else fused


def _windowed_abs_max(x, window):
    b, c, h, w = x.shape
    r = window // 2
    flat = x.abs().reshape(b * c, 1, h, w)
    flat = F.pad(flat, (r, r, r, r), mode="replicate")
    m = F.max_pool2d(flat, kernel_size=window, stride=1)
    return m.reshape(b, c, h, w)


def _fuse_variant_t(f1, f2, rule, window):
    if rule == "channel_wise_sf":
        with torch.no_grad():
            sf1 = _channel_sf_t(f1.detach(), window)
            sf2 = _channel_sf_t(f2.detach(), window)
            d = sf1 >= sf2
        return torch.where(d, f1, f2)
    if rule == "sf":
        with torch.no_grad():
            sf1 = _channel_sf_t(f1.detach(), window).mean(dim=1, keepdim=True)
            sf2 = _channel_sf_t(f2.detach(), window).mean(dim=1, keepdim=True)
            d = sf1 >= sf2
        return torch.where(d, f1, f2)
    if rule == "c_w_max":
        with torch.no_grad():
            m1 = _windowed_abs_max(f1.detach(), window)
            m2 = _windowed_abs_max(f2.detach(), window)
            d = m1 >= m2
        return torch.where(d, f1, f2)
    if rule == "max":
        return torch.maximum(f1, f2)
    if rule == "cat":
        return torch.cat([f1, f2], dim=1)
    raise ValueError(f"unknown fusion rule '{rule}'; expected one of {FUSION_RULES}")


def fuse_features_variant(f1, f2, rule, window=11):
    """Ablation selection rules over two (C, H, W) feature tensors.

    sf: one decision map from channel-pooled spatial frequency, broadcast to
    all channels.  c_w_max: per-channel windowed maximum of absolute
    activation decides.  max: elementwise maximum.  cat: channel
    concatenation (output has 2C channels).
    """
    _check_window(window)
    t1, was_numpy = _as_tensor(f1)
    t2, _ = _as_tensor(f2)
    if t1.shape != t2.shape:
        raise ValueError(f"shape mismatch: {tuple(t1.shape)} vs {tuple(t2.shape)}")
    if t1.dim() != 3:
        raise ValueError(f"expected (C,H,W) features, got shape {tuple(t1.shape)}")
    out = _fuse_variant_t(t1.unsqueeze(0), t2.unsqueeze(0), rule, window).squeeze(0)
    return out.numpy() if was_numpy else out


class _Irdam(nn.Module):
    """Inverted-residual block with multiplicative channel then spatial
    attention: expand 1x1, depthwise 3x3, attend, project 1x1, residual add."""

    def __init__(self, channels, expansion=4, se_reduction=4, spatial_kernel=7):
        super().__init__()
        mid = channels * expansion
        squeezed = max(mid // se_reduction, 4)
        self.expand = nn.Conv2d(channels, mid, 1)
        self.depthwise = nn.Conv2d(mid, mid, 3, padding=1, groups=mid)
        self.se_down = nn.Conv2d(mid, squeezed, 1)
        self.se_up = nn.Conv2d(squeezed, mid, 1)
        self.spatial = nn.Conv2d(2, 1, spatial_kernel, padding=spatial_kernel // 2)
        self.project = nn.Conv2d(mid, channels, 1)

    def forward(self, x):
        h = lrelu(self.expand(x))
        h = lrelu(self.depthwise(h))
        ca = torch.sigmoid(self.se_up(lrelu(self.se_down(
            F.adaptive_avg_pool2d(h, 1)))))
        h = h * ca
        sa = torch.sigmoid(self.spatial(torch.cat(
            [h.mean(dim=1, keepdim=True), h.amax(dim=1, keepdim=True)], dim=1)))
        h = h * sa
        return x + self.project(h)


class FusionModel(nn.Module):
    """Shared-weight extractor + selection rule + reconstructor.

    base_channels controls the widths: the extractor maps
    1 -> base -> 2*base, the attention block runs at 2*base with the given
    expansion, and the reconstructor maps back 2*base -> base -> 1 (input
    doubled for the concatenation rule).
    """

    def __init__(self, base_channels=16, expansion=4, fusion_rule="channel_wise_sf",
                 window=11):
        super().__init__()
        if fusion_rule not in FUSION_RULES:
            raise ValueError(
                f"unknown fusion rule '{fusion_rule}'; expected one of {FUSION_RULES}")
        _check_window(window)
        self.base_channels = int(base_channels)
        self.expansion = int(expansion)
        self.fusion_rule = fusion_rule
        self.window = int(window)
        feat = 2 * self.base_channels
        self.feature_channels = feat
        self.conv1 = nn.Conv2d(1, self.base_channels, 3, padding=1)
        self.conv2 = nn.Conv2d(self.base_channels, feat, 3, padding=1)
        self.irdam = _Irdam(feat, expansion=self.expansion)
        recon_in = 2 * feat if fusion_rule == "cat" else feat
        self.recon_in = recon_in
        self.rec1 = nn.Conv2d(recon_in, self.base_channels, 3, padding=1)
        self.rec2 = nn.Conv2d(self.base_channels, 1, 3, padding=1)

    def arch(self):
        return {
            "kind": "fusion",
            "base_channels": self.base_channels,
            "expansion": self.expansion,
            "fusion_rule": self.fusion_rule,
            "window": self.window,
        }

    def extract(self, x):
        # x: (B, 1, H, W) -> (B, 2*base, H, W); spatial size is preserved.
        h = lrelu(self.conv1(x))
        h = lrelu(self.conv2(h))
        return self.irdam(h)

    def reconstruct_features(self, f, clamp):
        if f.shape[1] != self.recon_in:
            raise ValueError(
                f"reconstructor expects {self.recon_in} channels, got {f.shape[1]}")
        out = self.rec2(lrelu(self.rec1(f)))
        return out.clamp(0.0, 1.0) if clamp else out

    def fuse_pair(self, x1, x2, rule=None, clamp=True):
        # Training path keeps the output unclamped so losses see raw values.
        rule = self.fusion_rule if rule is None else rule
        f1 = self.extract(x1)
        f2 = self.extract(x2)
        fused = _fuse_variant_t(f1, f2, rule, self.window)
        return self.reconstruct_features(fused, clamp)

    def forward(self, x1, x2):
        return self.fuse_pair(x1, x2, clamp=False)


def _image_to_batch(img, dtype, name):
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return torch.from_numpy(arr).to(dtype).unsqueeze(0).unsqueeze(0)


def extract_features(model, img):
    """Run one grayscale image through the shared extractor.

    Returns a (C, H, W) float array with the image's spatial size.
    """
    dtype = next(model.parameters()).dtype
    x = _image_to_batch(img, dtype, "image")
    with torch.no_grad():
        f = model.extract(x)
    return f.squeeze(0).numpy().astype(np.float64)


def reconstruct(model, f, clamp=True):
    """Map a fused feature tensor back to a single [0,1] image."""
    t, _ = _as_tensor(f)
    if t.dim() != 3:
        raise ValueError(f"expected (C,H,W) features, got shape {tuple(t.shape)}")
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        out = model.reconstruct_features(t.to(dtype).unsqueeze(0), clamp)
    return out.squeeze(0).squeeze(0).numpy().astype(np.float64)


def fuse(model, s1, s2, rule=None):
    """Fuse a registered two-focus pair into one all-in-focus image.

    Output is clamped to [0,1] and matches the input size.
    """
    a1 = np.asarray(s1)
    a2 = np.asarray(s2)
    if a1.shape != a2.shape:
        raise ValueError(f"source size mismatch: {a1.shape} vs {a2.shape}")
    dtype = next(model.parameters()).dtype
    x1 = _image_to_batch(a1, dtype, "s1")
    x2 = _image_to_batch(a2, dtype, "s2")
    with torch.no_grad():
        out = model.fuse_pair(x1, x2, rule=rule, clamp=True)
    return out.squeeze(0).squeeze(0).numpy().astype(np.float64)


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())


def model_summary(model):
    """Human-readable architecture summary including the parameter budget."""
    n = count_parameters(model)
    dev = (n - REFERENCE_PARAM_COUNT) / REFERENCE_PARAM_COUNT * 100.0
    lines = [
        f"fusion model: rule={model.fusion_rule} window={model.window} "
        f"base={model.base_channels} expansion={model.expansion}",
        f"parameters: {n}",
        f"reference budget: {REFERENCE_PARAM_COUNT}",
        f"budget deviation: {dev:+.1f}%",
    ]
    return "\n".join(lines)
