"""Focus-region detector: a dual-input U-Net that maps an image pair to a
soft per-pixel map of where the first image is in focus.

Trained standalone on synthetic pairs, then frozen and reused as the
decision-level loss backbone for fusion training.  The freeze contract is
enforced with a parameter checksum captured at freeze time and re-verified
before every loss evaluation.
"""

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import imagio

__all__ = [
    "FocusDetector", "FrozenDetector", "freeze_detector", "param_checksum",
    "predict_fpm", "detector_loss", "train_detector", "miou",
]


class _DoubleConv(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.BatchNorm2d(cout),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class FocusDetector(nn.Module):
    """4-level encoder/decoder with skip connections, 2-channel input
    (the image pair stacked), sigmoid head.

    Output spatial size always equals the input size; inputs whose sides
    are not multiples of 16 are replicate-padded internally and cropped
    back after the decoder.
    """

    def __init__(self, base_width=16, levels=4):
        super().__init__()
        if levels < 1:
            raise ValueError("levels must be >= 1")
        self.base_width = int(base_width)
        self.levels = int(levels)
        widths = [base_width * (2 ** i) for i in range(levels + 1)]
        self.inc = _DoubleConv(2, widths[0])
        self.downs = nn.ModuleList(
            [_DoubleConv(widths[i], widths[i + 1]) for i in range(levels)])
        self.ups = nn.ModuleList(
            [_DoubleConv(widths[i + 1] + widths[i], widths[i])
             for i in reversed(range(levels))])
        self.head = nn.Conv2d(widths[0], 1, 1)

    def arch(self):
        return {"kind": "detector", "base_width": self.base_width,
                "levels": self.levels}

    def forward(self, x):
        # x: (B, 2, H, W) -> (B, 1, H, W) in [0,1]
        h, w = x.shape[-2:]
        mult = 2 ** self.levels
        ph = (mult - h % mult) % mult
        pw = (mult - w % mult) % mult
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="replicate")
        skips = []
        t = self.inc(x)
        for down in self.downs:
            skips.append(t)
            t = down(F.max_pool2d(t, 2))
        for up, skip in zip(self.ups, reversed(skips)):
            t = F.interpolate(t, size=skip.shape[-2:], mode="bilinear",
                              align_corners=False)
            t = up(torch.cat([t, skip], dim=1))
        out = torch.sigmoid(self.head(t))
        if ph or pw:
            out = out[..., :h, :w]
        return out


def param_checksum(det):
    """SHA-256 over all parameters and buffers in state-dict order."""
    h = hashlib.sha256()
    for key, tensor in det.state_dict().items():
        h.update(key.encode("utf-8"))
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


class FrozenDetector:
    """Read-only wrapper recording a checksum at freeze time.

    verify() recomputes the checksum and must pass before the detector is
    used inside a loss; any parameter drift raises.
    """

    def __init__(self, det):
        det.eval()
        for p in det.parameters():
            p.requires_grad_(False)
        self.detector = det
        self.checksum = param_checksum(det)

    def verify(self):
        now = param_checksum(self.detector)
        if now != self.checksum:
            raise RuntimeError(
                "frozen detector checksum mismatch: parameters changed after freeze")
        return True


def freeze_detector(det):
    return FrozenDetector(det)


def _pair_input(a, b):
    return torch.cat([a, b], dim=1)


def predict_fpm(det, a, b):
    """Predict the soft focus map of image `a` relative to image `b`.

    Values near 1 mean the pixel is in focus in the first argument.
    """
    net = det.detector if isinstance(det, FrozenDetector) else det
    aa = np.asarray(a, dtype=np.float64)
    bb = np.asarray(b, dtype=np.float64)
    if aa.shape != bb.shape:
        raise ValueError(f"size mismatch: {aa.shape} vs {bb.shape}")
    if aa.ndim != 2:
        raise ValueError(f"expected 2-D images, got shape {aa.shape}")
    dtype = next(net.parameters()).dtype
    ta = torch.from_numpy(aa).to(dtype)[None, None]
    tb = torch.from_numpy(bb).to(dtype)[None, None]
    was_training = net.training
    net.eval()
    with torch.no_grad():
        out = net(_pair_input(ta, tb))
    if was_training:
        net.train()
    return out[0, 0].numpy().astype(np.float64)


def _sample_pairs_t(sample, dtype):
    """The three supervised pairs of one sample as (input2ch, target) tensors.

    (S1,S2) and (S1,GT) are supervised with the sample's focus map; (S2,GT)
    with its complement: relative to an all-in-focus partner, a source is in
    focus exactly on its own sharp region.
    """
    s1 = torch.from_numpy(np.asarray(sample.s1)).to(dtype)[None, None]
    s2 = torch.from_numpy(np.asarray(sample.s2)).to(dtype)[None, None]
    gt = torch.from_numpy(np.asarray(sample.gt)).to(dtype)[None, None]
    fpm = torch.from_numpy(np.asarray(sample.fpm)).to(dtype)[None, None]
    return [
        (_pair_input(s1, s2), fpm),
        (_pair_input(s1, gt), fpm),
        (_pair_input(s2, gt), 1.0 - fpm),
    ]


def detector_loss(det, sample):
    """Sum of per-pair MSEs between predicted and true focus maps over the
    sample's three supervised pairs."""
    net = det.detector if isinstance(det, FrozenDetector) else det
    dtype = next(net.parameters()).dtype
    was_training = net.training
    net.eval()
    total = 0.0
    with torch.no_grad():
        for inp, target in _sample_pairs_t(sample, dtype):
            pred = net(inp)
            total += F.mse_loss(pred, target).item()
    if was_training:
        net.train()
    return float(total)


def miou(pred, truth, threshold=0.5):
    """Mean intersection-over-union of the focus and defocus classes after
    thresholding the soft prediction.  An empty union counts as a perfect
    class score."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"size mismatch: {p.shape} vs {t.shape}")
    pb = p >= threshold
    tb = t >= 0.5
    ious = []
    for cls_pred, cls_true in ((pb, tb), (~pb, ~tb)):
        union = np.logical_or(cls_pred, cls_true).sum()
        if union == 0:
            ious.append(1.0)
        else:
            inter = np.logical_and(cls_pred, cls_true).sum()
            ious.append(inter / union)
    return float(np.mean(ious))


@dataclass
class DetectorEpoch:
    epoch: int
    lr: float
    train_loss: float
    val_miou: float
    wall_time: float


@dataclass
class DetectorLog:
    epochs: list = field(default_factory=list)


def train_detector(dataset, config, base_width=16, progress=None):
    """Train a detector on a dataset manifest; deterministic given the seed.

    Returns (detector, log) where the log carries per-epoch training loss
    and held-out MIoU.
    """
    from . import datasynth
    from . import trainer as _trainer

    if len(dataset) == 0:
        raise ValueError("dataset manifest is empty")
    torch.manual_seed(config.seed)
    det = FocusDetector(base_width=base_width)
    det.train()

    train_entries, val_entries = _trainer.validation_split(dataset)
    samples = {e["id"]: datasynth.load_sample(dataset, e) for e in dataset}
    examples = []
    for e in train_entries:
        examples.extend(_sample_pairs_t(samples[e["id"]], torch.float32))
    if not examples:
        raise ValueError("no training examples after validation split")

    params = [p for p in det.parameters() if p.requires_grad]
    state = _trainer.AdamState.for_params(params)
    log = DetectorLog()
    for epoch in range(config.epochs):
        t0 = time.time()
        lr = _trainer.scheduled_lr(config, epoch)
        order = _trainer.epoch_order(config.seed, epoch, len(examples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            inp = torch.cat([examples[i][0] for i in idx], dim=0)
            target = torch.cat([examples[i][1] for i in idx], dim=0)
            pred = det(inp)
            loss = F.mse_loss(pred, target)
            if not torch.isfinite(loss):
                raise _trainer.TrainingDiverged(
                    f"non-finite detector loss at epoch {epoch}", epoch, idx)
            det.zero_grad(set_to_none=True)
            loss.backward()
            grads = [p.grad for p in params]
            _trainer.adam_step(params, grads, state, config, lr=lr)
            losses.append(float(loss.item()))
        val_scores = []
        for e in val_entries or train_entries[:4]:
            s = samples[e["id"]]
            pred = predict_fpm(det, s.s1, s.s2)
            val_scores.append(miou(pred, s.fpm))
        rec = DetectorEpoch(epoch=epoch, lr=lr,
                            train_loss=float(np.mean(losses)),
                            val_miou=float(np.mean(val_scores)),
                            wall_time=time.time() - t0)
        log.epochs.append(rec)
        if progress:
            progress(rec)
    det.eval()
    return det, log
