"""Optimization loops, schedules, checkpointing, and reproducibility.

Both networks train with a hand-rolled bias-corrected Adam step and a
stepwise exponential learning-rate decay.  Checkpoints use a self-contained
binary format: a JSON header describing the architecture (hashed) and tensor
layout, raw little-endian tensor bytes, and a trailing SHA-256 over the
whole payload.  Every source of randomness is derived from the config seed,
so a rerun on the same platform is byte-identical.
"""

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import losses as _losses

MAGIC = b"DCFCKPT1"

__all__ = [
    "TrainConfig", "TrainLog", "EpochRecord", "AdamState", "adam_step",
    "scheduled_lr", "epoch_order", "validation_split", "train_fusion",
    "checkpoint", "restore", "restore_fusion", "restore_detector",
    "CheckpointError", "ChecksumError", "ArchitectureMismatch",
    "TrainingDiverged",
]


class CheckpointError(RuntimeError):
    pass


class ChecksumError(CheckpointError):
    pass


class ArchitectureMismatch(CheckpointError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message, epoch=None, batch_ids=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_ids = list(batch_ids) if batch_ids is not None else None


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    decay_rate: float = 0.9
    decay_every: int = 5
    batch_size: int = 16
    epochs: int = 120
    seed: int = 0
    dfpp_enabled: bool = True
    weights: "_losses.LossWeights" = field(default_factory=lambda: _losses.LossWeights())

    def to_dict(self):
        d = {k: getattr(self, k) for k in
             ("lr", "beta1", "beta2", "epsilon", "decay_rate", "decay_every",
              "batch_size", "epochs", "seed", "dfpp_enabled")}
        d["weights"] = {"alpha1": self.weights.alpha1,
                        "alpha2": self.weights.alpha2,
                        "alpha3": self.weights.alpha3}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        w = d.pop("weights", None)
        cfg = cls(**d)
        if w is not None:
            cfg.weights = _losses.LossWeights(**w)
        return cfg


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train: "_losses.LossBreakdown"
    val: "_losses.LossBreakdown"
    wall_time: float


@dataclass
class TrainLog:
    backbone: str = ""
    best_epoch: int = -1
    epochs: list = field(default_factory=list)

    def to_dict(self):
        # wall times deliberately left out: logs must be rerun-identical
        return {
            "backbone": self.backbone,
            "best_epoch": self.best_epoch,
            "epochs": [{
                "epoch": r.epoch,
                "lr": r.lr,
                "train": r.train.to_dict(),
                "val": r.val.to_dict(),
            } for r in self.epochs],
        }


def scheduled_lr(cfg, epoch):
    """Stepwise exponential decay: lr0 * rate^floor(epoch / every)."""
    return cfg.lr * cfg.decay_rate ** (epoch // cfg.decay_every)


def epoch_order(seed, epoch, n):
    """Deterministic sample order for one epoch as a list of indices."""
    ss = np.random.SeedSequence((int(seed), 0x0E, int(epoch)))
    rng = np.random.Generator(np.random.PCG64(ss))
    return [int(i) for i in rng.permutation(n)]


def validation_split(manifest, fraction_mod=10):
    """Split manifest entries into (train, validation) by stable id hash.

    An entry validates when sha256(id) mod `fraction_mod` is 0, giving a
    deterministic split of roughly 1/fraction_mod.
    """
    train, val = [], []
    for e in manifest:
        h = int.from_bytes(hashlib.sha256(e["id"].encode("utf-8")).digest()[:8],
                           "big")
        (val if h % fraction_mod == 0 else train).append(e)
    return train, val


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(m=[torch.zeros_like(p) for p in params],
                   v=[torch.zeros_like(p) for p in params])


def adam_step(params, grads, state, cfg, lr=None):
    """One bias-corrected Adam update, in place on the parameter tensors.

    Gradients may contain None entries (parameters untouched this step).
    Returns (params, state).
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    lr = cfg.lr if lr is None else lr
    state.t += 1
    t = state.t
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    with torch.no_grad():
        for i, (p, g) in enumerate(zip(params, grads)):
            if g is None:
                continue
            if g.shape != p.shape:
                raise ValueError(
                    f"grad {i} shape {tuple(g.shape)} != param shape {tuple(p.shape)}")
            state.m[i].mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            state.v[i].mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            m_hat = state.m[i] / bc1
            v_hat = state.v[i] / bc2
            p.add_(-lr * m_hat / (v_hat.sqrt() + cfg.epsilon))
    return params, state


# ---------------------------------------------------------------------------
# checkpoint format

_DTYPES = {"float32": np.float32, "float64": np.float64, "int64": np.int64}


def _arch_hash(arch):
    blob = json.dumps(arch, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def checkpoint(model, path, meta=None):
    """Serialize a model (fusion net or detector) with integrity checks.

    The header records the architecture and its hash; restoring into a
    different architecture fails loudly, and any byte flip is caught by the
    trailing digest.  `meta` must be JSON-serializable and free of
    timestamps so checkpoints are rerun-identical.
    """
    arch = model.arch()
    tensors = []
    blobs = []
    for key, t in model.state_dict().items():
        a = t.detach().cpu().numpy()
        if a.dtype.name not in _DTYPES:
            raise CheckpointError(f"unsupported tensor dtype {a.dtype} at {key}")
        tensors.append({"key": key, "shape": list(a.shape), "dtype": a.dtype.name})
        blobs.append(np.ascontiguousarray(a).tobytes())
    header = {
        "arch": arch,
        "arch_hash": _arch_hash(arch),
        "meta": meta or {},
        "tensors": tensors,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = MAGIC + struct.pack("<I", len(hb)) + hb + b"".join(blobs)
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(payload + digest)


def _read_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4 + 32 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint archive")
    payload, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch, archive corrupt")
    hlen = struct.unpack("<I", payload[len(MAGIC):len(MAGIC) + 4])[0]
    off = len(MAGIC) + 4
    header = json.loads(payload[off:off + hlen].decode("utf-8"))
    body = payload[off + hlen:]
    if _arch_hash(header["arch"]) != header["arch_hash"]:
        raise ArchitectureMismatch(f"{path}: architecture hash mismatch")
    return header, body


def _build_from_arch(arch):
    from . import focusdet, fusenet
    kind = arch.get("kind")
    if kind == "fusion":
        return fusenet.FusionModel(
            base_channels=arch["base_channels"], expansion=arch["expansion"],
            fusion_rule=arch["fusion_rule"], window=arch["window"])
    if kind == "detector":
        return focusdet.FocusDetector(base_width=arch["base_width"],
                                      levels=arch["levels"])
    raise ArchitectureMismatch(f"unknown checkpoint kind '{kind}'")


def restore(path, with_meta=False):
    """Rebuild the archived model; forward passes match the saved model
    bit-for-bit."""
    header, body = _read_checkpoint(path)
    model = _build_from_arch(header["arch"])
    state = {}
    off = 0
    for spec_t in header["tensors"]:
        dt = _DTYPES[spec_t["dtype"]]
        n = int(np.prod(spec_t["shape"], dtype=np.int64)) if spec_t["shape"] else 1
        nbytes = n * np.dtype(dt).itemsize
        chunk = body[off:off + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor data at {spec_t['key']}")
        off += nbytes
        arr = np.frombuffer(chunk, dtype=dt).reshape(spec_t["shape"]).copy()
        state[spec_t["key"]] = torch.from_numpy(arr)
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes in tensor data")
    model.load_state_dict(state, strict=True)
    model.eval()
    if with_meta:
        return model, header["meta"]
    return model


def _expect_kind(path, kind):
    header, _ = _read_checkpoint(path)
    got = header["arch"].get("kind")
    if got != kind:
        raise ArchitectureMismatch(
            f"{path}: checkpoint architecture is '{got}', expected '{kind}'")


def restore_fusion(path, with_meta=False):
    _expect_kind(path, "fusion")
    return restore(path, with_meta=with_meta)


def restore_detector(path, with_meta=False):
    _expect_kind(path, "detector")
    return restore(path, with_meta=with_meta)


# ---------------------------------------------------------------------------
# fusion training


def _stack_samples(samples, entries, dtype=torch.float32):
    s1 = torch.stack([torch.from_numpy(samples[e["id"]].s1).to(dtype) for e in entries])
    s2 = torch.stack([torch.from_numpy(samples[e["id"]].s2).to(dtype) for e in entries])
    gt = torch.stack([torch.from_numpy(samples[e["id"]].gt).to(dtype) for e in entries])
    fpm = torch.stack([torch.from_numpy(samples[e["id"]].fpm).to(dtype) for e in entries])
    return s1[:, None], s2[:, None], gt[:, None], fpm[:, None]


def _mean_breakdown(records):
    n = len(records)
    return _losses.LossBreakdown(
        total=sum(r.total for r in records) / n,
        dfpp=sum(r.dfpp for r in records) / n,
        perceptual=sum(r.perceptual for r in records) / n,
        ssim=sum(r.ssim for r in records) / n,
        ffl=sum(r.ffl for r in records) / n,
    )


def train_fusion(model, det, data, cfg, backbone=None, out_dir=None,
                 checkpoint_every=0, progress=None):
    """Train the fusion network against a frozen detector.

    Per epoch: deterministic shuffle, batched forward with the unclamped
    training path, Adam updates under the decayed learning rate, then a
    validation pass.  Checkpoints are written every `checkpoint_every`
    epochs and at each new best validation loss when `out_dir` is given.
    Aborts on non-finite loss with the offending batch ids.

    Returns (model, TrainLog).
    """
    import os

    from . import datasynth, focusdet

    if len(data) == 0:
        raise ValueError("dataset manifest is empty")
    if not isinstance(det, focusdet.FrozenDetector):
        raise ValueError("detector must be frozen (freeze_detector) for training")
    det.verify()
    torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    if backbone is None:
        backbone = _losses.DetectorEncoderBackbone(det)

    train_entries, val_entries = validation_split(data)
    if not train_entries:
        raise ValueError("no training entries after validation split")
    samples = {e["id"]: datasynth.load_sample(data, e) for e in data}
    val_batch = _stack_samples(samples, val_entries) if val_entries else None

    params = [p for p in model.parameters() if p.requires_grad]
    state = AdamState.for_params(params)
    log = TrainLog(backbone=backbone.name)
    best_val = float("inf")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(cfg.epochs):
        t0 = time.time()
        lr = scheduled_lr(cfg, epoch)
        order = epoch_order(cfg.seed, epoch, len(train_entries))
        model.train()
        batch_records = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            entries = [train_entries[i] for i in idx]
            s1, s2, gt, fpm = _stack_samples(samples, entries)
            fused = model.fuse_pair(s1, s2, clamp=False)
            parts = _losses.total_loss_t(det, backbone, cfg.weights,
                                         fused, s1, s2, gt, fpm,
                                         dfpp_enabled=cfg.dfpp_enabled)
            if not torch.isfinite(parts["total"]):
                ids = [e["id"] for e in entries]
                if out_dir:
                    np.savez(os.path.join(out_dir, "diverged_batch.npz"),
                             ids=np.array(ids), s1=s1.numpy(), s2=s2.numpy(),
                             gt=gt.numpy(), fused=fused.detach().numpy())
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}", epoch, ids)
            model.zero_grad(set_to_none=True)
            parts["total"].backward()
            grads = [p.grad for p in params]
            adam_step(params, grads, state, cfg, lr=lr)
            batch_records.append(_losses.LossBreakdown(
                total=float(parts["total"].detach()),
                dfpp=float(parts["dfpp"].detach()),
                perceptual=float(parts["perceptual"].detach()),
                ssim=float(parts["ssim"].detach()),
                ffl=float(parts["ffl"].detach())))
        model.eval()
        if val_batch is not None:
            with torch.no_grad():
                s1, s2, gt, fpm = val_batch
                fused = model.fuse_pair(s1, s2, clamp=False)
                vparts = _losses.total_loss_t(det, backbone, cfg.weights,
                                              fused, s1, s2, gt, fpm,
                                              dfpp_enabled=cfg.dfpp_enabled)
            val_rec = _losses.LossBreakdown(
                total=float(vparts["total"]), dfpp=float(vparts["dfpp"]),
                perceptual=float(vparts["perceptual"]), ssim=float(vparts["ssim"]),
                ffl=float(vparts["ffl"]))
        else:
            val_rec = batch_records[-1]
        rec = EpochRecord(epoch=epoch, lr=lr, train=_mean_breakdown(batch_records),
                          val=val_rec, wall_time=time.time() - t0)
        log.epochs.append(rec)
        if progress:
            progress(rec)
        if out_dir and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            checkpoint(model, os.path.join(out_dir, f"epoch_{epoch:04d}.ckpt"),
                       meta={"epoch": epoch, "seed": cfg.seed})
        if val_rec.total < best_val:
            best_val = val_rec.total
            log.best_epoch = epoch
            if out_dir:
                checkpoint(model, os.path.join(out_dir, "best.ckpt"),
                           meta={"epoch": epoch, "seed": cfg.seed,
                                 "val_total": val_rec.total})
    det.verify()
    return model, log
