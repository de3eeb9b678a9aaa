"""Command-line entry point.

Subcommands cover the full workflow: `synth` builds a defocus dataset from
sharp sources, `train-detector` and `train-fusion` produce checkpoints,
`fuse` merges one image pair, `evaluate` scores fused outputs, `ablate`
runs the loss and fusion-rule comparison studies, and `report` renders a
stored report as a text table.

Reports are JSON documents split into a `meta` block (timestamps,
environment) and a `data` block; the data block is byte-stable across
reruns with the same seed and inputs.  The DCFUSE_HOME environment
variable picks the cache/output root used for default model and report
locations (default ~/.dcfuse).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import os
import platform
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import torch

from . import __version__, datasynth, focusdet, fusenet, imagio, losses, metrics, trainer

ABLATION_METRICS = ("q_e", "q_cv", "q_p", "sd")
FULL_REFERENCE_METRICS = ("psnr", "mse", "ssim")

__all__ = [
    "ExperimentConfig", "main", "render_report", "trend_flags",
    "output_root",
]


def output_root():
    """Cache/output root, overridable through DCFUSE_HOME."""
    return os.environ.get("DCFUSE_HOME",
                          os.path.join(os.path.expanduser("~"), ".dcfuse"))


def _meta(command, **extra):
    info = {
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "tool": f"dcfuse {__version__}",
        "python": platform.python_version(),
        "numpy": np.__version__,
        "torch": torch.__version__,
    }
    info.update(extra)
    return info


def _write_report(path, command, data, **meta_extra):
    doc = {"meta": _meta(command, **meta_extra), "data": data}
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return doc


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """Sections of an experiment file: dataset paths and synth parameters,
    detector and fusion training settings, and the evaluation metric list.
    Relative paths inside the file resolve against its directory."""

    dataset: dict
    detector: dict
    fusion: dict
    eval: dict
    base_dir: str = "."

    KNOWN_SECTIONS = ("dataset", "detector", "fusion", "eval")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("experiment config must be a JSON object")
        unknown = set(doc) - set(cls.KNOWN_SECTIONS)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        return cls(dataset=doc.get("dataset", {}),
                   detector=doc.get("detector", {}),
                   fusion=doc.get("fusion", {}),
                   eval=doc.get("eval", {}),
                   base_dir=os.path.dirname(os.path.abspath(path)))

    def to_dict(self):
        return {"dataset": self.dataset, "detector": self.detector,
                "fusion": self.fusion, "eval": self.eval}

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


# ---------------------------------------------------------------------------
# shared evaluation helpers


def _summarize(per_image):
    """Per-metric mean and population SD over a {id: {metric: value}} map."""
    out = {}
    ids = sorted(per_image)
    if not ids:
        return out
    for m in per_image[ids[0]]:
        vals = np.array([per_image[i][m] for i in ids], dtype=np.float64)
        out[m] = {"mean": float(vals.mean()), "sd": float(vals.std())}
    return out


def _rank_table(values, directions=None):
    # MetricReport as a plain dict; single-method reports get trivial ranks
    methods = list(next(iter(values.values())).keys())
    if len(methods) >= 2:
        return metrics.borda(values, directions).to_dict()
    only = methods[0]
    return {"methods": methods, "values": values,
            "ranks": {m: {only: 1.0} for m in values},
            "points": {m: {only: 1.0} for m in values},
            "borda": {only: float(len(values))}}


def _beats(a, b, direction):
    return a < b if direction == "lower" else a > b


def trend_flags(dfpp_wins, metric_names, borda_totals,
                expected_rule="channel_wise_sf"):
    """Flag strings for expected-trend violations in an ablation run.

    The decision-supervision arm is expected to win on at least half of the
    metrics, and `expected_rule` is expected to hold the strictly highest
    Borda total.  An empty list means both trends held.
    """
    flags = []
    required = max(1, len(metric_names) // 2)
    if len(dfpp_wins) < required:
        flags.append(
            f"dfpp_trend: with_dfpp better on {len(dfpp_wins)}/"
            f"{len(metric_names)} metrics, expected at least {required}")
    top = max(borda_totals.values())
    winners = sorted(r for r, v in borda_totals.items() if v == top)
    if winners != [expected_rule]:
        flags.append(
            f"rule_trend: highest Borda total goes to {', '.join(winners)}, "
            f"expected {expected_rule}")
    return flags


def _eval_model_on_set(model, manifest):
    per = {}
    for entry in manifest:
        s = datasynth.load_sample(manifest, entry)
        fused = fusenet.fuse(model, s.s1, s.s2)
        per[entry["id"]] = {
            "q_e": metrics.q_e(fused, s.s1, s.s2),
            "q_cv": metrics.q_cv(fused, s.s1, s.s2),
            "q_p": metrics.q_p(fused, s.s1, s.s2),
            "sd": metrics.sd(fused),
        }
    return per


def _pick_backbone(frozen, vgg_weights=None):
    """Pretrained backbone when weights are reachable, detector encoder
    otherwise.  A weights file at $DCFUSE_HOME/vgg19.pth is picked up
    automatically."""
    if vgg_weights:
        return losses.VGG19Backbone(weights_path=vgg_weights)
    cached = os.path.join(output_root(), "vgg19.pth")
    if os.path.exists(cached):
        return losses.VGG19Backbone(weights_path=cached)
    return losses.DetectorEncoderBackbone(frozen)


# ---------------------------------------------------------------------------
# rendering


def _ascii_table(headers, rows):
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows])


def _render_method_table(metric_names, summary, report):
    headers = ["method"] + list(metric_names) + ["borda"]
    order = sorted(report["methods"],
                   key=lambda m: (-report["borda"][m], m))
    rows = []
    for meth in order:
        cells = [meth]
        for m in metric_names:
            r = report["ranks"][m][meth]
            s = summary[meth][m]
            cells.append(f"({r:g}) {s['mean']:.4f}±{s['sd']:.4f}")
        cells.append(f"{report['borda'][meth]:g}")
        rows.append(cells)
    return _ascii_table(headers, rows)


def _render_eval(data):
    out = [f"evaluation on {len(data['images'])} image(s), "
           f"intensity scale 0-{data['scale']:g}",
           _render_method_table(data["metrics"], data["summary"],
                                data["report"])]
    return "\n".join(out)


def _render_ablation(data):
    d = data["dfpp"]
    r = data["rules"]
    parts = [
        "decision-level supervision ablation",
        _render_method_table(data["metrics"],
                             d["summary"], d["report"]),
        "",
        "fusion rule comparison",
        _render_method_table(data["metrics"],
                             r["summary"], r["report"]),
        "",
    ]
    if data["flags"]:
        parts.append("trend flags:")
        parts.extend(f"  - {f}" for f in data["flags"])
    else:
        parts.append("trend flags: none")
    return "\n".join(parts)


def render_report(doc):
    """Text table for a stored report document (evaluation or ablation)."""
    data = doc.get("data", doc)
    kind = data.get("kind")
    if kind == "evaluation":
        return _render_eval(data)
    if kind == "ablation":
        return _render_ablation(data)
    raise ValueError(f"unknown report kind: {kind!r}")


# ---------------------------------------------------------------------------
# subcommands


def _detector_progress(rec):
    print(f"  epoch {rec.epoch:3d}  lr {rec.lr:.2e}  "
          f"loss {rec.train_loss:.5f}  miou {rec.val_miou:.4f}",
          file=sys.stderr)


def _fusion_progress(rec):
    print(f"  epoch {rec.epoch:3d}  lr {rec.lr:.2e}  "
          f"train {rec.train.total:.4f}  val {rec.val.total:.4f}",
          file=sys.stderr)


def cmd_synth(args):
    manifest = datasynth.build_dataset(
        args.src, args.out, tile=args.tile, crop=args.crop,
        count=args.count, seed=args.seed, smoothness=args.smoothness)
    print(f"wrote {len(manifest)} samples under {args.out}")


def cmd_train_detector(args):
    data = imagio.read_manifest(args.data)
    cfg = trainer.TrainConfig(lr=args.lr, batch_size=args.batch_size,
                              epochs=args.epochs, seed=args.seed)
    progress = None if args.quiet else _detector_progress
    det, log = focusdet.train_detector(data, cfg, base_width=args.base_width,
                                       progress=progress)
    final = log.epochs[-1].val_miou if log.epochs else float("nan")
    trainer.checkpoint(det, args.out, meta={
        "seed": cfg.seed, "epochs": cfg.epochs, "final_val_miou": final})
    print(f"final validation MIoU {final:.4f}; checkpoint {args.out}")


def cmd_train_fusion(args):
    data = imagio.read_manifest(args.data)
    frozen = focusdet.freeze_detector(trainer.restore_detector(args.detector))
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = trainer.TrainConfig.from_dict(json.load(fh))
    else:
        cfg = trainer.TrainConfig()
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_dfpp:
        cfg.dfpp_enabled = False
    backbone = _pick_backbone(frozen, args.vgg_weights)
    torch.manual_seed(cfg.seed)
    model = fusenet.FusionModel(base_channels=args.base_channels,
                                fusion_rule=args.rule, window=args.window)
    progress = None if args.quiet else _fusion_progress
    model, log = trainer.train_fusion(model, frozen, data, cfg,
                                      backbone=backbone, progress=progress)
    trainer.checkpoint(model, args.out, meta={
        "seed": cfg.seed, "epochs": cfg.epochs, "rule": model.fusion_rule,
        "dfpp_enabled": cfg.dfpp_enabled, "backbone": log.backbone,
        "best_epoch": log.best_epoch})
    log_path = args.out + ".log.json"
    _write_report(log_path, "train-fusion", log.to_dict(),
                  checkpoint=os.path.abspath(args.out))
    print(f"best epoch {log.best_epoch}; checkpoint {args.out}; "
          f"log {log_path}")


def cmd_fuse(args):
    model = trainer.restore_fusion(args.model)
    s1 = imagio.load_image(args.s1)
    s2 = imagio.load_image(args.s2)
    fused = fusenet.fuse(model, s1, s2, rule=args.rule)
    imagio.save_image(fused, args.out, 16)
    print(f"wrote {args.out} ({fused.shape[1]}x{fused.shape[0]})")


def _method_specs(specs):
    out = []
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            path = spec
            name = os.path.basename(os.path.normpath(spec)) or "fused"
        elif not name or not path:
            raise ValueError(f"bad --fused spec {spec!r}, want NAME=DIR")
        if name in (n for n, _ in out):
            raise ValueError(f"duplicate method name {name!r}")
        out.append((name, path))
    return out


def _paired_path(directory, filename, what):
    path = os.path.join(directory, filename)
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing {what} image for {filename}: {path}")
    return path


def cmd_evaluate(args):
    methods = _method_specs(args.fused)
    per_method = {}
    image_ids = None
    for name, fdir in methods:
        files = sorted(f for f in os.listdir(fdir)
                       if f.lower().endswith(".png"))
        if not files:
            raise ValueError(f"no .png images in {fdir}")
        ids = [os.path.splitext(f)[0] for f in files]
        if image_ids is None:
            image_ids = ids
        elif ids != image_ids:
            raise ValueError(
                f"method {name!r} image set differs from {methods[0][0]!r}")
        per = {}
        for fname, iid in zip(files, ids):
            fused = imagio.load_image(os.path.join(fdir, fname))
            s1 = imagio.load_image(_paired_path(args.s1, fname, "s1"))
            s2 = imagio.load_image(_paired_path(args.s2, fname, "s2"))
            gt = (imagio.load_image(_paired_path(args.gt, fname, "gt"))
                  if args.gt else None)
            per[iid] = metrics.metric_battery(fused, s1, s2, gt=gt)
        per_method[name] = per

    metric_names = [m for m in FULL_REFERENCE_METRICS if args.gt]
    metric_names += list(ABLATION_METRICS)
    summary = {name: _summarize(per) for name, per in per_method.items()}
    values = {m: {name: summary[name][m]["mean"] for name, _ in methods}
              for m in metric_names}
    report = _rank_table(values)
    data = {
        "kind": "evaluation",
        "scale": metrics.REPORT_SCALE,
        "metrics": metric_names,
        "methods": [name for name, _ in methods],
        "images": image_ids,
        "per_image": per_method,
        "summary": summary,
        "report": report,
    }
    doc = _write_report(args.out, "evaluate", data)
    print(render_report(doc))
    print(f"report written to {args.out}")


def _ablate_variants():
    specs = [(f"fusion_{rule}", rule, True) for rule in fusenet.FUSION_RULES]
    specs.append(("fusion_dfpp_off", "channel_wise_sf", False))
    return specs


def _train_missing_variants(cfg, train_set, det_ckpt, ckpts, quiet):
    if not os.path.exists(det_ckpt):
        dcfg = trainer.TrainConfig.from_dict(cfg.detector.get("config", {}))
        progress = None if quiet else _detector_progress
        print(f"training detector -> {det_ckpt}", file=sys.stderr)
        det, dlog = focusdet.train_detector(
            train_set, dcfg, base_width=cfg.detector.get("base_width", 16),
            progress=progress)
        final = dlog.epochs[-1].val_miou if dlog.epochs else float("nan")
        trainer.checkpoint(det, det_ckpt, meta={
            "seed": dcfg.seed, "final_val_miou": final})
    frozen = focusdet.freeze_detector(trainer.restore_detector(det_ckpt))
    backbone = _pick_backbone(frozen, cfg.fusion.get("vgg_weights"))
    for name, rule, dfpp in _ablate_variants():
        path = ckpts[name]
        if os.path.exists(path):
            continue
        tcfg = trainer.TrainConfig.from_dict(cfg.fusion.get("config", {}))
        tcfg.dfpp_enabled = dfpp
        torch.manual_seed(tcfg.seed)
        model = fusenet.FusionModel(
            base_channels=cfg.fusion.get("base_channels", 16),
            fusion_rule=rule, window=cfg.fusion.get("window", 11))
        progress = None if quiet else _fusion_progress
        print(f"training {name} -> {path}", file=sys.stderr)
        model, flog = trainer.train_fusion(model, frozen, train_set, tcfg,
                                           backbone=backbone,
                                           progress=progress)
        trainer.checkpoint(model, path, meta={
            "rule": rule, "dfpp_enabled": dfpp, "seed": tcfg.seed,
            "backbone": flog.backbone, "best_epoch": flog.best_epoch})


def cmd_ablate(args):
    cfg = ExperimentConfig.load(args.config)
    out_dir = args.out or os.path.join(output_root(), "ablate")
    models_dir = args.models or os.path.join(output_root(), "models")
    os.makedirs(out_dir, exist_ok=True)

    eval_path = cfg.dataset.get("eval_manifest")
    if not eval_path:
        raise ValueError("config dataset section needs an eval_manifest")
    eval_set = imagio.read_manifest(cfg.resolve(eval_path))

    det_ckpt = cfg.detector.get("checkpoint")
    det_ckpt = (cfg.resolve(det_ckpt) if det_ckpt
                else os.path.join(models_dir, "detector.ckpt"))
    ckpts = {name: os.path.join(models_dir, name + ".ckpt")
             for name, _, _ in _ablate_variants()}

    if args.train_all:
        os.makedirs(models_dir, exist_ok=True)
        train_path = cfg.dataset.get("train_manifest")
        if train_path:
            train_path = cfg.resolve(train_path)
        synth = cfg.dataset.get("synth")
        if (not train_path or not os.path.exists(train_path)) and synth:
            synth = dict(synth)
            synth["src"] = cfg.resolve(synth["src"])
            synth["out"] = cfg.resolve(synth.get("out", os.path.join(
                output_root(), "datasets", "ablate")))
            built = datasynth.build_dataset(
                synth["src"], synth["out"], tile=synth.get("tile", 128),
                crop=synth.get("crop", 64), count=synth.get("count", 200),
                seed=synth.get("seed", 0))
            train_path = os.path.join(built.root, "manifest.jsonl")
        if not train_path:
            raise ValueError(
                "config dataset section needs a train_manifest or synth block")
        train_set = imagio.read_manifest(train_path)
        _train_missing_variants(cfg, train_set, det_ckpt, ckpts, args.quiet)

    missing = [p for p in [det_ckpt, *ckpts.values()]
               if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(
            f"missing variant checkpoint: {missing[0]} "
            f"(run with --train-all to train it)")

    metric_names = tuple(cfg.eval.get("metrics", ABLATION_METRICS))
    directions = dict(metrics.METRIC_DIRECTIONS)
    directions.update(cfg.eval.get("directions", {}))

    summaries, per_variant = {}, {}
    for name, _, _ in _ablate_variants():
        model = trainer.restore_fusion(ckpts[name])
        per = _eval_model_on_set(model, eval_set)
        per_variant[name] = per
        summaries[name] = _summarize(per)

    dfpp_summary = {"with_dfpp": summaries["fusion_channel_wise_sf"],
                    "without_dfpp": summaries["fusion_dfpp_off"]}
    dfpp_values = {m: {row: dfpp_summary[row][m]["mean"]
                       for row in dfpp_summary} for m in metric_names}
    dfpp_report = _rank_table(dfpp_values, directions)
    wins = [m for m in metric_names
            if _beats(dfpp_values[m]["with_dfpp"],
                      dfpp_values[m]["without_dfpp"], directions[m])]

    rule_summary = {rule: summaries[f"fusion_{rule}"]
                    for rule in fusenet.FUSION_RULES}
    rule_values = {m: {rule: rule_summary[rule][m]["mean"]
                       for rule in rule_summary} for m in metric_names}
    rule_report = _rank_table(rule_values, directions)

    flags = trend_flags(wins, metric_names, rule_report["borda"])
    data = {
        "kind": "ablation",
        "scale": metrics.REPORT_SCALE,
        "metrics": list(metric_names),
        "dfpp": {"rows": list(dfpp_summary), "summary": dfpp_summary,
                 "report": dfpp_report, "wins": wins},
        "rules": {"rules": list(fusenet.FUSION_RULES),
                  "summary": rule_summary, "report": rule_report},
        "per_image": per_variant,
        "flags": flags,
    }
    report_path = os.path.join(out_dir, "report.json")
    doc = _write_report(report_path, "ablate", data,
                        checkpoints={k: os.path.abspath(v)
                                     for k, v in ckpts.items()})
    text = render_report(doc)
    with open(os.path.join(out_dir, "report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    print(f"report written to {report_path}")


def cmd_report(args):
    with open(args.input, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    text = render_report(doc)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"table written to {args.out}")
    else:
        print(text)


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dcfuse",
        description="Multi-focus image fusion: data synthesis, training, "
                    "fusion, evaluation, and ablation studies.")
    parser.add_argument("--version", action="version",
                        version=f"dcfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a defocus dataset")
    p.add_argument("--src", required=True, help="directory of sharp images")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--tile", type=int, default=128)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smoothness", type=float, default=None,
                   help="focus map blob scale (default tile/16)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-detector", help="train the focus detector")
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--base-width", type=int, default=16)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train_detector)

    p = sub.add_parser("train-fusion", help="train the fusion network")
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--detector", required=True,
                   help="frozen detector checkpoint")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", help="JSON file of training settings")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rule", choices=fusenet.FUSION_RULES,
                   default="channel_wise_sf")
    p.add_argument("--window", type=int, default=11)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--no-dfpp", action="store_true",
                   help="drop the decision-level loss term")
    p.add_argument("--vgg-weights", help="local pretrained backbone weights")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("fuse", help="fuse one image pair")
    p.add_argument("--model", required=True, help="fusion checkpoint")
    p.add_argument("--s1", required=True)
    p.add_argument("--s2", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rule", choices=fusenet.FUSION_RULES, default=None,
                   help="override the checkpoint's fusion rule")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="score fused images")
    p.add_argument("--fused", required=True, action="append",
                   help="directory of fused images, or NAME=DIR; repeatable")
    p.add_argument("--s1", required=True)
    p.add_argument("--s2", required=True)
    p.add_argument("--gt", help="ground-truth directory for PSNR/MSE/SSIM")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="loss and fusion-rule studies")
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--out", help="report directory (default under "
                                 "DCFUSE_HOME)")
    p.add_argument("--models", help="variant checkpoint directory")
    p.add_argument("--train-all", action="store_true",
                   help="train any missing variant checkpoint")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render a stored report")
    p.add_argument("--in", dest="input", required=True,
                   help="report JSON path")
    p.add_argument("--out", help="write the table here instead of stdout")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    # single-thread keeps reruns byte-identical and matches the stated
    # inference budget conditions
    torch.set_num_threads(1)
    try:
        rc = args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0 if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
