"""Command-line entry points: synth, train, infer, eval, plot.

Configuration resolves in order: profile defaults, then an optional config
file, then repeated ``--set key=value`` overrides, then ``--seed``.  Exit
codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import checkpoint as ckpt_io
from . import config as config_mod
from . import inference, metrics, synthetic, training
from .data import load_annotations, load_manifest
from .tensorfile import FormatError


def _resolve_config(args) -> config_mod.RunConfig:
    cfg = config_mod.profile_config(args.profile)
    if args.config:
        cfg = config_mod.load_config(args.config, base=cfg)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if overrides:
        cfg = config_mod.parse_overrides(cfg, overrides)
    if args.seed is not None:
        cfg = config_mod.parse_overrides(cfg, {"seed": str(args.seed)})
    return cfg


def cmd_synth(args) -> int:
    cfg = _resolve_config(args)
    spec = synthetic.SynthSpec(
        n_videos=cfg.synth_videos,
        length=cfg.synth_length,
        channels=cfg.synth_channels,
        max_instances=cfg.synth_max_instances,
        seed=cfg.seed,
        min_duration=cfg.synth_min_duration,
        max_duration=cfg.synth_max_duration,
        offset=cfg.synth_offset,
        noise=cfg.synth_noise,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path, annotations_path = synthetic.generate_synthetic_dataset(spec, out_dir)
    config_mod.save_config(out_dir / "run.cfg", cfg)
    print(f"wrote {spec.n_videos} videos under {out_dir}")
    print(f"manifest: {manifest_path}")
    print(f"annotations: {annotations_path}")
    return 0


def _load_dataset(args, cfg):
    annotations = load_annotations(args.annotations)
    manifest = load_manifest(args.manifest, annotations, mode=cfg.mode)
    return annotations, manifest


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    _, manifest = _load_dataset(args, cfg)
    samples = training.build_samples(manifest, cfg)
    in_channels = samples[0].features.shape[1]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"
    ckpt_path = out_dir / "model.ckpt"

    if args.resume:
        ckpt = ckpt_io.load_checkpoint(args.resume)
        model = ckpt_io.restore_model(ckpt)
        records, optimizer = training.resume_training(
            model, ckpt, samples, cfg, epochs=args.epochs, log_path=log_path
        )
        epoch_done = args.epochs if args.epochs is not None else cfg.epochs
    else:
        model = training.build_model(training.model_config(cfg, in_channels), cfg.seed)
        records, optimizer = training.train(
            model, samples, cfg, epochs=args.epochs, log_path=log_path
        )
        epoch_done = args.epochs if args.epochs is not None else cfg.epochs
    ckpt_io.save_checkpoint(
        ckpt_path, model, epoch=epoch_done, seed=cfg.seed, optimizer=optimizer
    )
    config_mod.save_config(out_dir / "run.cfg", cfg)
    if records:
        print(f"trained {len(records)} epochs; final loss {records[-1].breakdown.total:.4f}")
    print(f"checkpoint: {ckpt_path}")
    return 0


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    if args.suppress:
        cfg = config_mod.parse_overrides(cfg, {"suppress": args.suppress})
    _, manifest = _load_dataset(args, cfg)
    ckpt = ckpt_io.load_checkpoint(args.checkpoint)
    model = ckpt_io.restore_model(ckpt)
    proposals = inference.run_inference(model, manifest, cfg, jobs=args.jobs)
    inference.write_proposals(args.out, proposals)
    total = sum(len(v) for v in proposals.values())
    print(f"wrote {total} proposals for {len(proposals)} videos to {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    annotations = load_annotations(args.annotations)
    proposals = inference.load_proposals(args.proposals)

    unknown = sorted(set(proposals) - set(annotations))
    if unknown:
        raise ValueError(f"proposal ids missing from annotations: {unknown}")

    gt = {
        vid: [(inst.t_start, inst.t_end) for inst in rec.instances]
        for vid, rec in annotations.items()
    }
    eval_cfg = metrics.EvalConfig.for_mode(cfg.eval_mode)
    ar = metrics.ar_at_an(proposals, gt, eval_cfg)
    curve = metrics.ar_curve(proposals, gt, eval_cfg, jobs=args.jobs)
    auc = metrics.auc_from_curve(curve)

    map_by_tiou = {}
    with open(args.proposals) as fp:
        raw = json.load(fp)
    if any(e.get("label") for entries in raw.values() for e in entries):
        detections = {
            vid: [
                (float(e["segment"][0]), float(e["segment"][1]),
                 float(e["score"]), e["label"])
                for e in entries if e.get("label")
            ]
            for vid, entries in raw.items()
        }
        gt_labeled = {
            vid: [(i.t_start, i.t_end, i.label or "") for i in rec.instances]
            for vid, rec in annotations.items()
        }
        map_by_tiou = metrics.detection_map(detections, gt_labeled, eval_cfg.tiou_set)

    metrics.write_results(args.out, ar, auc, map_by_tiou)
    curve_path = args.curve_csv or str(Path(args.out).with_suffix(".curve.csv"))
    metrics.write_curve_csv(curve_path, curve)
    print(f"AR@AN: {({an: round(v, 4) for an, v in ar.items()})}")
    print(f"AUC: {auc:.2f}")
    print(f"results: {args.out}")
    return 0


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "prsanet"

    with open(args.curve, newline="") as fp:
        reader = csv.DictReader(fp)
        field_names = reader.fieldnames or []
        for required in ("AN", "AR"):
            if required not in field_names:
                raise ValueError(f"curve CSV is missing column {required!r}")
        rows = [(int(row["AN"]), float(row["AR"])) for row in reader]
    if not rows:
        raise ValueError("curve CSV has no data rows")
    an = [r[0] for r in rows]
    ar = [r[1] for r in rows]

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(an, ar, marker="o", markersize=3)
    ax.set_xlabel("average number of proposals (AN)")
    ax.set_ylabel("average recall (AR)")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, metadata={"Date": None} if str(args.out).endswith(".svg") else None)
    plt.close(fig)
    print(f"plot: {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prsanet",
        description="Temporal action proposal generation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--profile", default="thumos", choices=sorted(config_mod.PROFILES))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--epochs", type=int, default=None,
                   help="stop after this many epochs (default: full schedule)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="produce proposals from a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--suppress", choices=["none", "nms", "soft_nms"], default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a proposal file")
    add_common(p)
    p.add_argument("--proposals", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curve-csv", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="plot an AR-vs-AN curve CSV")
    p.add_argument("--curve", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FormatError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (training.TrainingDiverged, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
