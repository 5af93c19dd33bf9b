"""Command-line surface: make-synthetic, train, predict, evaluate, shapes.

Exit codes: 0 success, 2 usage/configuration error, 3 data error,
4 numerical failure. Every command writes a run_manifest.json next to its
outputs (command, resolved configs, seed, artifact hashes, timestamps);
reruns with identical inputs and seeds reproduce the artifacts bit for bit,
manifest timestamps aside.
"""

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .core import (AblationSpec, NetworkConfig, ablation_from_name, config_to_dict,
                   expected_shapes, load_config)
from .data import (DatasetManifest, SynthSpec, normalize_depth, read_gray01,
                   read_rgb01, save_image, synth_generate, write_dataset)
from .errors import (CheckpointError, ConfigurationError, DataError, InputError,
                     NumericalError)
from .netops import TensorParams
from .network import forward, predict
from .trainer import load_checkpoint, train, train_config_from_dict


def _utc_now():
    return datetime.now(timezone.utc).isoformat()


def _hash_files(paths):
    h = hashlib.sha256()
    for p in sorted(Path(x) for x in paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _write_manifest(out_dir, command, payload, artifacts):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "written_at": _utc_now(),
        "artifact_hash": _hash_files(artifacts) if artifacts else None,
        **payload,
    }
    with open(out / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_configs(args):
    if getattr(args, "config", None):
        net, ab, train_over = load_config(args.config)
    else:
        net, ab, train_over = NetworkConfig(), AblationSpec(), {}
    if getattr(args, "ablation", None):
        ab = ablation_from_name(args.ablation)
    return net, ab, train_over


def cmd_make_synthetic(args):
    spec = SynthSpec(seed=args.seed, count=args.count, resolution=args.resolution,
                     shapes_min=args.shapes_min, shapes_max=args.shapes_max,
                     contrast_min=args.contrast_min, contrast_max=args.contrast_max)
    triplets = synth_generate(spec)
    root = write_dataset(args.out, triplets)
    files = sorted(root.glob("*/*.png"))
    _write_manifest(root, "make-synthetic",
                    {"spec": dataclasses.asdict(spec), "seed": spec.seed,
                     "items": [t.id for t in triplets]}, files)
    print(f"wrote {len(triplets)} triplets to {root}")
    return 0


def cmd_train(args):
    net, ab, train_over = _load_configs(args)
    for name in ("lr", "iters", "iter_size", "batch_size", "momentum",
                 "weight_decay", "lr_drop_at", "seed"):
        val = getattr(args, name, None)
        if val is not None:
            train_over["total_iters" if name == "iters" else name] = val
    tcfg = train_config_from_dict(train_over)
    manifest = DatasetManifest.from_dir(args.data)
    result = train(net, ab, tcfg, manifest, out_dir=args.out,
                   log_cb=(_print_row if args.verbose else None))
    out = Path(args.out)
    _write_manifest(out, "train",
                    {"config": config_to_dict(net, ab, dataclasses.asdict(tcfg)),
                     "seed": tcfg.seed, "data": str(args.data),
                     "final_loss": result.final_loss},
                    [out / "checkpoint.bin", out / "loss_log.csv"])
    print(f"trained {tcfg.total_iters} updates; "
          f"loss {result.initial_loss:.4f} -> {result.final_loss:.4f}; "
          f"checkpoint at {out / 'checkpoint.bin'}")
    return 0


def _print_row(row):
    terms = " ".join(f"{k}={v:.4f}" for k, v in row.items() if k.startswith("loss_"))
    print(f"iter {row['iter']:6d} lr {row['lr']:.2e} loss {row['loss']:.5f} {terms}")


def _iter_predict_inputs(input_dir, need_depth):
    root = Path(input_dir)
    rgb_dir = root / "RGB"
    if not rgb_dir.is_dir():
        raise DataError(f"{root} lacks RGB/ subdirectory")
    invert = False
    mpath = root / "manifest.json"
    if mpath.exists():
        invert = bool(json.loads(mpath.read_text()).get("invert_depth", False))
    items = sorted(p.stem for p in rgb_dir.glob("*.png"))
    if not items:
        raise DataError(f"no PNG inputs under {rgb_dir}")
    for item in items:
        rgb = read_rgb01(rgb_dir / f"{item}.png")
        depth = None
        dpath = root / "depth" / f"{item}.png"
        if need_depth:
            if not dpath.exists():
                raise DataError(f"missing depth map {dpath}")
            depth = normalize_depth(read_gray01(dpath), invert)[None]
        yield item, rgb, depth


def cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    if args.config:
        net, ab, _ = load_config(args.config)
        from .trainer import config_hash

        if config_hash(net, ab) != ckpt.config_hash:
            raise CheckpointError(
                "--config does not match the checkpoint's config hash")
    net, ab = ckpt.config, ckpt.ablation
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for item, rgb, depth in _iter_predict_inputs(args.input_dir, ab.use_depth):
        sal = predict(rgb, depth, ckpt.store, net, ab)
        path = out / f"{item}.png"
        save_image(path, sal)
        written.append(path)
        if args.dump_features:
            _dump_features(args.dump_features, item, rgb, depth, ckpt, net, ab)
    _write_manifest(out, "predict",
                    {"checkpoint": str(args.checkpoint), "config_hash": ckpt.config_hash,
                     "seed": ckpt.train_config.seed, "count": len(written)}, written)
    print(f"wrote {len(written)} saliency maps to {out}")
    return 0


def _dump_features(dump_dir, item, rgb, depth, ckpt, net, ab):
    """Channel-mean grids of the weighting intermediates, for inspection."""
    from . import autodiff as ad
    from .data import bilinear_resize

    res = net.input_resolution
    rgb_in = bilinear_resize(rgb, res, res).astype(net.np_dtype)
    depth_in = (bilinear_resize(depth, res, res).astype(net.np_dtype)
                if depth is not None else None)
    with ad.no_grad():
        result = forward(rgb_in, depth_in, TensorParams(ckpt.store), net, ab,
                         keep_intermediates=True, validate=False)
    for key, fm in (result.intermediates or {}).items():
        a = fm.array.mean(axis=0)
        lo, hi = a.min(), a.max()
        a = np.zeros_like(a) if hi <= lo else (a - lo) / (hi - lo)
        save_image(Path(dump_dir) / item / (key.replace("/", "_") + ".png"), a)


def cmd_evaluate(args):
    report, rows = metrics_mod.evaluate_dataset(args.pred, args.gt,
                                                skip_missing=args.skip_missing)
    path = metrics_mod.write_report(report, rows, args.report)
    out = Path(args.report)
    _write_manifest(out, "evaluate",
                    {"pred": str(args.pred), "gt": str(args.gt), "seed": None,
                     "images": len(rows)},
                    [path, out / "curves.csv", out / "per_image.csv"])
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_shapes(args):
    net, ab, _ = _load_configs(args)
    if args.resolution:
        net = dataclasses.replace(net, input_resolution=args.resolution)
    table = expected_shapes(net, ab)
    width = max(len(k) for k in table)
    for key in table:
        print(f"{key:<{width}}  {table[key]}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cmwnet",
        description="Cross-modal weighting network for RGB-D salient object detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate a synthetic RGB-D dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--shapes-min", type=int, default=1)
    p.add_argument("--shapes-max", type=int, default=3)
    p.add_argument("--contrast-min", type=float, default=0.35)
    p.add_argument("--contrast-max", type=float, default=0.6)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config (network/ablation/train sections)")
    p.add_argument("--ablation", help="variant name, e.g. 'w/o-RW' or 'C2S'")
    p.add_argument("--iters", type=int, help="override total update count")
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-drop-at", type=int, dest="lr_drop_at")
    p.add_argument("--iter-size", type=int, dest="iter_size")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write saliency maps for a directory of inputs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", required=True, dest="input_dir")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--config", help="optional config to cross-check against the checkpoint")
    p.add_argument("--dump-features", dest="dump_features",
                   help="directory for weighting-intermediate image grids")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--skip-missing", action="store_true", dest="skip_missing")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("shapes", help="print the expected shape table")
    p.add_argument("--config")
    p.add_argument("--ablation")
    p.add_argument("--resolution", type=int)
    p.set_defaults(func=cmd_shapes)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, InputError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
