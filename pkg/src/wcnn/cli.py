"""Command-line entry point.

Commands: decompose, synth, train, eval, param-count, gradcheck, ablate,
levels-sweep.  Exit codes are a stable contract: 0 success, 2 usage or
configuration error, 3 numerical failure.  Every run artifact embeds the
canonical configuration and its hash; all randomness flows from the single
`seed` key.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as D
from . import gradcheck as G
from . import metrics as X
from . import model as M
from . import train as TR
from . import wavelet as W
from . import runconfig as RC
from .tensor import ShapeError, Tensor, save_wtns

USAGE_ERRORS = (RC.ConfigError, ShapeError, D.ManifestError, D.PnmError,
                M.CheckpointError, FileNotFoundError)
NUMERIC_ERRORS = (TR.NonFiniteLossError, TR.NonFiniteGradientError)


def _config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    parser.add_argument("--seed", type=int, help="override the seed key")
    parser.add_argument("--threads", type=int, help="worker threads (1 = deterministic)")
    parser.add_argument("--out", default=".", help="output directory")


def _merged_config(args) -> dict[str, str]:
    cfg = RC.load_config(args.config) if args.config else {}
    cfg = RC.apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    if args.threads is not None:
        cfg["threads"] = str(args.threads)
    RC.check_known_keys(cfg)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _split_records(cfg: dict[str, str], model_cfg: M.WaveletCnnConfig):
    manifest_key = RC.get_str(cfg, "data.manifest")
    if not manifest_key:
        raise RC.ConfigError("data.manifest is required")
    manifest = D.load_manifest(manifest_key)
    if len(manifest.class_names) != model_cfg.num_classes:
        raise RC.ConfigError(
            f"manifest has {len(manifest.class_names)} classes, "
            f"model.classes = {model_cfg.num_classes}"
        )
    policy = RC.get_str(cfg, "data.policy", "by-split-column")
    splits = D.make_splits(manifest, policy, k=RC.get_int(cfg, "data.k", 0) or None,
                           seed=RC.get_int(cfg, "seed", 0))
    index = RC.get_int(cfg, "data.split", 0)
    if not 0 <= index < len(splits):
        raise RC.ConfigError(f"data.split {index} out of range; policy yields {len(splits)}")
    train_idx, test_idx = splits[index]
    return manifest, D.load_images(manifest, train_idx), D.load_images(manifest, test_idx)


def _embed_run_config(report: TR.TrainReport, cfg: dict[str, str]) -> None:
    report.header["config_hash"] = RC.config_hash(cfg)
    for key, value in cfg.items():
        report.header[f"cfg.{key}"] = value


# --- commands -------------------------------------------------------------------


def cmd_decompose(args) -> int:
    levels = args.levels
    if not 1 <= levels <= 5:
        raise RC.ConfigError(f"levels must be in 1..5, got {levels}")
    pixels = D.load_pnm(args.image)
    image = Tensor(pixels[None], dtype=args.precision)
    pyramid = W.decompose(image, levels)
    out = _out_dir(args)
    stem = Path(args.image).stem
    written = []
    for t, band, tensor in pyramid.bands():
        base = f"{stem}_L{t}_{band}"
        sub = Tensor(tensor.data[0])  # drop the batch axis: [channels, h, w]
        save_wtns(out / f"{base}.wtns", sub)
        written.append(f"{base}.wtns")
        if args.pgm:
            lo, hi = float(sub.data.min()), float(sub.data.max())
            scale = (sub.data - lo) / (hi - lo) if hi > lo else np.zeros_like(sub.data)
            D.write_pnm(out / f"{base}.pgm", scale)
            (out / f"{base}.minmax.txt").write_text(f"min {lo!r}\nmax {hi!r}\n")
    for name in written:
        print(name)
    if args.verify:
        back = W.reconstruct(pyramid)
        denom = max(float(np.abs(image.data).max()), 1e-30)
        err = float(np.abs(back.data - image.data).max()) / denom
        print(f"max_reconstruction_error\t{err:.3e}")
    return 0


def cmd_synth(args) -> int:
    manifest = D.synth_textures(args.out, classes=args.classes,
                                samples_per_class=args.samples, size=args.size,
                                seed=args.seed if args.seed is not None else 0)
    print(manifest)
    return 0


def _train_once(cfg: dict[str, str], out: Path | None,
                model_cfg: M.WaveletCnnConfig | None = None,
                checkpoint_name: str = "best.wcnn"):
    model_cfg = model_cfg or RC.model_config_from(cfg)
    train_cfg = RC.train_config_from(cfg)
    _, train_records, test_records = _split_records(cfg, model_cfg)
    model = M.build(model_cfg)
    if out is not None:
        train_cfg.checkpoint_path = str(out / checkpoint_name)
    report = TR.train(model, train_records, test_records, train_cfg)
    _embed_run_config(report, cfg)
    return model, report


def cmd_train(args) -> int:
    cfg = _merged_config(args)
    out = _out_dir(args)
    _, report = _train_once(cfg, out)
    (out / "report.tsv").write_text(report.to_text())
    print(f"best_epoch\t{report.best_epoch}")
    print(f"best_test_acc\t{report.best_test_acc:.2f}")
    print(f"report\t{out / 'report.tsv'}")
    print(f"checkpoint\t{out / 'best.wcnn'}")
    return 0


def cmd_eval(args) -> int:
    model = M.load_model(args.checkpoint)
    manifest = D.load_manifest(args.manifest)
    if len(manifest.class_names) != model.config.num_classes:
        raise RC.ConfigError(
            f"manifest has {len(manifest.class_names)} classes, checkpoint expects "
            f"{model.config.num_classes}"
        )
    if args.policy:
        splits = D.make_splits(manifest, args.policy, k=args.k, seed=args.seed or 0)
        if not 0 <= args.split < len(splits):
            raise RC.ConfigError(f"--split {args.split} out of range ({len(splits)} splits)")
        records = D.load_images(manifest, splits[args.split][1])
    else:
        records = D.load_images(manifest)
    result = TR.evaluate(model, records)
    ckpt_hash = RC.config_hash(dict(M.config_to_items(model.config)))
    text = f"# checkpoint_config_hash = {ckpt_hash}\n"
    if model.config.head == "multilabel":
        text += X.bundle_to_tsv(result) + f"accuracy\t{result['accuracy']:.2f}\n"
    else:
        text += f"accuracy\t{result['accuracy']:.2f}\n"
    out = _out_dir(args)
    (out / "metrics.tsv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_param_count(args) -> int:
    cfg = _merged_config(args)
    model = M.build(RC.model_config_from(cfg))
    total, breakdown = M.param_count(model)
    print("layer\tparams")
    for name, count in breakdown:
        print(f"{name}\t{count}")
    print(f"TOTAL\t{total}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _merged_config(args)
    model_cfg = None
    if args.config or args.set:
        model_cfg = RC.model_config_from(cfg)
        if model_cfg.precision != "f64":
            model_cfg = replace(model_cfg, precision="f64")
    stride = 1 if args.full else 4
    rows = G.layer_checks() + G.model_checks(model_cfg, input_stride=stride,
                                             coords_per_param=args.coords_per_param)
    print("check\tmax_rel_error")
    worst = 0.0
    for name, err in rows:
        print(f"{name}\t{err:.3e}")
        worst = max(worst, err)
    print(f"WORST\t{worst:.3e}")
    if worst >= args.tolerance:
        print(f"FAIL: {worst:.3e} >= tolerance {args.tolerance:.1e}", file=sys.stderr)
        return 3
    return 0


def cmd_ablate(args) -> int:
    cfg = _merged_config(args)
    out = _out_dir(args)
    model_cfg = RC.model_config_from(cfg)
    rows = [f"# config_hash = {RC.config_hash(cfg)}", "variant\tparams\tbest_test_acc"]
    for variant, mc in (("full", model_cfg), ("ablated", replace(model_cfg, ablated=True))):
        model, report = _train_once(cfg, out, model_cfg=mc,
                                    checkpoint_name=f"best_{variant}.wcnn")
        total, _ = M.param_count(model)
        rows.append(f"{variant}\t{total}\t{report.best_test_acc:.2f}")
    text = "\n".join(rows) + "\n"
    (out / "ablate.tsv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_levels_sweep(args) -> int:
    cfg = _merged_config(args)
    out = _out_dir(args)
    levels = [int(v) for v in args.levels.split(",") if v]
    if not levels:
        raise RC.ConfigError("--levels needs a comma-separated list, e.g. 2,3,4")
    base_cfg = RC.model_config_from(cfg)
    base_seed = RC.get_int(cfg, "seed", 0)
    schedule = base_cfg.channels or M.DEFAULT_CHANNELS
    if len(schedule) < max(levels):
        raise RC.ConfigError(
            f"model.channels has {len(schedule)} entries; sweep needs {max(levels)}"
        )
    detail = [f"# config_hash = {RC.config_hash(cfg)}"]
    cells = []
    for lv in levels:
        accs = []
        for s in range(args.seeds):  # identical seed list for every level
            run_cfg = dict(cfg)
            run_cfg["seed"] = str(base_seed + s)
            model_cfg = replace(base_cfg, levels=lv, channels=tuple(schedule[:lv]),
                                init_seed=base_seed + s)
            _, report = _train_once(run_cfg, None, model_cfg=model_cfg)
            accs.append(report.best_test_acc)
            detail.append(f"# level {lv} seed {base_seed + s}: {report.best_test_acc:.2f}")
        mean, sd = X.split_aggregate(accs)
        cells.append(X.format_mean_sd(mean, sd))
    lines = detail + [
        "levels\t" + "\t".join(str(lv) for lv in levels),
        "accuracy\t" + "\t".join(cells),
    ]
    text = "\n".join(lines) + "\n"
    (out / "levels_sweep.tsv").write_text(text)
    sys.stdout.write(text)
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wcnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="write the subband pyramid of an image")
    p.add_argument("image", help="binary PGM/PPM input")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--out", default=".")
    p.add_argument("--pgm", action="store_true", help="also write rescaled PGM previews")
    p.add_argument("--verify", action="store_true", help="report the reconstruction error")
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("synth", help="generate the synthetic texture corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train on a manifest dataset")
    _config_options(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--policy", choices=("by-split-column", "leave-one-group-in", "k-fold"))
    p.add_argument("--split", type=int, default=0)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("param-count", help="per-layer parameter table")
    _config_options(p)
    p.set_defaults(fn=cmd_param_count)

    p = sub.add_parser("gradcheck", help="finite-difference verification suite")
    _config_options(p)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--full", action="store_true", help="sweep every input coordinate")
    p.add_argument("--coords-per-param", type=int, default=6)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train the full and detail-free variants side by side")
    _config_options(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("levels-sweep", help="accuracy table over decomposition depths")
    _config_options(p)
    p.add_argument("--levels", default="2,3,4")
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(fn=cmd_levels_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
