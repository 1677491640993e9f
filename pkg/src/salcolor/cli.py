"""Command line interface: train, colorize, evaluate, analyze-hue, make-toy-data.

Configuration precedence is defaults < config file < SCGAN_SEED env var
(seed only) < --set overrides < --seed. Every subcommand is deterministic
given identical inputs and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import (
    RunConfig,
    config_to_dict,
    config_to_yaml,
    load_run_config,
)
from .data import build_index, list_image_files, load_samples, make_toy_dataset, _decode
from .hue import empty_analysis, salient_patch_hue_analysis
from .imageops import apply_saliency_weight, denormalize, normalize, rgb_to_gray
from .metrics import evaluate_pairs
from .training import (
    TrainingDiverged,
    load_generator_from_checkpoint,
    read_manifest,
    train_stage1,
    train_stage2,
)

log = logging.getLogger(__name__)


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the training seed")


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(path=args.config, overrides=args.overrides, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="salcolor",
        description="Saliency-guided colorization: training, inference, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the two-phase training schedule")
    _add_config_args(p_train)
    p_train.add_argument("--stage", choices=["1", "2", "all"], default="all")
    p_train.add_argument("--resume", type=Path, default=None, help="checkpoint directory to resume")
    p_train.add_argument(
        "--from-scratch", action="store_true",
        help="allow stage 2 without a stage-1 checkpoint",
    )
    p_train.add_argument("--out", type=Path, default=None, help="override the output directory")

    p_col = sub.add_parser("colorize", help="colorize grayscale images with a trained model")
    p_col.add_argument("--checkpoint", type=Path, required=True)
    p_col.add_argument("--input", type=Path, required=True, help="image file or directory")
    p_col.add_argument("--output", type=Path, required=True, help="output directory")
    p_col.add_argument("--save-saliency", action="store_true")
    p_col.add_argument("--save-weighted", action="store_true")

    p_eval = sub.add_parser("evaluate", help="PSNR/SSIM/colorfulness over paired directories")
    p_eval.add_argument("--pred", type=Path, required=True)
    p_eval.add_argument("--gt", type=Path, required=True)
    p_eval.add_argument("--out", type=Path, required=True, help="report path prefix")
    _add_config_args(p_eval)

    p_hue = sub.add_parser("analyze-hue", help="hue statistics of salient vs unsalient patches")
    p_hue.add_argument("--images", type=Path, required=True)
    p_hue.add_argument("--saliency", type=Path, required=True)
    p_hue.add_argument("--out", type=Path, required=True, help="report path prefix")
    p_hue.add_argument("--patch", type=int, default=64)
    p_hue.add_argument("--high-thresh", type=float, default=0.5)
    p_hue.add_argument("--coverage", type=float, default=0.8)
    p_hue.add_argument("--hue-seed", type=int, default=0)

    p_toy = sub.add_parser("make-toy-data", help="generate a synthetic shapes dataset")
    p_toy.add_argument("--n", type=int, required=True)
    p_toy.add_argument("--size", type=int, default=256)
    p_toy.add_argument("--data-seed", type=int, default=0)
    p_toy.add_argument("--out", type=Path, required=True)

    p_print = sub.add_parser("print-config", help="print the effective configuration as YAML")
    _add_config_args(p_print)

    return parser


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    if args.out is not None:
        config.output_dir = str(args.out)
    if not config.data.color_dir or not config.data.saliency_dir:
        raise ValueError("training requires data.color_dir and data.saliency_dir in the config")
    index = build_index(config.data.color_dir, config.data.saliency_dir)
    samples = load_samples(index, config.generator.input_size)
    log.info("loaded %d training samples", len(samples))

    out_root = Path(config.output_dir)
    stage1_ckpt = out_root / "stage1" / "checkpoint"

    resume_stage = None
    if args.resume is not None:
        resume_stage = read_manifest(args.resume)["stage"]
        if args.stage != "all" and str(resume_stage) != args.stage:
            raise ValueError(
                f"--resume checkpoint is stage {resume_stage} but --stage {args.stage} was requested"
            )

    run_first = args.stage in ("1", "all") and resume_stage != 2
    run_second = args.stage in ("2", "all")

    ckpt = None
    if run_first:
        ckpt = train_stage1(
            config, samples,
            resume_from=args.resume if resume_stage == 1 else None,
        )
        print(f"stage 1 checkpoint: {ckpt.path}")
    if run_second:
        if resume_stage == 2:
            ckpt = train_stage2(config, samples, resume_from=args.resume)
        else:
            init = ckpt.path if ckpt is not None else None
            if init is None:
                if stage1_ckpt.exists():
                    init = stage1_ckpt
                elif not args.from_scratch:
                    raise ValueError(
                        f"no stage-1 checkpoint at {stage1_ckpt}; "
                        "train stage 1 first or pass --from-scratch"
                    )
            ckpt = train_stage2(
                config, samples, init_from=init, from_scratch=args.from_scratch
            )
        print(f"stage 2 checkpoint: {ckpt.path}")
    return 0


def _nearest_multiple(value: int, base: int = 32) -> int:
    return max(base, int(round(value / base)) * base)


def cmd_colorize(args: argparse.Namespace) -> int:
    gen, _config = load_generator_from_checkpoint(args.checkpoint)
    if args.input.is_dir():
        inputs = sorted(list_image_files(args.input).values())
    elif args.input.is_file():
        inputs = [args.input]
    else:
        raise FileNotFoundError(f"input not found: {args.input}")
    if not inputs:
        raise ValueError(f"no images under {args.input}")
    args.output.mkdir(parents=True, exist_ok=True)

    factor = 2 ** gen.config.encoder_depth
    for path in inputs:
        rgb = _decode(path, "RGB")
        gray = rgb_to_gray(rgb)
        h, w = gray.shape
        nh, nw = _nearest_multiple(h, factor), _nearest_multiple(w, factor)
        work = gray
        if (nh, nw) != (h, w):
            log.warning(
                "%s is %dx%d; resizing to %dx%d for the network and back",
                path.name, w, h, nw, nh,
            )
            work = np.asarray(Image.fromarray(gray).resize((nw, nh), Image.BILINEAR))
        with torch.no_grad():
            color, sal = gen(normalize(work))
        color_img = denormalize(color)
        if (nh, nw) != (h, w):
            color_img = np.asarray(Image.fromarray(color_img).resize((w, h), Image.BILINEAR))
        Image.fromarray(color_img).save(args.output / f"{path.stem}.png")
        if args.save_saliency:
            sal_img = np.rint(sal.squeeze(0).numpy() * 255.0).astype(np.uint8)
            if (nh, nw) != (h, w):
                sal_img = np.asarray(Image.fromarray(sal_img).resize((w, h), Image.BILINEAR))
            Image.fromarray(sal_img).save(args.output / f"{path.stem}_saliency.png")
        if args.save_weighted:
            weighted = denormalize(apply_saliency_weight(color, sal))
            if (nh, nw) != (h, w):
                weighted = np.asarray(Image.fromarray(weighted).resize((w, h), Image.BILINEAR))
            Image.fromarray(weighted).save(args.output / f"{path.stem}_weighted.png")
    print(f"colorized {len(inputs)} image(s) into {args.output}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    report = evaluate_pairs(args.pred, args.gt, config_snapshot=config_to_dict(config))
    csv_path = report.to_csv(args.out.with_suffix(".csv"))
    json_path = report.to_json(args.out.with_suffix(".json"))
    agg = report.aggregates
    print(
        f"evaluated {agg['count']} pairs: mean_psnr={agg['mean_psnr_db']} "
        f"mean_ssim={agg['mean_ssim']:.4f} mean_cci={agg['mean_cci']:.2f} "
        f"cci_ratio={agg['cci_ratio_exact']}"
    )
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_analyze_hue(args: argparse.Namespace) -> int:
    image_files = list_image_files(args.images)
    sal_files = list_image_files(args.saliency)
    unmatched = sorted(set(image_files) ^ set(sal_files))
    if unmatched:
        raise ValueError(f"unmatched files between images and saliency: {unmatched}")
    if not image_files:
        raise ValueError(f"no images under {args.images}")

    combined = empty_analysis()
    for i, stem in enumerate(sorted(image_files)):
        img = _decode(image_files[stem], "RGB")
        sal = _decode(sal_files[stem], "L").astype(np.float64) / 255.0
        analysis = salient_patch_hue_analysis(
            img, sal,
            patch=args.patch, high_thresh=args.high_thresh,
            coverage=args.coverage, seed=args.hue_seed + i,
        )
        combined.merge(analysis)

    payload = {
        "params": {
            "patch": args.patch,
            "high_thresh": args.high_thresh,
            "coverage": args.coverage,
            "seed": args.hue_seed,
            "images": len(image_files),
        },
        "classes": combined.to_dict(),
    }
    json_path = args.out.with_suffix(".json")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    csv_path = args.out.with_suffix(".csv")
    classes = combined.classes()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hue_bin"] + list(classes))
        for b in range(360):
            writer.writerow([b] + [int(stats.histogram[b]) for stats in classes.values()])

    summary_path = args.out.parent / (args.out.name + "_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["class", "n_patches", "chromatic_pixels", "green_blue_fraction", "hue_circular_variance"]
        )
        for name, stats in classes.items():
            writer.writerow([
                name, stats.n_patches, stats.chromatic_pixels,
                "" if stats.green_blue_fraction is None else repr(stats.green_blue_fraction),
                "" if stats.hue_circular_variance is None else repr(stats.hue_circular_variance),
            ])
    for name, stats in classes.items():
        gb = stats.green_blue_fraction
        print(
            f"{name}: patches={stats.n_patches} chromatic={stats.chromatic_pixels} "
            f"green_blue={'n/a' if gb is None else f'{gb:.4f}'}"
        )
    print(f"wrote {json_path}, {csv_path}, {summary_path}")
    return 0


def cmd_make_toy_data(args: argparse.Namespace) -> int:
    index = make_toy_dataset(args.n, args.size, args.data_seed, args.out)
    print(f"wrote {len(index)} image pairs under {args.out} (color/, saliency/)")
    return 0


def cmd_print_config(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    sys.stdout.write(config_to_yaml(config))
    return 0


_COMMANDS = {
    "train": cmd_train,
    "colorize": cmd_colorize,
    "evaluate": cmd_evaluate,
    "analyze-hue": cmd_analyze_hue,
    "make-toy-data": cmd_make_toy_data,
    "print-config": cmd_print_config,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    sys.exit(main())


if __name__ == "__main__":
    entry()
