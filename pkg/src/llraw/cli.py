"""Command-line front end.

Subcommands: synth, quantize, awd-demo, fold-check, train-toy, disturbance.
Every command is deterministic for a fixed seed; --seed overrides the
config file. Exit codes: 0 success, 2 config error, 3 I/O error,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from llraw import awd as awd_mod
from llraw import dsl as dsl_mod
from llraw import images, shapes, tnsr
from llraw import isp as isp_mod
from llraw import noise as noise_mod
from llraw import scb as scb_mod
from llraw.errors import (
    DataError,
    DimensionError,
    DomainError,
    FormatError,
    LlrawError,
    NumericError,
    ParameterError,
    UsageError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


def _load_json(path) -> dict:
    text = Path(path).read_text()
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ParameterError(f"{path}: top-level JSON value must be an object")
    return data


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _load_image_tensor(path) -> np.ndarray:
    p = str(path)
    if p.endswith(".png"):
        return images.read_png(p)
    return tnsr.read_tnsr(p)


def _isp_from(args) -> isp_mod.IspParams:
    if args.isp:
        return isp_mod.IspParams.from_dict(_load_json(args.isp))
    return isp_mod.default_isp()


def _noise_from(args, seed_override) -> noise_mod.NoiseParams:
    cfg = _load_json(args.noise) if args.noise else {}
    if seed_override is not None:
        cfg["seed"] = seed_override
    elif "seed" not in cfg:
        cfg["seed"] = 0
    return noise_mod.NoiseParams.from_dict(cfg)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    srgb = isp_mod.SrgbImage(images.read_png(args.input))
    isp = _isp_from(args)
    params = _noise_from(args, args.seed)
    clean, noisy = noise_mod.synthesize_lowlight(srgb, isp, params)

    prefix = args.out_prefix
    tnsr.write_tnsr(f"{prefix}_clean.tnsr", clean.pixels)
    tnsr.write_tnsr(f"{prefix}_noisy.tnsr", noisy.pixels)
    base = isp.to_dict()
    images.write_sidecar(f"{prefix}_clean.json",
                         {**base, "bit_depth": clean.bit_depth,
                          "clip_fraction": clean.clip_fraction})
    images.write_sidecar(f"{prefix}_noisy.json",
                         {**base, "bit_depth": noisy.bit_depth,
                          "clip_fraction": noisy.clip_fraction,
                          "noise": params.to_dict(), "seed": params.seed})
    images.write_png(f"{prefix}_clean_preview.png", isp_mod.process(clean, isp).pixels)
    images.write_png(f"{prefix}_noisy_preview.png", isp_mod.process(noisy, isp).pixels)
    return EXIT_OK


def cmd_quantize(args) -> int:
    values = tnsr.read_tnsr(args.input)
    raw = isp_mod.RawRgbImage(values)
    bits_list = [int(b) for b in args.bits.split(",") if b]
    rows = []
    for bits in bits_list:
        q = isp_mod.quantize(raw, bits)
        rows.append((bits, isp_mod.psnr(q.pixels, raw.pixels)))
        if args.out_dir:
            out = Path(args.out_dir) / f"quantized_{bits}bit.tnsr"
            tnsr.write_tnsr(out, q.pixels)
    _write_csv(args.out_csv, ["bits", "psnr_db"], rows)
    return EXIT_OK


def _downsamplers(kernel_size: int, channels: int, seed: int):
    """Closures for each Table-style filter at one kernel size."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(kernel_size,)))
    k = kernel_size
    sv_weights = rng.normal(0.0, 0.2 / (channels * k * k), size=(k * k, channels, k, k))
    awd_params = awd_mod.AwdParams.init(channels, kernel_size=k, rng=rng)

    def fixed(tag):
        kind = awd_mod.FixedFilterKind(tag, kernel_size=k)
        return lambda f: awd_mod.downsample_fixed(f, kind)

    return {
        "gaussian": fixed("gaussian"),
        "bilateral": fixed("bilateral"),
        "mean": fixed("mean"),
        "spatial-variant": lambda f: awd_mod.spatial_variant_downsample(f, sv_weights),
        "awd": lambda f: awd_mod.awd_forward(f, awd_params)[0],
    }


def cmd_awd_demo(args) -> int:
    x = _load_image_tensor(args.input)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed,
                                                       spawn_key=(9,)))
    if args.noisy:
        x_noisy = _load_image_tensor(args.noisy)
        if x_noisy.shape != x.shape:
            raise DataError(
                f"noisy input shape {x_noisy.shape} does not match clean {x.shape}"
            )
    else:
        x_noisy = x + rng.normal(0.0, args.noise_sigma, size=x.shape)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = awd_mod.DisturbanceProbe.init(in_channels=x.shape[0], width=8,
                                          seed=args.seed)

    rows = [("strided", "-", dsl_mod.disturbance(
        probe.features(x, lambda f: awd_mod.downsample_fixed(
            f, awd_mod.FixedFilterKind("strided"))),
        probe.features(x_noisy, lambda f: awd_mod.downsample_fixed(
            f, awd_mod.FixedFilterKind("strided")))))]
    for k in awd_mod.SUPPORTED_KERNELS:
        for name, fn in _downsamplers(k, 8, args.seed).items():
            rows.append((name, k, dsl_mod.disturbance(
                probe.features(x, fn), probe.features(x_noisy, fn))))
    _write_csv(out_dir / "disturbance.csv", ["filter", "kernel", "disturbance"], rows)

    # AWD k=3 artifacts on the first probe stage
    from llraw.tensor import conv2d, relu

    h1 = relu(conv2d(x, probe.w1, stride=1, padding=1))
    params = awd_mod.AwdParams.init(8, kernel_size=3, rng=np.random.default_rng(
        np.random.SeedSequence(entropy=args.seed, spawn_key=(3,))))
    y, weights, _ = awd_mod.awd_forward(h1, params)
    tnsr.write_tnsr(out_dir / "awd_downsampled.tnsr", y)
    std_map = awd_mod.weight_std_map(weights)
    images.write_gray_png(out_dir / "awd_weight_std.png",
                          std_map / awd_mod.max_onehot_std(3))
    return EXIT_OK


def cmd_fold_check(args) -> int:
    rows, worst = scb_mod.fold_check(num=args.num, seed=args.seed)
    _write_csv(args.out_csv, ["instance", "c_in", "c_out", "h", "w", "divergence"], rows)
    print(f"fold-check: {args.num} instances, max divergence {worst:.3e}")
    if worst > args.tol:
        print(f"fold-check: divergence exceeds tolerance {args.tol:.3e}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_train_toy(args) -> int:
    cfg_dict = _load_json(args.config)
    num_pairs = cfg_dict.pop("num_pairs", 200)
    image_size = cfg_dict.pop("image_size", 32)
    holdout_fraction = cfg_dict.pop("holdout_fraction", 0.2)
    isp = isp_mod.IspParams.from_dict(cfg_dict.pop("isp", {}))
    noise_cfg = cfg_dict.pop("noise", {})
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    cfg = dsl_mod.DslConfig.from_dict(cfg_dict)
    noise_cfg.setdefault("seed", cfg.seed)
    noise = noise_mod.NoiseParams.from_dict(noise_cfg)

    pairs = shapes.make_pair_dataset(num_pairs, image_size=image_size,
                                     num_classes=cfg.num_classes, isp=isp,
                                     noise=noise, seed=cfg.seed)
    train, holdout = shapes.split_pairs(pairs, holdout_fraction, seed=cfg.seed)
    _, rows = dsl_mod.train_toy(train, cfg, holdout=holdout)
    _write_csv(args.out,
               ["epoch", "clean_acc", "noisy_acc", "mean_disturbance", "loss"],
               [(r["epoch"], r["clean_acc"], r["noisy_acc"],
                 r["mean_disturbance"], r["loss"]) for r in rows])
    return EXIT_OK


def cmd_disturbance(args) -> int:
    feats_clean = [tnsr.read_tnsr(p) for p in args.clean.split(",") if p]
    feats_noisy = [tnsr.read_tnsr(p) for p in args.noisy.split(",") if p]
    total = dsl_mod.disturbance(feats_clean, feats_noisy)
    rows = []
    for i, (a, b) in enumerate(zip(feats_clean, feats_noisy)):
        rows.append((i, dsl_mod.disturbance([a], [b])))
    rows.append(("total", total))
    if args.out_csv:
        _write_csv(args.out_csv, ["stage", "disturbance"], rows)
    print(f"disturbance: {total!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llraw",
        description="Low-light RAW synthesis and noise-robust downsampling tools.",
        epilog="Exit codes: 0 ok, 2 config error, 3 I/O error, 4 invariant violation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="unprocess a PNG and inject low-light noise")
    p.add_argument("--input", required=True, help="sRGB PNG input")
    p.add_argument("--isp", help="IspParams JSON (default: documented defaults)")
    p.add_argument("--noise", help="NoiseParams JSON (default: defaults)")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("quantize", help="bit-depth sweep with PSNR per depth")
    p.add_argument("--input", required=True, help="RAW TNSR input")
    p.add_argument("--bits", default="8,10,12,14")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-dir", help="also write quantized TNSR files here")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("awd-demo",
                       help="disturbance table over filters and kernel sizes")
    p.add_argument("--input", required=True, help="clean TNSR or PNG feature map")
    p.add_argument("--noisy", help="paired noisy input (default: add Gaussian noise)")
    p.add_argument("--noise-sigma", type=float, default=60.0 / 255.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_awd_demo)

    p = sub.add_parser("fold-check", help="train/inference equivalence audit")
    p.add_argument("--num", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_fold_check)

    p = sub.add_parser("train-toy", help="paired-training demonstration")
    p.add_argument("--config", required=True, help="JSON config")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("disturbance", help="feature disturbance between tensor lists")
    p.add_argument("--clean", required=True, help="comma-separated TNSR files")
    p.add_argument("--noisy", required=True, help="comma-separated TNSR files")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_disturbance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, DomainError, DimensionError, DataError) as exc:
        print(f"llraw: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"llraw: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"llraw: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, UsageError, LlrawError) as exc:
        print(f"llraw: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
