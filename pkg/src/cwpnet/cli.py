"""Command-line entry point: ``cwpnet <command> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import format_db, subband_distortion
from .causal import ZeroCountError, backdoor_adjust, naive_conditional, read_count_table
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import read_config
from .degrade import PRESETS, ManifestError, apply, build_dataset, read_manifest
from .imageio import PpmError, read_ppm, write_ppm
from .metrics import psnr, ssim
from .model import CwpNet, degradation_rep, restore, second_scale_gate_rep, _reflect_pad
from .nn import ConfigError
from .prompt import estimate_prompt_distribution, write_distribution_csv
from .tensor import DimensionError, Tensor, no_record
from .training import train

log = logging.getLogger("cwpnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4
CHECKPOINT_NAME = "checkpoint.cwpn"


class DataError(ValueError):
    pass


class InvariantError(RuntimeError):
    pass


def bundled_table(name: str = "drug_study_rounded.csv") -> Path:
    return Path(str(resources.files("cwpnet") / "data" / name))


def _center_crop(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[-2:]
    if h < size or w < size:
        raise DataError(f"image {h}x{w} is smaller than crop {size}")
    top, left = (h - size) // 2, (w - size) // 2
    return img[..., top : top + size, left : left + size]


def _load_records(manifest_path):
    try:
        manifest = read_manifest(manifest_path)
    except OSError as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc.strerror or exc}") from None
    if not manifest.entries:
        raise DataError(f"manifest {manifest_path} has no records")
    return build_dataset(manifest)


def stretch(g: np.ndarray) -> np.ndarray:
    """Map min to 0 and max to 1; a flat map becomes all zeros."""
    lo, hi = float(g.min()), float(g.max())
    return (g - lo) / (hi - lo) if hi > lo else np.zeros_like(g)


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def cmd_train(args) -> int:
    cfg = read_config(args.config)
    if args.seed is not None:
        cfg.with_seed(args.seed)
    records = _load_records(cfg.manifest)
    pairs = [(_center_crop(r.degraded, cfg.crop), _center_crop(r.clean, cfg.crop)) for r in records]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    net = CwpNet(cfg.model)
    net, history = train(net, pairs, cfg.train)
    if not all(math.isfinite(row["loss_total"]) for row in history.rows):
        raise InvariantError("training loss became non-finite")
    for w in net.weight_matrices():
        if np.any(w.w.data < 0) or np.any(w.w.data > 1):
            raise InvariantError("subband weights left [0, 1]")

    save_checkpoint(net, out / CHECKPOINT_NAME, cfg.to_text())
    history.write_csv(out / "history.csv")
    reps = degradation_rep(np.stack([p[0] for p in pairs]), net)
    for level, wpb in enumerate(net.wpb):
        dist = estimate_prompt_distribution(reps, net.cluster, wpb.weights)
        write_distribution_csv(dist, out / f"prompt_distribution_level{level}.csv")
    last = history.rows[-1]
    print(f"trained {cfg.train.epochs} epochs on {len(pairs)} pairs: "
          f"loss {last['loss_total']:.5f}, train PSNR {last['mean_train_psnr']:.2f} dB")
    print(f"wrote {out / CHECKPOINT_NAME}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net, _ = load_checkpoint(args.ckpt)
    records = _load_records(args.manifest)
    rows = []
    for i, r in enumerate(records):
        restored = restore(r.degraded, net)
        rows.append([i, r.source, r.kind.kind, psnr(r.degraded, r.clean), ssim(r.degraded, r.clean),
                     psnr(restored, r.clean), ssim(restored, r.clean)])
    means = [float(np.mean([row[c] for row in rows])) for c in range(3, 7)]
    with open(args.report, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "source", "kind", "psnr_degraded", "ssim_degraded", "psnr_restored",
                      "ssim_restored"])
        for row in rows:
            out.writerow(row[:3] + [_fmt(v) for v in row[3:]])
        out.writerow(["mean", "", ""] + [_fmt(v) for v in means])
    print(f"degraded: PSNR {format_db(means[0])} dB, SSIM {means[1]:.4f}")
    print(f"restored: PSNR {format_db(means[2])} dB, SSIM {means[3]:.4f}")
    return EXIT_OK


def cmd_degrade(args) -> int:
    records = _load_records(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pairs.csv", "w", newline="") as fh:
        index = csv.writer(fh, lineterminator="\n")
        index.writerow(["index", "source", "kind", "seed", "clean", "degraded"])
        for i, r in enumerate(records):
            clean, degraded = f"{i:04d}_clean.ppm", f"{i:04d}_{r.kind.kind}.ppm"
            write_ppm(r.clean, out / clean)
            write_ppm(r.degraded, out / degraded)
            index.writerow([i, r.source, r.kind.kind, r.seed, clean, degraded])
    print(f"wrote {len(records)} pairs to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    clean = read_ppm(args.clean)
    if args.degraded is not None:
        degraded = read_ppm(args.degraded)
    elif args.preset is not None:
        degraded = apply(clean, PRESETS[args.preset], seed=args.seed or 0)
    else:
        raise ConfigError("analyze needs --degraded or --preset")
    if clean.shape != degraded.shape:
        raise DataError(f"image dims differ: {clean.shape} vs {degraded.shape}")
    if clean.shape[-1] % 2 or clean.shape[-2] % 2:
        raise DataError(f"image dims must be even for one Haar level, got {clean.shape[-2:]}")
    report = subband_distortion(clean, degraded)
    print("\n".join(report.lines()))
    if args.report:
        report.write_csv(args.report)
    return EXIT_OK


def cmd_backdoor(args) -> int:
    path = args.table or bundled_table()
    try:
        table = read_count_table(path)
    except OSError as exc:
        raise DataError(f"cannot read table {path}: {exc.strerror or exc}") from None
    try:
        t, c = table.index("x", args.treated), table.index("x", args.control)
        y = table.index("y", args.outcome)
    except ValueError:
        raise DataError(f"labels {args.treated!r}/{args.control!r}/{args.outcome!r} not in "
                        f"x={table.x_labels}, y={table.y_labels}") from None
    do_t = backdoor_adjust(table.counts, t, y)
    do_c = backdoor_adjust(table.counts, c, y)
    naive = naive_conditional(table.counts, t, y) - naive_conditional(table.counts, c, y)
    print(f"P({args.outcome} | do({args.treated})) = {do_t:.4f}")
    print(f"P({args.outcome} | do({args.control})) = {do_c:.4f}")
    print(f"adjusted effect: {do_t - do_c:.4f}")
    print(f"naive effect: {naive:.4f}")
    return EXIT_OK


def cmd_dump_attn(args) -> int:
    net, _ = load_checkpoint(args.ckpt)
    img = read_ppm(args.image)
    if img.ndim == 2:
        img = np.repeat(img[None], 3, axis=0)
    padded, h, w = _reflect_pad(img[None].astype(np.float32), net.multiple)
    with no_record():
        gate, _ = second_scale_gate_rep(Tensor(padded), net)
    # the second-scale gate sits at a quarter of the padded resolution
    g = gate.data[0, 0, : math.ceil(h / 4), : math.ceil(w / 4)].astype(np.float64)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ppm(stretch(g), out / "ll_gate.ppm")
    print(f"wrote {g.shape[0]}x{g.shape[1]} gate to {out / 'll_gate.ppm'} "
          f"(min {g.min():.4f}, max {g.max():.4f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cwpnet", description="All-in-one image restoration toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint over a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("degrade", help="write degraded/clean PPM pairs for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("analyze", help="per-subband PSNR of a degraded image")
    p.add_argument("--clean", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--degraded")
    group.add_argument("--preset", choices=sorted(PRESETS), help="degrade --clean with a bundled preset")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", help="optional CSV report path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("backdoor", help="backdoor-adjusted effect from a z,x,y,count table")
    p.add_argument("--table", help="CSV table (default: bundled drug study)")
    p.add_argument("--treated", default="drug")
    p.add_argument("--control", default="no_drug")
    p.add_argument("--outcome", default="recovered")
    p.set_defaults(func=cmd_backdoor)

    p = sub.add_parser("dump-attn", help="write the second-scale LL attention gate as a PGM")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_dump_attn)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ManifestError, PpmError, CheckpointError, ZeroCountError, DimensionError,
            OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
