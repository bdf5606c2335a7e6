"""Command-line surface: render | optimize | evaluate | sweep | gradcheck.

Every command honors --seed (bit-reproducible runs) and --out, which
defaults to the STEREOCAMO_OUT environment variable or ./out.  Exit codes:
0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import attack, gradcheck, pipeline, scene_io, stereo, sweep
from .mesh import load_obj
from .metrics import EvalRecord, MetricConfig, format_report
from .render import ground_truth_disparity
from .sweep import SweepSpec, WEATHER_PRESETS

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _out_dir(args):
    out = args.out or os.environ.get("STEREOCAMO_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _matcher_cfg(args):
    return stereo.MatcherConfig(d_max=args.d_max,
                                patch_radius=args.patch_radius,
                                temperature=args.temperature,
                                cost=args.cost)


def _metric_cfg(args):
    return MetricConfig(tau=args.tau, cover_epsilon=args.cover_epsilon)


def _load_texture(path):
    tex = scene_io.png_read(path)
    if tex.ndim != 3:
        raise ValueError(f"{path}: texture PNG must be RGB")
    return tex


def _add_matcher_args(p):
    p.add_argument("--d-max", type=int, default=32)
    p.add_argument("--patch-radius", type=int, default=2)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--cost", choices=("sad", "zncc"), default="sad")


def _add_metric_args(p):
    p.add_argument("--tau", type=float, default=20.0,
                   help="hiding-error deviation threshold (disparity px)")
    p.add_argument("--cover-epsilon", type=float, default=1e-3,
                   help="minimum disparity change counted as altered")
    p.add_argument("--ring-kernel", type=int, default=None,
                   help="boundary ring kernel (odd; default scales with "
                        "image width)")


def cmd_render(args):
    man = scene_io.load_scene(args.scene)
    mesh = load_obj(args.mesh)
    texture = _load_texture(args.texture)
    cfg = _matcher_cfg(args)
    out = _out_dir(args)
    bundle = pipeline.build_bundle(man, mesh)
    r_l, _, x_l, x_r = pipeline.render_pair(bundle, texture)
    disp = stereo.predict_disparity(x_l, x_r, cfg)
    scene_io.png_write(out / f"{man.scene_id}_left.png", x_l)
    scene_io.png_write(out / f"{man.scene_id}_right.png", x_r)
    scene_io.png_write(out / f"{man.scene_id}_mask.png",
                       r_l.mask.astype(np.float64))
    scene_io.pfm_write(out / f"{man.scene_id}_disparity.pfm", disp)
    scene_io.png_write(out / f"{man.scene_id}_disparity.png",
                       scene_io.colormap_disparity(disp, cfg.d_max))
    gt = ground_truth_disparity(r_l, man.intrinsics, man.baseline_m)
    scene_io.pfm_write(out / f"{man.scene_id}_object_gt.pfm", gt)
    print(f"rendered {man.scene_id}: {int(r_l.mask.sum())} object px, "
          f"outputs in {out}")
    return EXIT_OK


def cmd_optimize(args):
    mans = [scene_io.load_scene(p) for p in args.scene]
    mesh = load_obj(args.mesh)
    cfg = _matcher_cfg(args)
    out = _out_dir(args)
    init = _load_texture(args.texture)
    bundles = []
    for man in mans:
        bundle = pipeline.build_bundle(man, mesh)
        if args.mode == "merge":
            pipeline.attach_merge_context(bundle, man, init, cfg,
                                          kernel_size=args.ring_kernel)
        bundles.append(bundle)
    eot = attack.EoTConfig(samples_per_step=args.eot_samples,
                           noise_sigma_range=(0.0, args.noise_sigma))
    optim = attack.OptimConfig(epochs=args.epochs, initial_lr=args.lr,
                               min_lr=args.min_lr, rng_seed=args.seed)
    weights = attack.LossWeights(alpha=args.alpha, beta=args.beta)
    palette = (attack.load_palette(args.palette) if args.palette
               else attack.default_palette())
    mode = "hide" if args.ablation == "hide-loss" else args.mode
    aligned = args.ablation != "reuse-left-view"

    checkpoints = out / "checkpoints"

    def on_epoch(epoch, texture, row):
        if args.checkpoint_every and (epoch + 1) % args.checkpoint_every == 0:
            scene_io.png_write(checkpoints / f"epoch{epoch:04d}.png", texture)

    t0 = time.time()
    texture, history = attack.optimize_texture(
        bundles, init, cfg, eot, optim, mode, weights=weights,
        palette=palette, stereo_aligned=aligned, epoch_callback=on_epoch)
    scene_io.png_write(out / "texture.png", texture)
    scene_io.write_csv(out / "loss.csv", ("epoch", "mean_loss", "lr"),
                       [(e, f"{l:.9g}", f"{lr:.9g}") for e, l, lr in history])
    print(f"optimized {mode} texture over {len(bundles)} scene(s), "
          f"{optim.epochs} epochs in {time.time() - t0:.1f}s; "
          f"final loss {history[-1][1]:.6g}; outputs in {out}")
    return EXIT_OK


def cmd_evaluate(args):
    man = scene_io.load_scene(args.scene)
    mesh = load_obj(args.mesh)
    cfg = _matcher_cfg(args)
    mcfg = _metric_cfg(args)
    out = _out_dir(args)
    rec = pipeline.evaluate_textures(
        man, mesh, _load_texture(args.texture),
        _load_texture(args.benign_texture), cfg, mcfg,
        kernel_size=args.ring_kernel)
    csv_path = out / "records.csv"
    rows = []
    if csv_path.is_file():
        rows = csv_path.read_text().strip().splitlines()[1:]
    rows.append(",".join(rec.csv_row()))
    scene_io.write_csv(csv_path, EvalRecord.CSV_HEADER,
                       [r.split(",") for r in rows])
    print(f"{man.scene_id}: e_blend={rec.e_blend:.4f} "
          f"e_cover={rec.e_cover:.4f} e_shift={rec.e_shift:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    man = scene_io.load_scene(args.scene)
    mesh = load_obj(args.mesh)
    cfg = _matcher_cfg(args)
    mcfg = _metric_cfg(args)
    out = _out_dir(args)
    bins = []
    for token in args.distance_bins.split(","):
        lo, _, hi = token.partition(":")
        bins.append((float(lo), float(hi or lo)))
    headings = tuple(float(h) for h in args.headings.split(","))
    spec = SweepSpec(distance_bins=tuple(bins), headings_deg=headings,
                     weather=tuple(args.weather), rng_seed=args.seed,
                     samples_per_cell=args.samples)
    records, rows = sweep.run_sweep(
        man, mesh, _load_texture(args.texture),
        _load_texture(args.benign_texture), spec, cfg, mcfg,
        kernel_size=args.ring_kernel)
    scene_io.write_csv(out / "sweep_records.csv", EvalRecord.CSV_HEADER,
                       [r.csv_row() for r in records])
    scene_io.write_csv(
        out / "sweep_report.csv",
        ("distance_m", "heading_deg", "weather", "n",
         "e_blend", "e_cover", "e_shift"),
        [(f"{r['distance_m']:.9g}", f"{r['heading_deg']:.9g}", r["weather"],
          r["n"], f"{r['e_blend']:.9g}", f"{r['e_cover']:.9g}",
          f"{r['e_shift']:.9g}") for r in rows])
    print(format_report(rows))
    return EXIT_OK


def cmd_gradcheck(args):
    t0 = time.time()
    reports = gradcheck.run_all(seed=args.seed, img_h=args.image_height,
                                img_w=args.image_width,
                                tex_size=args.texture_size,
                                d_max=args.d_max,
                                chain_coords=args.chain_coords)
    print(gradcheck.format_reports(reports))
    print(f"gradcheck finished in {time.time() - t0:.1f}s")
    if all(r.passed for r in reports):
        return EXIT_OK
    return EXIT_NUMERICAL


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stereocamo",
        description="Camouflage texture attacks on stereo depth estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None,
                        help="output directory (default $STEREOCAMO_OUT "
                             "or ./out)")

    p = sub.add_parser("render", parents=[common],
                       help="composite a textured scene and its disparity")
    p.add_argument("--scene", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--texture", required=True)
    _add_matcher_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("optimize", parents=[common],
                       help="optimize an attack texture over scenes")
    p.add_argument("--scene", action="append", required=True,
                   help="scene manifest (repeatable)")
    p.add_argument("--mesh", required=True)
    p.add_argument("--texture", required=True,
                   help="initial texture PNG (also the benign reference)")
    p.add_argument("--mode", choices=("merge", "appear"), default="merge")
    p.add_argument("--ablation",
                   choices=("none", "reuse-left-view", "hide-loss"),
                   default="none",
                   help="disable stereo-aligned rendering, or swap the "
                        "merge loss for a plain push-to-zero hiding loss")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--min-lr", type=float, default=1e-4)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--eot-samples", type=int, default=1)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--palette", default=None,
                   help="printability palette CSV (r,g,b rows)")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--ring-kernel", type=int, default=None)
    _add_matcher_args(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score an adversarial texture against benign")
    p.add_argument("--scene", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--texture", required=True)
    p.add_argument("--benign-texture", required=True)
    _add_matcher_args(p)
    _add_metric_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common],
                       help="evaluate over a viewpoint/weather grid")
    p.add_argument("--scene", required=True)
    p.add_argument("--mesh", required=True)
    p.add_argument("--texture", required=True)
    p.add_argument("--benign-texture", required=True)
    p.add_argument("--distance-bins", default="3:9,9:15,15:20",
                   help="comma-separated lo:hi meters")
    p.add_argument("--headings", default=",".join(
        str(h) for h in range(0, 360, 30)))
    p.add_argument("--weather", nargs="+", default=["nominal"],
                   choices=sorted(WEATHER_PRESETS))
    p.add_argument("--samples", type=int, default=1)
    _add_matcher_args(p)
    _add_metric_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference check of every gradient")
    p.add_argument("--image-height", type=int, default=48)
    p.add_argument("--image-width", type=int, default=64)
    p.add_argument("--texture-size", type=int, default=16)
    p.add_argument("--d-max", type=int, default=16)
    p.add_argument("--chain-coords", type=int, default=64)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
