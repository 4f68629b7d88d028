"""``pf`` command line: degrade, tile/stitch, eval, rank, report, diffuse-demo.

Exit codes: 0 success, 2 usage error, 3 data error, 4 external-restorer failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np
from scipy import stats

from . import diffusion, harness, rng, tiling
from .errors import DataError, ExternalFailure, IoFailure, PfError
from .image_core import f32_to_u8, read_image, u8_to_f32, write_png
from .metrics import ProfileLine
from .restorers import parse_restorer
from .synthetic import write_corpus

log = logging.getLogger("pfbench")

EXIT_USAGE, EXIT_DATA, EXIT_EXTERNAL = 2, 3, 4


def _profile(text):
    try:
        x0, y0, x1, y1, n = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("profile must be x0,y0,x1,y1,samples") from exc
    return ProfileLine((x0, y0), (x1, y1), int(n))


def cmd_degrade(args):
    tasks = harness.standard_grid() if args.tasks == "standard" else harness.load_grid(args.tasks)
    manifests = harness.generate_benchmark(args.input, tasks, args.seed, args.out, min_size=args.min_size)
    for m in manifests:
        print(os.path.join(m.root, "manifest.json"))


def cmd_tile(args):
    img = u8_to_f32(read_image(args.input))
    g = tiling.plan_tiles(img.shape[2], img.shape[1], args.tile, args.overlap)
    tiling.save_tiles(tiling.extract(img, g), g, args.out)
    print(f"{len(g.xs) * len(g.ys)} tiles -> {args.out}")


def cmd_stitch(args):
    tiles, g = tiling.load_tiles(args.input)
    write_png(args.out, f32_to_u8(tiling.stitch(tiles, g)))


def cmd_eval(args):
    handle = parse_restorer(args.restorer, args.timeout)
    tile_mode = (args.tile_size, args.overlap) if args.tile else None
    for path in args.manifest:
        manifest = harness.DatasetManifest.load(path)
        report = harness.evaluate(manifest, handle, tile_mode, args.profile or (), seed=args.seed)
        out = harness.save_run(report, args.out)
        agg = report.metrics.aggregates
        print(f"{report.task_key} {report.restorer}: PSNR {agg['psnr_db']['mean']:.3f} "
              f"SSIM {agg['ssim']['mean']:.4f} MAE {agg['mae']['mean']:.3f} -> {out}")


def cmd_rank(args):
    table = harness.aggregate_and_rank(harness.load_reports(args.reports))
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write(table.to_csv())
    for method in sorted(table.overall, key=table.overall.get):
        print(f"{method}: mean rank {table.overall[method]:.3f}")


def cmd_report(args):
    for path in harness.emit_report(harness.load_reports(args.reports), args.format, args.out):
        print(path)


def cmd_diffuse_demo(args):
    if args.schedule:
        with open(args.schedule) as fh:
            sched = diffusion.NoiseSchedule.from_json(fh.read())
    else:
        sched = diffusion.make_schedule()
    side = int(round(args.samples ** 0.5))
    if side * side != args.samples:
        raise DataError("--samples must be a perfect square (samples are laid out as a square image)")
    predictor = diffusion.AnalyticPredictor(sched, args.mu, args.sd ** 2)
    x_T = rng.generator(rng.derive_seed(args.seed, "x_T")).standard_normal((1, side, side))
    cfg = diffusion.SamplerConfig(args.steps, args.eta, args.spacing)
    os.makedirs(args.out, exist_ok=True)
    frames = []

    def dump(t, x):
        if args.dump_trajectory:
            frames.append(t)
            write_png(os.path.join(args.out, f"step_{len(frames):04d}_t{t:04d}.png"),
                      f32_to_u8(np.clip(x, 0.0, 1.0)))

    x0 = diffusion.ddim_sample(x_T, predictor, diffusion.ConditioningContext(), sched, cfg,
                               rng.derive_seed(args.seed, "ddim"), dump)
    flat = x0.ravel()
    ks = stats.kstest(flat, "norm", args=(args.mu, args.sd))
    diag = {
        "samples": int(flat.size),
        "steps": args.steps,
        "eta": args.eta,
        "spacing": args.spacing,
        "target_mean": args.mu,
        "target_std": args.sd,
        "mean": float(flat.mean()),
        "std": float(flat.std()),
        "ks_statistic": float(ks.statistic),
        "ks_critical_1pct": float(stats.kstwo.ppf(0.99, flat.size)),
        "ks_pvalue": float(ks.pvalue),
    }
    with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "schedule.json"), "w") as fh:
        fh.write(sched.to_json() + "\n")
    print(json.dumps(diag, sort_keys=True))


def cmd_synth(args):
    for p in write_corpus(args.out, args.n, args.size, args.seed):
        print(p)


def build_parser():
    p = argparse.ArgumentParser(prog="pf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("degrade", help="generate a degraded benchmark from a clean corpus")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--tasks", required=True, help="task grid JSON, or 'standard' for the bundled grid")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-size", type=int, default=256)
    s.set_defaults(fn=cmd_degrade)

    s = sub.add_parser("tile", help="split an image into overlapping tiles")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--tile", type=int, default=256)
    s.add_argument("--overlap", type=int, default=32)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_tile)

    s = sub.add_parser("stitch", help="reassemble a tile directory")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_stitch)

    s = sub.add_parser("eval", help="evaluate a restorer on one or more manifests")
    s.add_argument("--manifest", action="append", required=True)
    s.add_argument("--restorer", required=True, help='identity | bicubic | bilinear | area | exec:"CMD"')
    s.add_argument("--tile", action="store_true", help="restore tile by tile and stitch")
    s.add_argument("--tile-size", type=int, default=256)
    s.add_argument("--overlap", type=int, default=32)
    s.add_argument("--profile", type=_profile, action="append", help="x0,y0,x1,y1,samples in GT pixels")
    s.add_argument("--timeout", type=float, default=300.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("rank", help="average-rank table over run reports")
    s.add_argument("--reports", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_rank)

    s = sub.add_parser("report", help="aggregate run reports into CSV or JSON")
    s.add_argument("--reports", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("diffuse-demo", help="sample a Gaussian source with the analytic predictor")
    s.add_argument("--schedule")
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--eta", type=float, default=0.0)
    s.add_argument("--spacing", choices=("quadratic", "uniform"), default="quadratic")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=4096)
    s.add_argument("--mu", type=float, default=0.5)
    s.add_argument("--sd", type=float, default=0.1)
    s.add_argument("--dump-trajectory", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_diffuse_demo)

    s = sub.add_parser("synth-corpus", help="write the synthetic tissue corpus")
    s.add_argument("--out", required=True)
    s.add_argument("-n", type=int, default=10)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except ExternalFailure as exc:
        print(f"pf: external restorer failure: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (DataError, IoFailure, PfError) as exc:
        print(f"pf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"pf: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
