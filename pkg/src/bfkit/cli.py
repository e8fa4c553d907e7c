"""Command-line front end.

Every subcommand writes its artifacts to an output directory (``--out``,
default ``io.output_dir`` from the config). On failure the last line on
stderr is ``error: <Kind>: <message>`` and the exit status is nonzero.
"""

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import replace

import numpy as np

from bfkit import __version__, imgio, metrics, pipeline
from bfkit.config import ConfigError, load_config
from bfkit.errors import BfkitError, ParameterError
from bfkit.masking import foreground_mask
from bfkit.simulate import LegendreSpec, PhantomSpec, corrupt, legendre_bias, phantom
from bfkit.solver import correct, losses, reconstruction_targets

log = logging.getLogger("bfkit")


def parse_pair(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    return lo, hi


def parse_range(text):
    """``a..b`` (inclusive) or a comma list of integers."""
    m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", text)
    try:
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a..b' or 'a,b,c', got {text!r}") from None


def _outdir(args, cfg):
    out = args.out or cfg.io.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _load_mask(path, img):
    if path:
        mask = imgio.read_mask(path)
        if mask.shape != img.shape:
            raise ParameterError(f"mask {mask.shape} does not match image {img.shape}")
        return mask
    return None


def _read_labels(directory, shape):
    """``labels_k.pgm`` files for k >= 1, in order."""
    out = []
    k = 1
    while os.path.exists(os.path.join(directory, f"labels_{k}.pgm")):
        lab = imgio.read_mask(os.path.join(directory, f"labels_{k}.pgm"))
        if lab.shape != shape:
            raise ParameterError(f"labels_{k}.pgm shape {lab.shape} does not match {shape}")
        out.append(lab)
        k += 1
    if not out:
        raise ParameterError(f"no labels_1.pgm found in {directory}")
    return out


def cmd_simulate(args, cfg):
    out = _outdir(args, cfg)
    seed = cfg.seed if args.seed is None else args.seed
    levels = tuple((k + 1) / args.classes for k in range(args.classes))
    clean, labels = phantom(PhantomSpec(args.width, args.height, levels, args.geometry, seed))
    bias = legendre_bias(args.width, args.height, LegendreSpec(order=args.order, range=args.range,
                                                               seed=seed))
    img = corrupt(clean, bias, args.noise, seed)
    for name, arr in (("clean", clean), ("bias", bias), ("corrupted", img)):
        imgio.write_image(os.path.join(out, name + ".bf32"), arr)
    for k, lab in enumerate(labels):
        imgio.write_mask(os.path.join(out, f"labels_{k}.pgm"), lab)


def cmd_mask(args, cfg):
    out = _outdir(args, cfg)
    img = imgio.read_image(args.image)
    levels = cfg.mask.levels if args.levels is None else args.levels
    imgio.write_mask(os.path.join(out, "mask.pgm"), foreground_mask(img, levels, cfg.mask.bins))


def cmd_correct(args, cfg):
    out = _outdir(args, cfg)
    img = imgio.read_image(args.input)
    mask = _load_mask(args.mask, img)
    if mask is None:
        mask = foreground_mask(img, cfg.mask.levels, cfg.mask.bins)
    res = correct(imgio.normalize(img, mask), mask, cfg.solver_config(), log_every=args.log_every)
    for w in res.report.warnings:
        log.warning(w)
    if "bf32" in cfg.io.formats:
        imgio.write_image(os.path.join(out, "corrected.bf32"), res.corrected)
    if "pgm8" in cfg.io.formats:
        peak = res.corrected[mask].max()
        preview = np.clip(res.corrected / peak, 0, 1) * 255.0
        imgio.write_image(os.path.join(out, "corrected.pgm"), preview, "pgm8")
    imgio.write_image(os.path.join(out, "bias.bf32"), res.bias)
    for k, u in enumerate(res.u):
        imgio.write_image(os.path.join(out, f"u_{k}.bf32"), u)
    _write(os.path.join(out, "report.csv"), res.report.to_csv())
    log.info("%s after %d iterations", res.report.stop_reason, len(res.report.records))


def cmd_targets(args, cfg):
    out = _outdir(args, cfg)
    img = imgio.read_image(args.image)
    mask = _load_mask(args.mask, img)
    if mask is None:
        mask = foreground_mask(img, cfg.mask.levels, cfg.mask.bins)
    img = imgio.normalize(img, mask)
    u = np.stack([imgio.read_image(p) for p in args.u])
    b = imgio.read_image(args.bias)
    scfg = replace(cfg.solver_config(), N=len(u))
    t = reconstruction_targets(img, mask, u, b, scfg)
    for k, uk in enumerate(t.u_target):
        imgio.write_image(os.path.join(out, f"u_target_{k}.bf32"), uk)
    imgio.write_image(os.path.join(out, "b_target.bf32"), t.b_target)
    loss = losses(u[t.order], t.u_target, b, t.b_target, mask, scfg.epsilon, scfg.tv_variant)
    _write(os.path.join(out, "losses.json"), json.dumps(loss, indent=2, sort_keys=True) + "\n")


def cmd_metrics(args, cfg):
    ref = imgio.read_image(args.ref)
    test = imgio.read_image(args.test)
    rows = [{"metric": "psnr", "region": "all", "value": metrics.psnr(ref, test, args.peak)},
            {"metric": "ssim", "region": "all", "value": metrics.ssim(ref, test, peak=args.peak)}]
    region = _load_mask(args.region, ref)
    if region is not None:
        rows += [{"metric": "psnr", "region": "mask",
                  "value": metrics.psnr(ref, test, args.peak, region)},
                 {"metric": "ssim", "region": "mask",
                  "value": metrics.ssim(ref, test, peak=args.peak, region=region)},
                 {"metric": "cv", "region": "mask", "value": metrics.cv(test, region)}]
    if args.labels:
        for k, lab in enumerate(_read_labels(args.labels, ref.shape), 1):
            rows.append({"metric": "cv", "region": f"label_{k}", "value": metrics.cv(test, lab)})
    _emit(args, pipeline.to_csv(rows))


def cmd_bench(args, cfg):
    rows = pipeline.bench(args.seeds, args.size, args.noise, cfg.solver_config(),
                          cfg.mask.levels, cfg.mask.bins)
    _emit(args, pipeline.to_csv(rows))


def cmd_sweep(args, cfg):
    img = imgio.read_image(args.input)
    clean = imgio.read_image(args.clean)
    mask = _load_mask(args.mask, img)
    if mask is None:
        mask = foreground_mask(img, cfg.mask.levels, cfg.mask.bins)
    labels = [np.zeros(img.shape, bool)] + _read_labels(args.labels, img.shape)
    rows = pipeline.sweep_clusters(img, mask, clean, np.stack(labels), cfg.solver_config(), args.n)
    _emit(args, pipeline.to_csv(rows))


def _emit(args, text):
    if args.csv:
        _write(args.csv, text)
    else:
        sys.stdout.write(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (default: io.output_dir)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="bfkit", description="Bias field correction toolkit.")
    p.add_argument("--version", action="version", version=f"bfkit {__version__}")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration as JSON and exit")
    p.add_argument("--config", dest="top_config", help="configuration for --dump-config")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", parents=[common], help="synthetic phantom, bias and image")
    s.add_argument("--width", type=int, default=128)
    s.add_argument("--height", type=int, default=128)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--order", type=int, default=3)
    s.add_argument("--range", type=parse_pair, default=(0.3, 1.7))
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--geometry", default="nested-ellipses")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("mask", parents=[common], help="multi-threshold Otsu foreground mask")
    s.add_argument("image")
    s.add_argument("--levels", type=int)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("correct", parents=[common], help="estimate and remove the bias field")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--mask")
    s.add_argument("--log-every", type=int, default=0)
    s.set_defaults(func=cmd_correct)

    s = sub.add_parser("targets", parents=[common], help="closed-form targets for predictions")
    s.add_argument("--image", required=True)
    s.add_argument("--u", nargs="+", required=True, help="membership maps, one per cluster")
    s.add_argument("--bias", required=True)
    s.add_argument("--mask")
    s.set_defaults(func=cmd_targets)

    s = sub.add_parser("metrics", parents=[common], help="PSNR, SSIM and CV as CSV")
    s.add_argument("--ref", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--region")
    s.add_argument("--labels", help="directory holding labels_k.pgm")
    s.add_argument("--peak", type=float, default=1.0)
    s.add_argument("--csv", help="write CSV here instead of stdout")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("bench", parents=[common], help="simulate, correct and score over seeds")
    s.add_argument("--seeds", type=parse_range, default=list(range(10)))
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", parents=[common], help="score correction over cluster counts")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--clean", required=True)
    s.add_argument("--labels", required=True, help="directory holding labels_k.pgm")
    s.add_argument("--mask")
    s.add_argument("--n", type=parse_range, default=list(range(2, 9)))
    s.add_argument("--csv")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None) or args.top_config)
        if args.dump_config:
            sys.stdout.write(cfg.dumps())
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("error: UsageError: no subcommand given", file=sys.stderr)
            return 2
        args.func(args, cfg)
    except ConfigError as err:
        for problem in err.problems:
            print(f"config: {problem}", file=sys.stderr)
        print(f"error: ConfigError: {len(err.problems)} problem(s)", file=sys.stderr)
        return 2
    except (BfkitError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
