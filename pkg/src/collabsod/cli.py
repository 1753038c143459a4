"""Command-line entry point: ``collabsod <command> ...``."""

import argparse
import logging
import sys

from .config import RunConfig
from .errors import (
    ConfigError,
    DepthAccessError,
    GradCheckError,
    IngestionError,
    NonFiniteLossError,
    ShapeError,
    ValidationError,
)

log = logging.getLogger("collabsod")


def _train(args):
    from .engine import train

    cfg = RunConfig.from_file(args.config, seed=args.seed, out_dir=args.out, train_data=args.data)
    ckpt = train(cfg)
    last = ckpt.history[-1] if ckpt.history else {}
    print(f"trained {ckpt.epoch} epochs; last epoch losses: {last}")
    print(f"checkpoint: {cfg.out_dir}/checkpoint.safetensors")


def _eval(args):
    from .engine import evaluate

    report = evaluate(
        args.checkpoint, args.data, split=args.split, out_dir=args.out,
        bypass_with_gt=args.gt_as_prediction, e_binarize=not args.continuous_e,
        pooled_pr=args.pooled_pr,
    )
    for key, value in report.scalars().items():
        print(f"{key:10s} {value:.4f}")
    print(f"n_samples  {report.n_samples} (skipped for F/S/E: {report.n_skipped})")


def _infer(args):
    from .engine import infer

    print(infer(args.checkpoint, args.image, args.out))


def _gradcheck(args):
    from .gradcheck import grad_check

    cfg = RunConfig.from_file(args.config, seed=args.seed)
    report = grad_check(cfg, n_samples=args.samples)
    print(report.summary())


def _export_pr(args):
    from .engine import export_pr

    csv_path, plot_path = export_pr(args.report, args.csv, args.plot)
    print(csv_path)
    print(plot_path)


def _synth(args):
    from .synthetic import generate_dataset

    print(generate_dataset(args.out, args.n, args.split, args.side, args.seed, not args.no_depth))


def build_parser():
    p = argparse.ArgumentParser(prog="collabsod", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="override out_dir")
    t.add_argument("--data", help="override train_data")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="score a checkpoint on <data>/<split>")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--gt-as-prediction", action="store_true",
                   help="score the ground truth itself (sanity check of the metric path)")
    e.add_argument("--continuous-e", action="store_true",
                   help="E-measure on the continuous map instead of the adaptive binary one")
    e.add_argument("--pooled-pr", action="store_true", help="pool PR counts over the dataset")
    e.set_defaults(func=_eval)

    i = sub.add_parser("infer", help="predict a saliency map for one image")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(func=_infer)

    g = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    g.add_argument("--config", required=True)
    g.add_argument("--samples", type=int, default=200)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=_gradcheck)

    x = sub.add_parser("export-pr", help="PR curve of a report as CSV + plot")
    x.add_argument("--report", required=True)
    x.add_argument("--csv", required=True)
    x.add_argument("--plot", required=True)
    x.set_defaults(func=_export_pr)

    s = sub.add_parser("synth", help="write a procedural RGB-D dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--split", default="train")
    s.add_argument("--side", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-depth", action="store_true")
    s.set_defaults(func=_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        args.func(args)
    except (ConfigError, IngestionError, ShapeError, ValidationError, DepthAccessError,
            NonFiniteLossError, GradCheckError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
