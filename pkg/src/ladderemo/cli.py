"""Command-line entry point: ``ladderemo <subcommand> ...``."""

import argparse
import json
import logging
import os
import sys

from . import data as D
from .errors import LadderError
from .experiment import RunConfig, RunSummary, prepare_splits, report, run_experiment, split_ccc
from .gradcheck import check_all
from .models import VARIANTS, load_checkpoint

GRADCHECK_TOLERANCE = 1e-4


def _synth_spec(args):
    spec = D.SynthSpec.from_file(args.spec) if args.spec else D.SynthSpec()
    if args.set:
        # later lines win, so overrides are simply appended
        spec = D.SynthSpec.from_text(spec.to_text() + "\n".join(args.set) + "\n")
    return spec


def cmd_synth_data(args):
    spec = _synth_spec(args)
    os.makedirs(args.output_dir, exist_ok=True)
    table = D.generate_synthetic(spec)
    feats = os.path.join(args.output_dir, "features.csv")
    labels = os.path.join(args.output_dir, "labels.csv")
    D.save_corpus(table, feats, labels)
    with open(os.path.join(args.output_dir, "synth_spec.txt"), "w") as fh:
        fh.write(spec.to_text())
    print(f"wrote {len(table)} segments x {table.features.shape[1]} features to {args.output_dir}")
    return 0


def _load_config(args):
    config = RunConfig.from_file(args.config)
    if getattr(args, "seeds", None) is not None:
        config.seeds = list(args.seeds)
    if getattr(args, "variant", None):
        config.model["variant"] = args.variant
    if getattr(args, "output_dir", None):
        config.output_dir = args.output_dir
    return RunConfig.from_dict(config.to_dict())


def cmd_train(args):
    config = _load_config(args)
    splits = prepare_splits(config)
    summary = run_experiment(config, splits, config.output_dir)
    text, _ = report([summary], config.attributes)
    print(text, end="")
    if config.output_dir:
        print(f"summary: {os.path.join(config.output_dir, config.variant, 'summary.json')}")
    return 1 if summary.flagged else 0


def cmd_evaluate(args):
    config = _load_config(args)
    train, val, test = prepare_splits(config)
    split = {"train": train, "validation": val, "test": test}[args.split]
    model, _, extra = load_checkpoint(args.checkpoint)
    scores = split_ccc(model, split)
    for attr, value in scores.items():
        print(f"{args.split} CCC {attr}: {value:.4f}")
    if extra:
        print(f"checkpoint: {json.dumps(extra, sort_keys=True)}")
    return 0


def cmd_gradcheck(args):
    results = check_all(seed=args.seed)
    worst = 0.0
    for variant, errors in results.items():
        name, err = max(errors.items(), key=lambda kv: kv[1])
        worst = max(worst, err)
        print(f"{variant:10s} max relative error {err:.3e} ({name})")
    ok = worst < GRADCHECK_TOLERANCE
    print(f"{'PASS' if ok else 'FAIL'}: worst {worst:.3e} vs tolerance {GRADCHECK_TOLERANCE:g}")
    return 0 if ok else 1


def cmd_report(args):
    summaries = [RunSummary.load(p) for p in args.summaries]
    text, table = report(summaries)
    print(text, end="")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(table)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ladderemo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic corpus as features.csv / labels.csv")
    p.add_argument("--spec", help="synthetic spec file (key = value lines)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one spec field")
    p.add_argument("-o", "--output-dir", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="run every seed and attribute of one variant")
    p.add_argument("-c", "--config", required=True, help="run config (JSON)")
    p.add_argument("--seeds", type=int, nargs="+", help="override the seed list")
    p.add_argument("--variant", choices=VARIANTS, help="override model.variant")
    p.add_argument("-o", "--output-dir", help="override output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on one split of the configured data")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "validation", "test"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every variant")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="comparison table from summary.json files")
    p.add_argument("summaries", nargs="+")
    p.add_argument("--csv", help="also write the delimited table here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LadderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
