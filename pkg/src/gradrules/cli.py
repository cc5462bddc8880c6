"""Command-line surface: per-stage subcommands plus the end-to-end run.

One flat key=value config file can provide any parameter; explicit flags
override file values. All randomness flows from --seed. Exit codes:
0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .pipeline import MODES, SELECTORS, RunConfig, run_pipeline
from .ripper import render_text, ruleset_from_json

_STAGE_FOR_COMMAND = {
    "featurize": "featurize",
    "train": "train",
    "saliency": "transform",
    "select": "select",
    "induce": "induce",
    "explain": "induce",
    "consistency": "induce",
}


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="flat key=value config file")
    p.add_argument("--corpus", help="corpus root directory")
    p.add_argument("--out", help="output bundle directory")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--selector", choices=SELECTORS)
    p.add_argument("--k", type=int, help="number of features to keep")
    p.add_argument("--seeds", type=int, help="number of rule-induction seeds to sweep")
    p.add_argument("--min-cover-grid", help="comma list of min-cover values, 'ladder' or 'full'")
    p.add_argument("--jobs", type=int, help="parallel sweep workers")
    p.add_argument("--seed", type=int, help="global random seed")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", help="hidden layer sizes, e.g. 100,100")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--ripper-rounds", type=int, help="rule optimization rounds")
    p.add_argument("--grow-fraction", type=float)
    p.add_argument("--binarize-original", action="store_const", const=True, default=None,
                   help="presence-binarize original inputs in train-gold-original mode")
    p.add_argument("--keep-headers", action="store_const", const=True, default=None,
                   help="skip header/quote/signature stripping")


def _read_config_file(path: str) -> dict:
    mapping: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"bad config line (expected key=value): {line!r}")
        mapping[key.strip()] = value.strip()
    return mapping


def _build_config(args: argparse.Namespace) -> RunConfig:
    mapping: dict = {}
    if args.config:
        mapping.update(_read_config_file(args.config))
    overrides = {
        "corpus": args.corpus,
        "out": args.out,
        "mode": args.mode,
        "selector": args.selector,
        "k": args.k,
        "seeds": args.seeds,
        "min_cover_grid": args.min_cover_grid,
        "jobs": args.jobs,
        "seed": args.seed,
        "epochs": args.epochs,
        "hidden": args.hidden,
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "ripper_rounds": args.ripper_rounds,
        "grow_fraction": args.grow_fraction,
        "binarize_original": args.binarize_original,
    }
    if args.keep_headers:
        overrides["strip_headers"] = False
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig.from_mapping(mapping)
    config.validate()
    return config


def _setup_logging(out: str) -> None:
    log_dir = Path(out)
    log_dir.mkdir(parents=True, exist_ok=True)
    logger = logging.getLogger("gradrules")
    logger.setLevel(logging.INFO)
    handler = logging.FileHandler(log_dir / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logger.addHandler(handler)


def main(argv=None) -> int:
    parser = _Parser(prog="gradrules", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("featurize", "build the TF-IDF feature caches"),
        ("train", "train the classifier to be explained"),
        ("saliency", "compute saliency and sign matrices"),
        ("select", "score features and keep the top k"),
        ("induce", "induce rule-sets and write reports"),
        ("explain", "run the full pipeline end to end"),
        ("consistency", "report consistency of well-performing rule-sets"),
    ):
        p = sub.add_parser(name, help=help_text, parents=[], add_help=True)
        _add_run_flags(p)
    render = sub.add_parser("render", help="print a rule JSON file in if/elif/else form")
    render.add_argument("ruleset", help="path to a rules/<class>.json file")

    args = parser.parse_args(argv)

    if args.command == "render":
        try:
            text = render_text(ruleset_from_json(Path(args.ruleset).read_text(encoding="utf-8")))
        except Exception as exc:
            print(f"gradrules render: {exc}", file=sys.stderr)
            return 2
        print(text, end="")
        return 0

    try:
        config = _build_config(args)
    except ValueError as exc:
        print(f"gradrules {args.command}: {exc}", file=sys.stderr)
        return 1

    _setup_logging(config.out)
    try:
        summary = run_pipeline(config, until=_STAGE_FOR_COMMAND[args.command])
    except Exception as exc:
        logging.getLogger("gradrules").exception("run failed")
        print(f"gradrules {args.command}: {exc}", file=sys.stderr)
        return 2

    if args.command == "explain" or args.command == "induce":
        macro = summary["fidelity"]["macro"]
        print(f"bundle: {summary['out']}")
        print(f"macro fidelity: P={macro['precision']:.3f} R={macro['recall']:.3f} F={macro['f']:.3f}")
        cons = summary["consistency"]
        print(
            f"consistency: rule match {cons['mean_rule_match']:.1f}%, "
            f"classification overlap {cons['mean_classification_overlap']:.1f}%"
        )
    elif args.command == "consistency":
        cons = summary["consistency"]
        for name, record in sorted(cons["per_class"].items()):
            print(
                f"{name}: rule match {record['rule_match']:.1f}%, "
                f"overlap {record['classification_overlap']:.1f}%"
            )
        print(
            f"mean: rule match {cons['mean_rule_match']:.1f}%, "
            f"overlap {cons['mean_classification_overlap']:.1f}%"
        )
    else:
        print(f"bundle: {summary['out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
