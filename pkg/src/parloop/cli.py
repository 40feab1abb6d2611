"""Command line front end.

Exit status: 0 success, 2 configuration error, 3 data error, 4 training
divergence. On failure a one-line JSON error object is written to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .errors import ConfigError, ParloopError

STAGES = ("generate", "ingest", "assemble", "tokenize", "train", "crossval", "report")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="parloop", description="Loop parallelizability corpus, classifier and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("-c", "--config", help="JSON config file (defaults to the built-in desk configuration)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. training.epochs=3; may repeat")
        sp.add_argument("-o", "--output", help="run directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="shift every seed in the config by this amount")
        return sp

    for name in STAGES:
        sp = with_config(sub.add_parser(name, help=f"run the {name} stage"))
        if name == "ingest":
            sp.add_argument("directory", nargs="?", help="folder with sources and annotations.csv")
        if name == "train":
            sp.add_argument("--fold", type=int, default=0, help="fold index to train")
        if name == "crossval":
            sp.add_argument("--jobs", type=int, default=1, help="folds trained concurrently")

    lp = sub.add_parser("label", help="label loop sources with the dependence oracle")
    lp.add_argument("files", nargs="+")
    lp.add_argument("--bounds", default="4,8,16", help="comma-separated problem sizes")
    lp.add_argument("--inits", type=int, default=3, help="random initial memories per size")
    lp.add_argument("--seed", type=int, default=0)

    sc = sub.add_parser("show-config", help="print the effective configuration")
    with_config(sc)
    return p


def resolve_config(args) -> dict:
    cfg = pipeline.load_config(args.config) if args.config else pipeline.default_config()
    for assignment in args.set:
        pipeline.apply_override(cfg, assignment)
    if args.output:
        cfg["output_dir"] = args.output
    if args.seed is not None:
        for section in ("ga", "model", "training", "evaluation"):
            if isinstance(cfg.get(section), dict) and isinstance(cfg[section].get("seed"), int):
                cfg[section]["seed"] += args.seed
    return pipeline.validate_config(cfg)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        result = dispatch(args)
    except ParloopError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        if isinstance(exc, ConfigError) and exc.field:
            err["field"] = exc.field
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    if result is not None:
        print(json.dumps(result, indent=1, sort_keys=True))
    return 0


def dispatch(args):
    if args.command == "label":
        try:
            bounds = tuple(int(b) for b in args.bounds.split(","))
        except ValueError as exc:
            raise ConfigError(f"--bounds must be integers: {args.bounds}", "bounds") from exc
        return pipeline.label_sources(args.files, bounds, args.inits, args.seed)
    cfg = resolve_config(args)
    if args.command == "show-config":
        return cfg
    summary = {"config_hash": pipeline.config_hash(cfg), "run_dir": str(pipeline.run_dir(cfg))}
    if args.command == "generate":
        out = pipeline.stage_generate(cfg)
        summary["counts"] = {str(k): len(v) for k, v in out.items()}
    elif args.command == "ingest":
        if not (args.directory or cfg["corpus"]["real_dir"]):
            raise ConfigError("no directory given and corpus.real_dir is unset", "corpus.real_dir")
        summary["samples"] = len(pipeline.stage_ingest(cfg, args.directory))
    elif args.command == "assemble":
        summary["counts"] = pipeline.stage_assemble(cfg).counts
    elif args.command == "tokenize":
        vocab, data = pipeline.stage_tokenize(cfg)
        summary.update(vocab_size=len(vocab), samples=len(data), max_true_length=int(data.mask.sum(1).max()))
    elif args.command == "train":
        if not 0 <= args.fold < cfg["evaluation"]["k"]:
            raise ConfigError(f"--fold must lie in [0, {cfg['evaluation']['k']})", "fold")
        summary["fold"] = pipeline.run_fold(cfg, args.fold).to_json()
        del summary["fold"]["history"]
    elif args.command == "crossval":
        summary["selection"] = pipeline.crossval(cfg, jobs=max(1, args.jobs))
    elif args.command == "report":
        summary["selection"] = pipeline.stage_report(cfg)
    return summary


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
