"""Command-line entry point: ``harml summarize-data | run | render | fetch``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import dataset_summary, fetch_dataset, load_split
from .errors import HarmlError
from .harness import (build_config, config_from_artifact, emit_outputs,
                      load_artifact, parse_overrides, run_all)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--dataset-root", help="dataset directory (default: $HAR_DATASET_ROOT)")
    p.add_argument("--seed", type=int, help="split / training seed (default 42)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")


def _config(args):
    overrides = parse_overrides(args.set)
    overrides.update({"dataset_root": args.dataset_root, "seed": args.seed})
    for attr, key in (("experiments", "experiments"), ("out", "output_directory")):
        if getattr(args, attr, None) is not None:
            overrides[key] = getattr(args, attr)
    cfg = build_config(args.config, overrides)
    if not cfg.dataset_root:
        raise HarmlError("no dataset root: pass --dataset-root or set "
                         "HAR_DATASET_ROOT")
    if not Path(cfg.dataset_root).is_dir():
        raise HarmlError(f"dataset root does not exist: {cfg.dataset_root}")
    return cfg


def cmd_summarize(args) -> int:
    cfg = _config(args)
    summary = dataset_summary(load_split(cfg.dataset_root, cfg.seed))
    text = json.dumps(summary, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    artifact = run_all(cfg)
    for row in artifact["comparison"]:
        print(f"{row['classifier']:<34} {100 * row['test_accuracy']:6.2f} %  "
              f"(reference {row['reference_percent']:.2f} %)")
    for gap in artifact["hyperparameter_gap"]:
        print(f"gap: {gap['model']} {gap['achieved_percent']:.2f} % vs "
              f"{gap['reference_percent']:.2f} % +-{gap['band_pp']} pp",
              file=sys.stderr)
    for name, err in artifact["errors"].items():
        print(f"error: {name}: {err}", file=sys.stderr)
    print(f"wrote {cfg.output_directory}/artifact.json "
          f"({artifact['timings_seconds']['total']:.1f} s)")
    return 1 if artifact["errors"] else 0


def cmd_render(args) -> int:
    artifact = load_artifact(args.artifact)
    config_from_artifact(artifact)
    out = args.out or str(Path(args.artifact).parent)
    for path in emit_outputs(artifact, out, include_artifact=False):
        print(path)
    return 0


def cmd_fetch(args) -> int:
    root = fetch_dataset(args.url, args.dest)
    print(root)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harml", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize-data", help="print the dataset summary record")
    _add_common(p)
    p.add_argument("--out", help="also write the JSON summary here")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("run", help="train and evaluate, write tables and artifact")
    _add_common(p)
    p.add_argument("--experiments",
                   help="comma list of knn_sweep,svm_kernels,naive_bayes,mlp or all")
    p.add_argument("--out", help="output directory (default ./results)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", help="regenerate tables and figures from an artifact")
    p.add_argument("artifact")
    p.add_argument("--out", help="output directory (default: artifact's directory)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fetch", help="download and unzip the dataset archive")
    p.add_argument("--url", required=True)
    p.add_argument("--dest", required=True)
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HarmlError as exc:
        print(f"harml: error: {exc}", file=sys.stderr)
        return 2
