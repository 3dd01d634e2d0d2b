"""Command-line interface: train, eval, pretrain, baselines, plot-data."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PROFILES, parse_config
from .errors import ConfigError, DataFormatError
from .metrics import analytic_baselines


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refgame",
        description="Referential signalling games with discrete messages")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--profile", choices=sorted(PROFILES), default=None,
                       help="base profile (overrides the config file's)")

    p_train = sub.add_parser("train", help="run one experiment end to end")
    add_config_flags(p_train)
    p_train.add_argument("--data-dir", type=Path, required=True,
                         help="directory with the CIFAR-10 binary batches")
    p_train.add_argument("--out-dir", type=Path, required=True)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--data-dir", type=Path, required=True)
    p_eval.add_argument("--out-dir", type=Path, default=None)
    p_eval.add_argument("--runs", type=int, default=None,
                        help="number of evaluation runs (default: config)")
    p_eval.add_argument("--seed", type=int, default=None)

    p_pre = sub.add_parser("pretrain",
                           help="contrastive pretraining of the extractor")
    add_config_flags(p_pre)
    p_pre.add_argument("--data-dir", type=Path, required=True)
    p_pre.add_argument("--out-dir", type=Path, required=True)

    p_base = sub.add_parser("baselines",
                            help="analytic and Monte-Carlo metric baselines")
    p_base.add_argument("--batch-size", type=int, default=128)
    p_base.add_argument("--classes", type=int, default=10)
    p_base.add_argument("--k", type=int, default=5)
    p_base.add_argument("--games", type=int, default=100_000)
    p_base.add_argument("--seed", type=int, default=0)

    p_plot = sub.add_parser("plot-data",
                            help="emit per-metric series files from CSV logs")
    p_plot.add_argument("logs", type=Path, nargs="+",
                        help="metric CSV files written by train")
    p_plot.add_argument("--out-dir", type=Path, required=True)
    return parser


def _load_config(args):
    raw = {}
    if args.config is not None:
        doc = json.loads(args.config.read_text() or "{}")
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        raw = doc
    if args.profile is not None:
        raw["profile"] = args.profile
    if args.seed is not None:
        raw["seed"] = args.seed
    return parse_config(json.dumps(raw))


def _cmd_train(args) -> int:
    from .engine import run_experiment

    config = _load_config(args)
    result = run_experiment(config, out_dir=args.out_dir,
                            data_dir=args.data_dir)
    print(f"wrote {result.csv_path}")
    print(f"wrote {result.summary_path}")
    print(f"wrote {result.checkpoint_path}")
    _print_report(result.report)
    return 0


def _print_report(report) -> None:
    for key, value in report.to_dict().items():
        print(f"{key} {value if value is not None else ''}")


def _cmd_eval(args) -> int:
    from .data import load_cifar10, stratified_subsample
    from .engine import evaluate, load_checkpoint
    from .torchutil import derive_seed

    models, config = load_checkpoint(args.checkpoint)
    _, test = load_cifar10(args.data_dir)
    seed = args.seed if args.seed is not None else config.seed
    val = stratified_subsample(test, config.val_size,
                               derive_seed(seed, "subsample-val"))
    runs = args.runs if args.runs is not None else config.eval_runs
    report = evaluate(models, val, config, runs,
                      derive_seed(seed, "final-eval"))
    _print_report(report)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        out = args.out_dir / "eval_report.json"
        out.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        print(f"wrote {out}")
    return 0


def _cmd_pretrain(args) -> int:
    import torch

    from .data import load_cifar10, stratified_subsample
    from .pretrain import pretrain_extractor
    from .torchutil import derive_seed, derive_torch_generator
    from .vision import Extractor, ExtractorConfig

    config = _load_config(args)
    train_full, _ = load_cifar10(args.data_dir)
    train = stratified_subsample(train_full, config.train_size,
                                 derive_seed(config.seed, "subsample-train"))
    mean, std = train.channel_stats()
    extractor = Extractor(
        ExtractorConfig(regime="learned", channels=config.channels,
                        feature_dim=config.feature_dim),
        derive_torch_generator(config.seed, "extractor-init"), mean, std)
    checkpoint = pretrain_extractor(extractor, train,
                                    config.contrastive_config, config.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "extractor.pt"
    torch.save(checkpoint, path)
    print(f"wrote {path}")
    return 0


def _cmd_baselines(args) -> int:
    report = analytic_baselines(args.batch_size, args.classes, k=args.k,
                                mc_games=args.games, seed=args.seed)
    print(f"batch_size {report.batch_size}")
    print(f"n_classes {report.n_classes}")
    print(f"k {report.k}")
    print(f"expected_same_class {report.expected_same_class:.6g}")
    print(f"class_only_top1 {report.class_only_top1:.6g}")
    print(f"class_only_top{report.k} {report.class_only_topk:.6g}")
    print(f"ideal_mean_rank {report.ideal_mean_rank:.6g}")
    print(f"hashing_mean_rank {report.hashing_mean_rank:.6g}")
    print(f"hashing_top{report.k}_count {report.hashing_topk_count:.6g}")
    return 0


def _cmd_plot_data(args) -> int:
    from .logs import emit_plot_data, parse_runlog_csv

    logs = [parse_runlog_csv(path) for path in args.logs]
    for path in emit_plot_data(logs, args.out_dir):
        print(f"wrote {path}")
    return 0


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "pretrain": _cmd_pretrain,
    "baselines": _cmd_baselines,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DataFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
