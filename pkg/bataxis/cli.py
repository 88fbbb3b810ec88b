import argparse
import json
import sys
from typing import List, Optional

from .config import load_experiment_config, load_settings
from .errors import BataxisError
from .experiments import (
    ABLATION_MODES,
    ExperimentConfig,
    cmd_ablate,
    cmd_evaluate,
    cmd_export_attention,
    cmd_generate_data,
    cmd_shared_sensors,
    cmd_sparsity_sweep,
    cmd_sweep,
    cmd_train,
)
from .model import MODES

EXIT_USAGE = 2


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment file (JSON or YAML) mirroring ExperimentConfig")
    common.add_argument("--seed", type=int, help="Base seed; replication r uses seed + r")
    common.add_argument("--out", help="Output directory (overrides out_dir)")
    common.add_argument("--mode", choices=MODES, help="Attention mode for the model")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="bataxis",
        description="Bi-axial transformer experiments on sparse multivariate time series",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    sub.add_parser("train", parents=[common], help="Train every replication and write metrics")

    evaluate = sub.add_parser("evaluate", parents=[common], help="Score a checkpoint on a split")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--split", default="test", choices=("train", "validation", "test"))

    ablate = sub.add_parser("ablate", parents=[common], help="Remove or isolate data components")
    ablate.add_argument("--ablations", nargs="+", choices=ABLATION_MODES)

    sparsity = sub.add_parser("sparsity-sweep", parents=[common],
                              help="Train all modes at increasing sparsity levels")
    sparsity.add_argument("--levels", nargs="+", type=float)

    shared = sub.add_parser("shared-sensors", parents=[common],
                            help="Compare shared and separate sensor embeddings across two datasets")
    shared.add_argument("--registry-mode", default="both", choices=("shared", "separate", "both"))

    export = sub.add_parser("export-attention", parents=[common],
                            help="Write the top-k attention weights for one sample")
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--sample", required=True, help="Sample id")
    export.add_argument("--k", type=int, help="Weights kept per track and pass")

    sub.add_parser("sweep", parents=[common], help="Random hyperparameter search")

    generate = sub.add_parser("generate-data", parents=[common], help="Write a synthetic corpus")
    generate.add_argument("--output", help="NDJSON path (default <out>/<name>.ndjson)")
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.config:
        config = load_experiment_config(args.config)
    else:
        settings = load_settings()
        config = ExperimentConfig(
            seed=settings["seed"],
            replications=settings["replications"],
            workers=settings["workers"],
            out_dir=settings["out_dir"],
        )
    return config.with_overrides(seed=args.seed, out_dir=args.out, mode=args.mode)


def _run(args) -> None:
    config = _load_config(args)
    command = args.command

    if command == "train":
        table = cmd_train(config)
        print(table.to_string(index=False))
    elif command == "evaluate":
        report = cmd_evaluate(config, args.checkpoint, args.split)
        print(json.dumps(report.to_dict(), indent=4))
    elif command == "ablate":
        table = cmd_ablate(config, args.ablations)
        print(table.groupby("ablation", sort=False)[["auroc", "auprc"]].mean().to_string())
    elif command == "sparsity-sweep":
        table = cmd_sparsity_sweep(config, args.levels)
        print(table.groupby(["level", "mode"], sort=False)[["auroc", "auprc"]].mean().to_string())
    elif command == "shared-sensors":
        modes = ("shared", "separate") if args.registry_mode == "both" else (args.registry_mode,)
        table = cmd_shared_sensors(config, modes)
        print(table.groupby(["registry_mode", "dataset"], sort=False)[["auroc", "auprc"]]
              .mean().to_string())
    elif command == "export-attention":
        _, summary = cmd_export_attention(config, args.checkpoint, args.sample, args.k)
        print(json.dumps(summary, indent=4))
    elif command == "sweep":
        result = cmd_sweep(config)
        print(f"best trial {result.best_trial}: {json.dumps(result.best_params)}")
    elif command == "generate-data":
        print(cmd_generate_data(config, args.output))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    try:
        _run(args)
    except (BataxisError, ValueError, TypeError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"bataxis {args.command}: {message}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
