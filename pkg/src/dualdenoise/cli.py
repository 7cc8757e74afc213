"""Command-line interface.

Subcommands mirror the experiment modes; every flag can also be supplied
through ``--config`` as flat ``key=value`` lines, with explicit flags
winning on conflict.
"""

from __future__ import annotations

import argparse
import json
import sys

from .common import DualDenoiseError
from .experiment import (
    build_config,
    config_from_file,
    make_digits_idx,
    run_ablation,
    run_denoise,
    run_experiment,
    run_interpret,
    run_robustness,
)

_BOOL = argparse.BooleanOptionalAction


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--data", help="dataset path (IDX file or PGM directory)")
    parser.add_argument("--format", choices=["idx", "pgm-dir"])
    parser.add_argument("--subset", type=int, help="training image count")
    parser.add_argument("--test-subset", dest="test_subset", type=int)
    parser.add_argument("--noise", choices=["gaussian", "exponential"])
    parser.add_argument("--sigma", type=float, help="gaussian noise std")
    parser.add_argument("--lambda", dest="lam", type=float,
                        help="exponential noise rate")
    parser.add_argument("--center", dest="center_noise", action=_BOOL,
                        default=None, help="subtract the exponential noise mean")
    parser.add_argument("--kernel", type=int, help="first-layer kernel size")
    parser.add_argument("--filters", type=int, help="primal filter count")
    parser.add_argument("--patterns", type=int, help="dual sign-pattern budget")
    parser.add_argument("--beta", type=float, help="weight decay coefficient")
    parser.add_argument("--lr-primal", dest="lr_primal", type=float)
    parser.add_argument("--lr-dual", dest="lr_dual", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch", type=int, help="patch rows per minibatch")
    parser.add_argument("--dual-iters", dest="dual_iters", type=int)
    parser.add_argument("--dual-backend", dest="dual_backend",
                        choices=["prox", "adam"])
    parser.add_argument("--hinge", choices=["linear", "squared"])
    parser.add_argument("--rho", type=float, help="constraint penalty weight")
    parser.add_argument("--feasibility-tol", dest="feasibility_tol", type=float)
    parser.add_argument("--continuation", action=_BOOL, default=None,
                        help="grow rho until the feasibility tolerance is met")
    parser.add_argument("--residual", action=_BOOL, default=None,
                        help="train with an identity skip connection")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--loss", help="convex loss name (only 'squared')")
    parser.add_argument("--per-pixel-norm", dest="per_pixel_norm", action=_BOOL,
                        default=None)
    parser.add_argument("--eval-every", dest="eval_every", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--figures", action=_BOOL, default=None,
                        help="render matplotlib figures next to the CSVs")


def _config_from_args(args) -> "ExperimentConfig":
    file_values = config_from_file(args.config) if args.config else None
    skip = {"config", "command", "func", "weights", "patterns_file",
            "count", "height", "width"}
    cli_values = {
        key: val for key, val in vars(args).items()
        if key not in skip and val is not None
    }
    if "lam" in cli_values:
        cli_values["rate"] = cli_values.pop("lam")
    if "ablation_sizes" in cli_values and isinstance(cli_values["ablation_sizes"], str):
        cli_values["ablation_sizes"] = tuple(
            int(x) for x in cli_values["ablation_sizes"].split(",")
        )
    return build_config(file_values, **cli_values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualdenoise",
        description="Train two-layer convolutional ReLU denoisers two "
                    "equivalent ways and inspect the convex side.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("train-primal", "train only the non-convex network"),
        ("train-dual", "train only the convex network"),
        ("gap", "train both on identical data and report the duality gap"),
    ):
        p = sub.add_parser(name, help=text)
        _add_shared(p)

    p = sub.add_parser("ablate-patterns",
                       help="sweep nested sign-pattern budgets for the dual")
    _add_shared(p)
    p.add_argument("--ablation-sizes", dest="ablation_sizes",
                   help="comma-separated pattern budgets, e.g. 50,200,800,3200")

    p = sub.add_parser("robustness",
                       help="gaussian vs exponential noise comparison")
    _add_shared(p)

    p = sub.add_parser("interpret",
                       help="cluster codes, k-means maps, filter responses")
    _add_shared(p)
    p.add_argument("--weights", required=True, help="dual weight binary")
    p.add_argument("--patterns-file", dest="patterns_file", required=True,
                   help="sign-pattern binary")
    p.add_argument("--clusters", type=int, help="k-means cluster count")
    p.add_argument("--codes-on", dest="codes_on", choices=["clean", "noisy"])

    p = sub.add_parser("denoise", help="apply saved weights to the test split")
    _add_shared(p)
    p.add_argument("--weights", required=True, help="weight binary")
    p.add_argument("--patterns-file", dest="patterns_file",
                   help="sign-pattern binary (dual weights only)")

    p = sub.add_parser("make-data",
                       help="write the bundled digit images as an IDX file")
    p.add_argument("--out", required=True, help="IDX file path")
    p.add_argument("--count", type=int, default=128)
    p.add_argument("--height", type=int, default=28)
    p.add_argument("--width", type=int, default=28)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-data":
            make_digits_idx(args.out, args.count, args.height, args.width,
                            args.seed)
            print(f"wrote {args.count} images ({args.height}x{args.width}) "
                  f"to {args.out}")
            return 0
        cfg = _config_from_args(args)
        if args.command == "train-primal":
            summary = run_experiment(cfg, mode="primal")
        elif args.command == "train-dual":
            summary = run_experiment(cfg, mode="dual")
        elif args.command == "gap":
            summary = run_experiment(cfg, mode="gap")
        elif args.command == "ablate-patterns":
            summary = run_ablation(cfg)
        elif args.command == "robustness":
            summary = run_robustness(cfg)
        elif args.command == "interpret":
            summary = run_interpret(cfg, args.weights, args.patterns_file)
        elif args.command == "denoise":
            summary = run_denoise(cfg, args.weights, args.patterns_file)
        else:  # pragma: no cover
            raise DualDenoiseError(f"unhandled command {args.command!r}")
    except (DualDenoiseError, NotImplementedError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
