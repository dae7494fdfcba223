"""Single command-line entry point for the whole pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, bayes_head, fusion, linear_head, metrics, trainer, uncertainty
from .dataset import (
    DatasetError,
    SyntheticSpec,
    concat_features,
    generate_synthetic,
    load_dataset,
    merge_binary_labels,
    save_dataset,
    split_by_fraction,
)
from .linear_head import ScalarGaussianPrior


class UsageError(ValueError):
    """User-facing errors: exit code 1."""


_USER_ERRORS = (
    UsageError,
    DatasetError,
    linear_head.HeadError,
    fusion.FusionError,
    metrics.MetricError,
    uncertainty.UncertaintyError,
    trainer.TrainingError,
    FileNotFoundError,
)


def _write_json(payload: dict, path) -> None:
    Path(path).write_bytes(
        (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )


def _load_any_checkpoint(path):
    payload = json.loads(Path(path).read_text("utf-8"))
    if payload.get("type") == "dense_linear":
        return linear_head.load_checkpoint(path)
    if payload.get("type") == "bayes_linear":
        return bayes_head.load_checkpoint(path)
    raise UsageError(f"unrecognized checkpoint type in {path}")


def _head_outputs(head, dataset, samples, seed):
    if isinstance(head, bayes_head.GaussianVariationalHead):
        if seed is None:
            raise UsageError("--seed is required for bayes checkpoints")
        rng = np.random.default_rng(seed)
        return bayes_head.predict_mean_batch(head, dataset.features, samples, rng)
    _, out = linear_head.forward(head, dataset.features)
    return out


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        kind=args.kind,
        num_examples=args.n,
        num_features=args.d,
        num_outputs=args.k,
        class_separation=args.separation,
        noise_std=args.noise,
        seed=args.seed,
    )
    save_dataset(generate_synthetic(spec), args.out)
    print(f"wrote {args.out}")
    return 0


def _train_defaults_from_config(args):
    """--config file.json supplies defaults; explicit flags win."""
    merged = {}
    if args.config:
        merged.update(json.loads(Path(args.config).read_text("utf-8")))
    for key in ("learning_rate", "momentum", "epochs", "batch_size", "mc_samples",
                "kl_weight", "selection_metric", "sigma_init", "eval_samples"):
        flag = getattr(args, key)
        if flag is not None:
            merged[key] = flag
    return merged


def cmd_train(args) -> int:
    data = load_dataset(args.data)
    if args.dev:
        train_set, dev_set = data, load_dataset(args.dev)
    else:
        train_set, dev_set = split_by_fraction(data, args.dev_fraction, args.seed)

    overrides = _train_defaults_from_config(args)
    if "kl_weight" in overrides and overrides["kl_weight"] != "auto":
        overrides["kl_weight"] = float(overrides["kl_weight"])
    config = trainer.TrainConfig(seed=args.seed, **overrides)

    prior = None
    if args.head == "bayes":
        if args.prior_from:
            prior = linear_head.extract_prior(linear_head.load_checkpoint(args.prior_from))
        elif args.prior_mean is not None and args.prior_std is not None:
            prior = ScalarGaussianPrior(args.prior_mean, args.prior_std)
        else:
            raise UsageError("bayes training needs --prior-from or --prior-mean/--prior-std")

    head, report = trainer.train(args.head, train_set, dev_set, config, prior=prior)
    if args.head == "linear":
        linear_head.save_checkpoint(head, args.out)
    else:
        bayes_head.save_checkpoint(head, args.out, seed=args.seed)
    report_path = Path(args.out).with_suffix(".report.json")
    _write_json(report.to_json_dict(), report_path)
    best = report.epochs[report.best_epoch]
    print(
        f"best epoch {report.best_epoch}: dev {config.selection_metric}="
        f"{best.dev_metric:.4f} ({report.wall_seconds:.1f}s)",
        file=sys.stderr,
    )
    print(f"wrote {args.out}")
    return 0


def cmd_predict(args) -> int:
    head = _load_any_checkpoint(args.ckpt)
    data = load_dataset(args.data)
    out = _head_outputs(head, data, args.samples, args.seed)
    table = fusion.table_from_outputs(data, out, source=Path(args.ckpt).stem)
    fusion.save_table(table, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_fuse(args) -> int:
    tables = [fusion.load_table(p) for p in args.tables]
    if len(args.weights) != len(tables):
        raise UsageError("need one weight per table")
    fused = fusion.late_fuse(fusion.FusionSpec(tuple(tables), tuple(args.weights)))
    fusion.save_table(fused, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_ensemble(args) -> int:
    tables = [fusion.load_table(p) for p in args.tables]
    if args.mode == "vote":
        out = fusion.majority_vote(tables)
    else:
        out = fusion.average_intensities(tables)
    fusion.save_table(out, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    data = load_dataset(args.data)
    if args.table:
        table = fusion.load_table(args.table)
        pos = {rid: i for i, rid in enumerate(table.ids)}
        try:
            order = [pos[rid] for rid in data.ids]
        except KeyError as e:
            raise UsageError(f"table is missing id {e.args[0]!r}") from None
        outputs = table.outputs[order]
    else:
        head = _load_any_checkpoint(args.ckpt)
        outputs = _head_outputs(head, data, args.samples, args.seed)
    report = metrics.evaluate_outputs(data, outputs)
    if args.out:
        _write_json(report, args.out)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_uncertainty(args) -> int:
    head = _load_any_checkpoint(args.ckpt)
    if not isinstance(head, bayes_head.GaussianVariationalHead):
        raise UsageError("uncertainty analysis needs a bayes checkpoint")
    data = load_dataset(args.data)
    report = uncertainty.analyze(head, data, num_samples=args.samples, seed=args.seed)
    uncertainty.save_report(report, args.out)
    if report.single_sided:
        if args.curves or args.svg:
            print("single-sided report: skipping curves/svg", file=sys.stderr)
        print("single-sided report (no wrong or no correct predictions)")
    else:
        if args.curves:
            uncertainty.save_curves(report, args.curves)
        if args.svg:
            uncertainty.render_svg(report, args.svg)
        print(
            f"separation={report.separation:.4f} "
            f"variance_ratio={report.variance_ratio:.4f}"
        )
    print(f"wrote {args.out}")
    return 0


def cmd_tune_fusion(args) -> int:
    tables = [fusion.load_table(p) for p in args.tables]
    grids = [[float(w) for w in grid.split(",")] for grid in args.grid]
    dev = load_dataset(args.data)
    best_weights, best_uar, results = fusion.tune_fusion_weights(tables, grids, dev)
    payload = {
        "best_weights": list(best_weights),
        "best_uar": best_uar,
        "grid_results": results,
    }
    if args.out:
        _write_json(payload, args.out)
    print(json.dumps({"best_weights": list(best_weights), "best_uar": best_uar}))
    return 0


def cmd_merge_labels(args) -> int:
    merged = merge_binary_labels(load_dataset(args.a), load_dataset(args.b))
    save_dataset(merged, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_concat(args) -> int:
    joint = concat_features(load_dataset(args.a), load_dataset(args.b))
    save_dataset(joint, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayeshead",
        description="Linear and variational-Bayesian decision heads on fixed embeddings",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--kind", choices=["blobs", "planted_regression"], required=True)
    p.add_argument("--n", type=int, required=True, help="number of examples")
    p.add_argument("--d", type=int, required=True, help="feature dimension")
    p.add_argument("--k", type=int, required=True, help="classes or output dims")
    p.add_argument("--separation", type=float, default=0.0, help="blob center separation")
    p.add_argument("--noise", type=float, default=0.0, help="noise std")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a linear or bayes head")
    p.add_argument("--head", choices=["linear", "bayes"], required=True)
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument("--dev", help="dev dataset CSV (else --dev-fraction split)")
    p.add_argument("--dev-fraction", type=float, default=0.25)
    p.add_argument("--config", help="JSON file with TrainConfig defaults")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--mc-samples", dest="mc_samples", type=int,
                   help="MC draws per training batch (bayes)")
    p.add_argument("--kl-weight", dest="kl_weight",
                   help="nonnegative float or 'auto' (= 1/batches per epoch)")
    p.add_argument("--selection-metric", dest="selection_metric",
                   choices=["uar", "spearman", "loss"])
    p.add_argument("--sigma-init", dest="sigma_init", type=float,
                   help="initial posterior std (bayes)")
    p.add_argument("--eval-samples", dest="eval_samples", type=int,
                   help="MC draws for dev evaluation (bayes)")
    p.add_argument("--prior-from", dest="prior_from",
                   help="dense_linear checkpoint to extract the prior from")
    p.add_argument("--prior-mean", dest="prior_mean", type=float)
    p.add_argument("--prior-std", dest="prior_std", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write a prediction table for a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=int, default=500,
                   help="MC draws for bayes checkpoints")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fuse", help="weighted late fusion of prediction tables")
    p.add_argument("--tables", nargs="+", required=True)
    p.add_argument("--weights", nargs="+", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("ensemble", help="majority vote or intensity averaging")
    p.add_argument("--mode", choices=["vote", "average"], required=True)
    p.add_argument("--tables", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="metric report for a checkpoint or table")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--table")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("uncertainty", help="MC confidence analysis of a bayes head")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--curves", help="optional density-curve CSV path")
    p.add_argument("--svg", help="optional SVG rendering path")
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("tune-fusion", help="grid-search late-fusion weights by dev UAR")
    p.add_argument("--tables", nargs="+", required=True)
    p.add_argument("--grid", nargs="+", required=True,
                   help="one comma-separated weight list per table")
    p.add_argument("--data", required=True, help="dev dataset CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tune_fusion)

    p = sub.add_parser("merge-labels", help="merge two binary datasets into 4 classes")
    p.add_argument("--a", required=True, help="no/yes dataset CSV")
    p.add_argument("--b", required=True, help="affil/presta dataset CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge_labels)

    p = sub.add_parser("concat", help="early-fusion feature concatenation")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_concat)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and bool(args.ckpt) == bool(args.table):
        print("error: eval needs exactly one of --ckpt / --table", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # internal invariant failure
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
