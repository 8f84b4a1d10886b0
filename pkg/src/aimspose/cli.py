"""``aimspose`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure, 1 anything else raised by the package.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig
from .datagen import Dataset, generate_dataset, write_dataset
from .errors import AimsPoseError, ConfigError, DataError
from .evalkit import write_evaluation
from .fitter import read_fits, write_fits
from .nn import MLP
from .pipeline import (
    evaluate_predictions,
    fit_dataset,
    predict_pipeline,
    run_ablation,
    train_fine,
    write_manifest,
)
from .adapt import LmmdConfig, train_classifier, write_log_csv
from .taxonomy import Taxonomy, default_taxonomy


def _config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config) if args.config else ExperimentConfig()


def _taxonomy(args) -> Taxonomy:
    return Taxonomy.load(args.taxonomy) if args.taxonomy else default_taxonomy()


def _seed(args, config) -> int:
    return args.seed if args.seed is not None else config.seeds[0]


def _require_out(args) -> Path:
    if not args.out:
        raise ConfigError(f"{args.command} needs --out")
    return Path(args.out)


def _load_dataset(path, taxonomy, split=None) -> Dataset:
    if not Path(path).exists():
        raise DataError(f"dataset file not found: {path}")
    ds = Dataset.load(path, taxonomy=taxonomy)
    if split and split != "all":
        ds = ds.split(split)
    if len(ds) == 0:
        raise DataError(f"no samples in {path}" + (f" (split {split})" if split else ""))
    return ds


def _load_model(path) -> MLP:
    if not Path(path).exists():
        raise DataError(f"model file not found: {path}")
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    return MLP.from_dict(doc)


def _fits_for(args, dataset, config, seed):
    if getattr(args, "fits", None):
        table = read_fits(args.fits)
        missing = [s.id for s in dataset if s.id not in table]
        if missing:
            raise DataError(f"{len(missing)} samples have no fit in {args.fits} (first: {missing[0]})")
        return [table[s.id] for s in dataset]
    return fit_dataset(dataset, config.fit, seed)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    config = _config(args)
    seed = _seed(args, config)
    out = _require_out(args)
    source, target = generate_dataset(config.dataset, seed, _taxonomy(args))
    manifest = write_dataset(out, source, target, config.dataset, seed)
    print(f"wrote {manifest['counts']['source']} source and {manifest['counts']['target']} target samples to {out}")


def cmd_fit(args):
    config = _config(args)
    out = _require_out(args)
    dataset = _load_dataset(args.dataset, _taxonomy(args), args.split)
    if args.limit:
        dataset = Dataset(dataset.samples[: args.limit], dataset.labels_visible, dataset.taxonomy)
    results = fit_dataset(dataset, config.fit, _seed(args, config))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_fits([(s.id, r) for s, r in zip(dataset, results)], out)
    failed = sum(r.failed for r in results)
    print(f"fitted {len(results)} samples ({failed} failed) -> {out}")


def cmd_train_coarse(args):
    config = _config(args)
    seed = _seed(args, config)
    out = _require_out(args)
    taxonomy = _taxonomy(args)
    source = _load_dataset(args.source, taxonomy)
    if not source.labels_visible:
        raise DataError(f"{args.source} is not a labeled source dataset")
    target = _load_dataset(args.target, taxonomy, "train") if args.target else None
    lmmd = config.lmmd
    if args.lam is not None:
        lmmd = LmmdConfig.from_dict({**lmmd.to_dict(), "lambda": args.lam})
    model, log = train_classifier(source, target, config.train, lmmd, seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    write_log_csv(log, out.with_name(out.stem + "_log.csv"))
    print(f"coarse model -> {out}; final L_classify {log[-1]['L_classify']:.4f}" if log else f"coarse model -> {out}")


def cmd_train_hipc(args):
    config = _config(args)
    seed = _seed(args, config)
    out = _require_out(args)
    source = _load_dataset(args.source, _taxonomy(args))
    if not source.labels_visible:
        raise DataError(f"{args.source} is not a labeled source dataset")
    coarse = _load_model(args.model)
    model = train_fine(coarse, source, config.hipc, seed, config.fit, use_logits=not args.no_logits)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(f"hipc model -> {out}")


def cmd_predict(args):
    config = _config(args)
    seed = _seed(args, config)
    out = _require_out(args)
    dataset = _load_dataset(args.dataset, _taxonomy(args), args.split)
    coarse = _load_model(args.model)
    hipc = None
    fits = None
    if args.pipeline:
        if not args.hipc:
            raise ConfigError("predict --pipeline needs --hipc")
        hipc = _load_model(args.hipc)
        fits = _fits_for(args, dataset, config, seed)
    pred = predict_pipeline(coarse, hipc, dataset, fits)
    tax = dataset.taxonomy
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for i, s in enumerate(dataset):
            doc = {
                "id": s.id,
                "coarse": tax.coarse_labels[pred["coarse_pred"][i]],
                "coarse_probs": pred["coarse_probs"][i].tolist(),
            }
            if hipc is not None:
                doc["fine"] = tax.fine_labels[pred["fine_pred"][i]]
                doc["fine_probs"] = pred["fine_probs"][i].tolist()
            fh.write(json.dumps(doc, separators=(",", ":")) + "\n")
    print(f"{len(dataset)} predictions -> {out}")


def cmd_evaluate(args):
    config = _config(args)
    seed = _seed(args, config)
    out = _require_out(args)
    dataset = _load_dataset(args.dataset, _taxonomy(args), args.split)
    coarse = _load_model(args.model)
    hipc = _load_model(args.hipc) if args.hipc else None
    fits = _fits_for(args, dataset, config, seed) if hipc is not None else None
    metrics, fine_cm, coarse_cm = evaluate_predictions(predict_pipeline(coarse, hipc, dataset, fits), dataset)
    write_evaluation(out, metrics, fine_cm, coarse_cm, heatmaps=args.heatmaps)
    write_manifest(out, {"model": str(args.model), "hipc": args.hipc, "dataset": str(args.dataset), "seed": seed})
    for key in sorted(metrics):
        print(f"{key}: {metrics[key]}")


def cmd_ablation(args):
    config = _config(args)
    if args.seed is not None:
        config = config.with_seeds([args.seed])
    result = run_ablation(config, args.out)
    print(result["text"], end="")


def _global_flags(parser, default):
    parser.add_argument("--seed", type=int, default=default, help="random seed (default: first seed in the config)")
    parser.add_argument("--config", default=default, help="experiment config JSON")
    parser.add_argument("--out", default=default, help="output file or directory")
    parser.add_argument("--taxonomy", default=default, help="taxonomy JSON overriding the built-in hierarchy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aimspose", description=__doc__.splitlines()[0])
    _global_flags(parser, None)
    # repeated on each subcommand so flags work on either side of it
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="synthesize source and target datasets")

    p = sub.add_parser("fit", parents=[common], help="fit pose and shape to every sample's 2D keypoints")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="all", choices=["all", "train", "test"])
    p.add_argument("--limit", type=int, default=None)

    p = sub.add_parser("train-coarse", parents=[common], help="train the coarse classifier with LMMD")
    p.add_argument("--source", required=True)
    p.add_argument("--target", default=None, help="unlabeled target file (its train split is used)")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="override the adaptation weight")

    p = sub.add_parser("train-hipc", parents=[common], help="train the fine classifier")
    p.add_argument("--source", required=True)
    p.add_argument("--model", required=True, help="trained coarse model providing the logits")
    p.add_argument("--no-logits", action="store_true", help="zero the logit block (pose branch only)")

    for name, help_text in (("predict", "predict labels"), ("evaluate", "score predictions against labels")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--model", required=True, help="coarse model")
        p.add_argument("--hipc", default=None, help="fine model")
        p.add_argument("--dataset", required=True)
        p.add_argument("--split", default="test", choices=["all", "train", "test"])
        p.add_argument("--fits", default=None, help="precomputed fits (JSON-lines) instead of fitting")
        if name == "predict":
            p.add_argument("--pipeline", action="store_true", help="fitter -> coarse -> fine end to end")
        else:
            p.add_argument("--heatmaps", action="store_true", help="also write PPM confusion heatmaps")

    sub.add_parser("ablation", parents=[common], help="every method and seed from one config")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "train-coarse": cmd_train_coarse,
    "train-hipc": cmd_train_hipc,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "ablation": cmd_ablation,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.taxonomy:
            _taxonomy(args)
        COMMANDS[args.command](args)
    except AimsPoseError as exc:
        print(f"aimspose {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
