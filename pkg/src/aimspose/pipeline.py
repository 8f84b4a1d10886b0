"""End-to-end stages shared by the CLI: fit -> coarse logits -> fine prediction,
and the multi-seed ablation driver."""

from __future__ import annotations

import json
import platform
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import LmmdConfig, predict_coarse, train_classifier, write_log_csv
from .config import METHODS, ExperimentConfig, pipeline_fit_config
from .datagen import Dataset, generate_dataset
from .errors import AimsPoseError
from .evalkit import ConfusionMatrix, ablation_report, mean_std, metrics_row, write_evaluation
from .fitter import FitConfig, fit, write_fits
from .hipc import HipcConfig, predict_fine, train_hipc
from .nn import MLP
from .skeleton import default_template, normalize


def versions() -> dict:
    return {"aimspose": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_manifest(out_dir, doc: dict) -> None:
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps({**doc, "versions": versions()}, indent=2, sort_keys=True) + "\n")


def coarse_logits(model: MLP, dataset: Dataset) -> np.ndarray:
    return predict_coarse(model, dataset.features)[1]


def fit_dataset(dataset: Dataset, config: FitConfig, seed: int, template=None):
    """One fit per sample, each with its own start stream ``[seed, index]``."""
    template = template or default_template()
    return [fit(s.keypoints2d, s.camera, template, config, seed=[int(seed), i]) for i, s in enumerate(dataset)]


def true_joints(dataset: Dataset, template=None) -> np.ndarray:
    template = template or default_template()
    return np.stack([normalize(s.joints3d, template) for s in dataset])


def labeled_training_set(domain: str, source: Dataset, target: Dataset) -> Dataset:
    """``Synthetic`` is the source alone; ``Synthetic+Real`` adds the labeled target train split."""
    if domain == "Synthetic":
        return source
    real = target.split("train").evaluation_view()
    return Dataset(source.samples + real.samples, True, source.taxonomy)


def train_fine(model: MLP, train_set: Dataset, config: HipcConfig, seed: int, fit_config=None, use_logits=None):
    """HIPC on ground-truth (or freshly fitted) normalized joints plus the coarse model's logits."""
    if use_logits is not None:
        config = HipcConfig.from_dict({**config.to_dict(), "use_logits": use_logits, "gated": config.gated and use_logits})
    if config.train_joints == "fitted":
        joints = np.stack([r.joints3d_fitted for r in fit_dataset(train_set, fit_config or pipeline_fit_config(), seed)])
    else:
        joints = true_joints(train_set)
    return train_hipc(joints, coarse_logits(model, train_set), train_set.fine_indices(), config, seed)


def predict_pipeline(coarse_model: MLP, hipc_model: MLP | None, dataset: Dataset, fits=None):
    """Coarse probabilities/labels and, with a fine model, fine probabilities/labels."""
    probs, logits = predict_coarse(coarse_model, dataset.features)
    out = {"coarse_probs": probs, "coarse_pred": probs.argmax(axis=1)}
    if hipc_model is not None:
        joints = np.stack([r.joints3d_fitted for r in fits])
        out["fine_probs"], out["fine_pred"] = predict_fine(hipc_model, joints, logits, dataset.taxonomy)
    return out


def evaluate_predictions(pred: dict, dataset: Dataset) -> tuple:
    """Metrics plus (fine, coarse) confusion matrices against the dataset's labels."""
    view = dataset.evaluation_view()
    tax = view.taxonomy
    fine_true, coarse_true = view.fine_indices(), view.coarse_indices()
    if "fine_pred" in pred:
        fine_cm = ConfusionMatrix.from_predictions(fine_true, pred["fine_pred"], tax.fine_labels)
        coarse_pred = tax.fine_to_coarse[pred["fine_pred"]]
        metrics = metrics_row(fine_true, pred["fine_pred"], taxonomy=tax)
        metrics["image_branch_coarse_top1"] = float(np.mean(pred["coarse_pred"] == coarse_true))
    else:
        fine_cm = None
        coarse_pred = pred["coarse_pred"]
        metrics = metrics_row(coarse_true=coarse_true, coarse_pred=coarse_pred, taxonomy=tax)
    coarse_cm = ConfusionMatrix.from_predictions(coarse_true, coarse_pred, tax.coarse_labels)
    metrics["n"] = len(view)
    return metrics, fine_cm, coarse_cm


# ---------------------------------------------------------------------------
# ablation


def _method_rows(domain, seed, models, hipc_models, test: Dataset, fits, seed_dir: Path):
    rows = []
    lam0, lam1 = models
    for method, coarse, fine in (
        (METHODS[0], lam0, None),
        (METHODS[1], lam1, None),
        (METHODS[2], lam1, hipc_models[False]),
        (METHODS[3], lam1, hipc_models[True]),
    ):
        pred = predict_pipeline(coarse, fine, test, fits)
        metrics, fine_cm, coarse_cm = evaluate_predictions(pred, test)
        tag = method.replace("(", "_").replace(")", "").replace("=", "")
        write_evaluation(seed_dir / "eval" / domain.replace("+", "_") / tag, metrics, fine_cm, coarse_cm)
        rows.append({"seed": seed, "source_domain": domain, "method": method, **metrics})
    return rows


def run_seed(config: ExperimentConfig, seed: int, seed_dir) -> list:
    """All methods and source domains for one seed; returns the metric rows."""
    seed_dir = Path(seed_dir)
    seed_dir.mkdir(parents=True, exist_ok=True)
    source, target = generate_dataset(config.dataset, seed)
    unlabeled = target.split("train")
    test = target.split("test")
    if len(test) == 0:
        raise AimsPoseError("the target test split is empty; raise dataset.test_count")
    fits = fit_dataset(test, config.fit, seed)
    write_fits([(s.id, r) for s, r in zip(test, fits)], seed_dir / "fits_target_test.jsonl")

    rows = []
    for domain in config.source_domains:
        train_set = labeled_training_set(domain, source, target)
        tag = domain.replace("+", "_")
        models = []
        for lam in config.lambdas:
            lmmd = LmmdConfig.from_dict({**config.lmmd.to_dict(), "lambda": lam})
            model, log = train_classifier(train_set, unlabeled, config.train, lmmd, seed)
            model.save(seed_dir / f"coarse_{tag}_lambda{lam:g}.json")
            write_log_csv(log, seed_dir / f"coarse_{tag}_lambda{lam:g}_log.csv")
            models.append(model)
        hipc_models = {}
        for use_logits in (False, True):
            h = train_fine(models[1], train_set, config.hipc, seed, config.fit, use_logits=use_logits)
            h.save(seed_dir / f"hipc_{tag}_{'logits' if use_logits else 'nologits'}.json")
            hipc_models[use_logits] = h
        rows.extend(_method_rows(domain, seed, models, hipc_models, test, fits, seed_dir))
    _write_rows(rows, seed_dir / "metrics.csv")
    write_manifest(seed_dir, {"config_hash": config.hash(), "seed": seed, "config": config.to_dict()})
    return rows


ROW_COLUMNS = ("seed", "source_domain", "method", "coarse_top1", "fine_top1", "cross_coarse_rate",
               "cross_coarse_errors", "image_branch_coarse_top1", "n")


def _write_rows(rows, path) -> None:
    lines = [",".join(ROW_COLUMNS)]
    for r in rows:
        cells = []
        for c in ROW_COLUMNS:
            v = r.get(c, "")
            cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


SUMMARY_METRICS = ("coarse_top1", "fine_top1", "cross_coarse_rate", "cross_coarse_errors")


def summarize(rows) -> list:
    """Per (source domain, method) mean and sample stddev over seeds, as ablation runs."""
    groups = {}
    for r in rows:
        groups.setdefault((r["source_domain"], r["method"]), []).append(r)
    runs = []
    for (domain, method), group in groups.items():
        metrics = {"source_domain": domain, "method": method, "seeds": len(group)}
        for key in SUMMARY_METRICS:
            vals = [g[key] for g in group if key in g]
            if vals:
                metrics[f"{key}_mean"], metrics[f"{key}_std"] = mean_std(vals)
        runs.append((f"{domain}/{method}", metrics))
    return runs


def format_summary(runs) -> str:
    """Fixed-width ``mean ± std`` table, rows sorted by (source domain, method)."""
    table = ablation_report(runs)
    header = ["source_domain", "method", "seeds", *SUMMARY_METRICS]
    body = []
    for row in table.rows:
        cells = [row["source_domain"], row["method"], str(row["seeds"])]
        for key in SUMMARY_METRICS:
            m = row.get(f"{key}_mean")
            cells.append("-" if m is None else f"{m:.4f} ± {row[f'{key}_std']:.4f}")
        body.append(cells)
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def run_ablation(config: ExperimentConfig, out_dir=None) -> dict:
    """Every seed into ``seed_<n>/``, then ``metrics.csv``, ``summary.csv`` and ``summary.txt``.

    A failing seed leaves the finished seeds in place, writes
    ``failure_manifest.json`` and re-raises.
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    rows = []
    for seed in config.seeds:
        try:
            rows.extend(run_seed(config, seed, out / f"seed_{seed}"))
        except Exception as exc:
            failure = {
                "config_hash": config.hash(),
                "failed_seed": seed,
                "completed_seeds": sorted({r["seed"] for r in rows}),
                "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc(),
            }
            (out / "failure_manifest.json").write_text(json.dumps(failure, indent=2) + "\n")
            if rows:
                _write_rows(rows, out / "metrics.csv")
            raise
    _write_rows(rows, out / "metrics.csv")
    runs = summarize(rows)
    table = ablation_report(runs)
    (out / "summary.csv").write_text(table.to_csv())
    text = format_summary(runs)
    (out / "summary.txt").write_text(text)
    write_manifest(out, {"config_hash": config.hash(), "seeds": list(config.seeds), "config": config.to_dict()})
    return {"rows": rows, "summary": runs, "text": text}
