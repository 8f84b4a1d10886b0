"""Accuracy, confusion matrices, cross-coarse error rate, and ablation tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .taxonomy import Taxonomy, default_taxonomy


def top1_accuracy(predictions, truths) -> float:
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.shape != t.shape or p.ndim != 1:
        raise DataError(f"predictions and truths must be 1-D with equal length, got {p.shape} and {t.shape}")
    if len(p) == 0:
        raise DataError("accuracy of an empty set is undefined")
    return float(np.mean(p == t))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = truth and columns = prediction, in taxonomy label order."""

    counts: np.ndarray
    labels: tuple

    def __post_init__(self):
        counts = np.asarray(self.counts)
        n = len(self.labels)
        if counts.shape != (n, n):
            raise DataError(f"confusion counts must be {n}x{n}, got {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer) or np.any(counts < 0):
            raise DataError("confusion counts must be non-negative integers")
        object.__setattr__(self, "counts", counts.astype(np.int64))
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_predictions(cls, truths, predictions, labels) -> "ConfusionMatrix":
        t = np.asarray(truths, dtype=int)
        p = np.asarray(predictions, dtype=int)
        if t.shape != p.shape:
            raise DataError("truths and predictions must have equal length")
        n = len(labels)
        if len(t) and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n):
            raise DataError(f"class indices must lie in [0, {n})")
        counts = np.zeros((n, n), dtype=np.int64)
        np.add.at(counts, (t, p), 1)
        return cls(counts, tuple(labels))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def accuracy(self) -> float:
        if self.total == 0:
            raise DataError("accuracy of an empty confusion matrix is undefined")
        return float(np.trace(self.counts) / self.total)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["truth\\pred", *self.labels])
        for label, row in zip(self.labels, self.counts):
            writer.writerow([label, *row.tolist()])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def to_ppm(self, cell: int = 16) -> bytes:
        """Row-normalized heat image (white = 0, dark blue = 1) as binary PPM."""
        rows = np.maximum(self.row_sums, 1)[:, None]
        frac = self.counts / rows
        white = np.array([255.0, 255.0, 255.0])
        blue = np.array([8.0, 48.0, 107.0])
        rgb = white + frac[..., None] * (blue - white)
        img = np.repeat(np.repeat(np.round(rgb).astype(np.uint8), cell, axis=0), cell, axis=1)
        h, w = img.shape[:2]
        return f"P6\n{w} {h}\n255\n".encode() + img.tobytes()

    def save_ppm(self, path, cell: int = 16) -> None:
        Path(path).write_bytes(self.to_ppm(cell))


def cross_coarse_error_rate(fine_confusion: ConfusionMatrix, taxonomy: Taxonomy | None = None) -> float:
    """Share of fine-level errors whose predicted label sits under a different coarse class."""
    taxonomy = taxonomy or default_taxonomy()
    counts = fine_confusion.counts
    if counts.shape != (taxonomy.n_fine, taxonomy.n_fine):
        raise DataError(f"expected a {taxonomy.n_fine}x{taxonomy.n_fine} fine confusion matrix")
    off = counts.copy()
    np.fill_diagonal(off, 0)
    errors = off.sum()
    if errors == 0:
        return 0.0
    cross = off[~taxonomy.same_coarse_mask()].sum()
    return float(cross / errors)


def cross_coarse_error_count(fine_confusion: ConfusionMatrix, taxonomy: Taxonomy | None = None) -> int:
    taxonomy = taxonomy or default_taxonomy()
    return int(fine_confusion.counts[~taxonomy.same_coarse_mask()].sum())


# ---------------------------------------------------------------------------
# reports


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


@dataclass(frozen=True)
class AblationTable:
    columns: tuple
    rows: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [list(self.columns)] + [[_fmt(row.get(c, "")) for c in self.columns] for row in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def save(self, csv_path, text_path=None) -> None:
        Path(csv_path).write_text(self.to_csv())
        if text_path is not None:
            Path(text_path).write_text(self.to_text())


def ablation_report(runs) -> AblationTable:
    """Table of ``(name, metrics)`` runs sorted by (source domain, method).

    ``metrics`` may carry ``source_domain`` and ``method`` keys; the remaining
    keys become columns in sorted order.
    """
    runs = list(runs)
    if not runs:
        raise DataError("an ablation report needs at least one run")
    names = [name for name, _ in runs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DataError(f"duplicate run names: {', '.join(dupes)}")
    rows = []
    for name, metrics in runs:
        row = {"name": name, "source_domain": "", "method": name, **metrics}
        rows.append(row)
    rows.sort(key=lambda r: (str(r["source_domain"]), str(r["method"]), r["name"]))
    extra = sorted({k for r in rows for k in r} - {"name", "source_domain", "method"})
    return AblationTable(("source_domain", "method", "name", *extra), tuple(rows))


def mean_std(values) -> tuple:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def metrics_row(fine_true=None, fine_pred=None, coarse_true=None, coarse_pred=None, taxonomy=None) -> dict:
    """Top-1 and cross-coarse numbers for whichever levels are given."""
    taxonomy = taxonomy or default_taxonomy()
    out = {}
    if coarse_true is not None:
        out["coarse_top1"] = top1_accuracy(coarse_pred, coarse_true)
    if fine_true is not None:
        cm = ConfusionMatrix.from_predictions(fine_true, fine_pred, taxonomy.fine_labels)
        out["fine_top1"] = cm.accuracy()
        out["cross_coarse_errors"] = cross_coarse_error_count(cm, taxonomy)
        out["cross_coarse_rate"] = cross_coarse_error_rate(cm, taxonomy)
        if coarse_true is None:
            coarse_pred = taxonomy.fine_to_coarse[np.asarray(fine_pred, dtype=int)]
            out["coarse_top1"] = top1_accuracy(coarse_pred, taxonomy.fine_to_coarse[np.asarray(fine_true, dtype=int)])
    return out


def write_evaluation(out_dir, metrics: dict, fine_cm: ConfusionMatrix | None, coarse_cm: ConfusionMatrix,
                     heatmaps: bool = False) -> None:
    """``metrics.csv``, ``confusion_coarse.csv`` and (when available) ``confusion_fine.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "value"])
    for key in sorted(metrics):
        writer.writerow([key, _fmt(metrics[key])])
    (out / "metrics.csv").write_text(buf.getvalue())
    coarse_cm.save_csv(out / "confusion_coarse.csv")
    if fine_cm is not None:
        fine_cm.save_csv(out / "confusion_fine.csv")
    if heatmaps:
        coarse_cm.save_ppm(out / "confusion_coarse.ppm")
        if fine_cm is not None:
            fine_cm.save_ppm(out / "confusion_fine.ppm")
