"""Classification metrics, one-vs-rest ROC/AUC and results-table emission."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import N_CLASSES
from .errors import LengthMismatch

SMALL_SUPPORT = 10


@dataclass
class EvalReport:
    """Support-weighted scores plus confusion matrix (true x predicted) and ROC data."""

    model: str
    mode: str | None
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: np.ndarray | None = None
    per_class: dict = field(default_factory=dict)
    roc: dict = field(default_factory=dict)   # class -> (fpr, tpr, thresholds)
    auc: dict = field(default_factory=dict)   # class -> AUC, absent when undefined
    flagged: list = field(default_factory=list)  # classes whose AUC rests on < 10 positives

    @property
    def method(self) -> str:
        return self.model if not self.mode else f"{self.model} ({self.mode})"

    @property
    def n(self) -> int:
        return int(self.confusion.sum()) if self.confusion is not None else 0


def _check_pair(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise LengthMismatch(f"{a.shape[0]} predictions vs {b.shape[0]} truths")
    if a.shape[0] == 0:
        raise LengthMismatch("no samples")
    return a, b


def confusion_matrix(predictions, truths, n_classes=N_CLASSES) -> np.ndarray:
    pred, true = _check_pair(predictions, truths)
    for arr in (pred, true):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(f"labels must lie in [0, {n_classes})")
    return np.bincount(true * n_classes + pred, minlength=n_classes ** 2).reshape(n_classes, n_classes)


def metrics(predictions, truths, n_classes=N_CLASSES) -> dict:
    """Accuracy and support-weighted precision, recall and F1 (zero division gives 0)."""
    cm = confusion_matrix(predictions, truths, n_classes)
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1).astype(float)
    predicted = cm.sum(axis=0).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(predicted > 0, tp / predicted, 0.0)
        rec = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    w = support / support.sum()
    return {
        "accuracy": float(tp.sum() / support.sum()),
        "precision": float(w @ prec),
        "recall": float(w @ rec),
        "f1": float(w @ f1),
        "confusion": cm,
        "per_class": {"precision": prec, "recall": rec, "f1": f1, "support": support.astype(int)},
    }


def roc_curve(scores, positives):
    """ROC points over every distinct score, from the strictest threshold down.

    Returns ``(fpr, tpr, thresholds)`` starting at ``(0, 0)`` with threshold ``inf``,
    or ``None`` when there are no positives or no negatives.
    """
    s, pos = _check_pair(scores, positives)
    pos = pos.astype(bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp = np.cumsum(pos)[last]
    fp = (last + 1) - tp
    return (np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos], np.r_[np.inf, s[last]])


def auc_trapezoid(fpr, tpr) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_ovr(scores, truths, n_classes=N_CLASSES):
    """Per-class one-vs-rest curves and AUCs; undefined classes are left out."""
    scores, truths = _check_pair(scores, truths)
    curves, aucs, flagged = {}, {}, []
    for c in range(n_classes):
        res = roc_curve(scores[:, c], truths == c)
        if res is None:
            continue
        curves[c] = res
        aucs[c] = auc_trapezoid(res[0], res[1])
        if np.sum(truths == c) < SMALL_SUPPORT:
            flagged.append(c)
    return curves, aucs, flagged


def evaluate(model: str, mode, proba, truths) -> EvalReport:
    """Full report from class probabilities; predictions are the row argmax."""
    proba = np.asarray(proba, dtype=float)
    truths = np.asarray(truths, dtype=np.int64)
    m = metrics(np.argmax(proba, axis=1), truths, proba.shape[1])
    curves, aucs, flagged = roc_ovr(proba, truths, proba.shape[1])
    return EvalReport(model, mode, m["accuracy"], m["precision"], m["recall"], m["f1"],
                      m["confusion"], m["per_class"], curves, aucs, flagged)


def rank(reports: list[EvalReport]) -> list[EvalReport]:
    """F1 descending, ties broken by accuracy descending."""
    if not reports:
        raise ValueError("nothing to report")
    return sorted(reports, key=lambda r: (-r.f1, -r.accuracy))


def slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", text.lower()).strip("_")


def format_table(reports: list[EvalReport]) -> str:
    rows = [("Method", "Accuracy", "Precision", "Recall", "F1")]
    rows += [(r.method, *(f"{v:.4f}" for v in (r.accuracy, r.precision, r.recall, r.f1)))
             for r in rank(reports)]
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                       for i, (cell, w) in enumerate(zip(row, widths))) for row in rows]
    return "\n".join(lines) + "\n"


def write_report(reports: list[EvalReport], outdir, svg=False) -> dict[str, Path]:
    """``results.csv``/``results.txt`` plus per-model confusion and ROC CSVs (and SVGs)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ranked = rank(reports)
    paths = {"results": outdir / "results.csv", "table": outdir / "results.txt"}
    with open(paths["results"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Method", "Accuracy", "Precision", "Recall", "F1"])
        for r in ranked:
            w.writerow([r.method] + [f"{v:.6f}" for v in (r.accuracy, r.precision, r.recall, r.f1)])
    paths["table"].write_text(format_table(ranked), encoding="utf-8")
    for r in ranked:
        name = slug(r.method)
        if r.confusion is not None:
            p = outdir / f"confusion_{name}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                k = r.confusion.shape[0]
                w.writerow(["true"] + [f"pred_{j}" for j in range(k)])
                for i in range(k):
                    w.writerow([i] + [int(v) for v in r.confusion[i]])
            paths[f"confusion_{name}"] = p
            if svg:
                p = outdir / f"confusion_{name}.svg"
                p.write_text(confusion_svg(r.confusion, r.method), encoding="utf-8")
        for c, (fpr, tpr, thr) in sorted(r.roc.items()):
            p = outdir / f"roc_{name}_{c}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["threshold", "fpr", "tpr"])
                for a, b, t in zip(fpr, tpr, thr):
                    w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])
            paths[f"roc_{name}_{c}"] = p
        if svg and r.roc:
            p = outdir / f"roc_{name}.svg"
            p.write_text(roc_svg(r), encoding="utf-8")
    return paths


_COLOURS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a")


def roc_svg(r: EvalReport, size=320) -> str:
    pad = 40
    span = size - 2 * pad
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad + span}" x2="{pad + span}" y2="{pad}" stroke="grey" stroke-dasharray="4"/>',
             f'<text x="{pad}" y="{pad - 10}" font-size="12">ROC {r.method}</text>']
    for c, (fpr, tpr, _) in sorted(r.roc.items()):
        pts = " ".join(f"{pad + x * span:.2f},{pad + (1 - y) * span:.2f}" for x, y in zip(fpr, tpr))
        colour = _COLOURS[c % len(_COLOURS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}"/>')
        parts.append(f'<text x="{pad + span - 90}" y="{pad + span - 10 - 14 * c}" font-size="11" '
                     f'fill="{colour}">class {c}: {r.auc[c]:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def confusion_svg(cm, title="", cell=50) -> str:
    k = cm.shape[0]
    pad = 40
    size = 2 * pad + k * cell
    row_sums = np.maximum(cm.sum(axis=1, keepdims=True), 1)
    frac = cm / row_sums
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<text x="{pad}" y="{pad - 10}" font-size="12">{title}</text>']
    for i in range(k):
        for j in range(k):
            shade = int(255 * (1 - frac[i, j]))
            parts.append(f'<rect x="{pad + j * cell}" y="{pad + i * cell}" width="{cell}" height="{cell}" '
                         f'fill="rgb({shade},{shade},255)" stroke="white"/>')
            parts.append(f'<text x="{pad + j * cell + cell / 2}" y="{pad + i * cell + cell / 2}" '
                         f'font-size="11" text-anchor="middle">{int(cm[i, j])}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
