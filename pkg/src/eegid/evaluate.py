"""Classification reports, one-vs-rest ROC/AUC, and the inter-subject
correlation study over band-decomposed recordings."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from eegid.seeding import substream
from eegid.signal import Band, Recording, decompose


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationReport:
    """Confusion matrix, per-class metrics, and optional ROC/AUC curves.

    confusion rows are truth, columns are predictions. roc holds one
    (n_points, 2) array of (fpr, tpr) per class; auc entries are None for
    classes absent from the truth labels.
    """

    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    roc: list[np.ndarray] | None = None
    auc: list[float | None] | None = None
    macro_auc: float | None = None

    def to_dict(self) -> dict:
        doc = {
            "confusion": self.confusion.tolist(),
            "per_class": [
                {
                    "precision": float(self.precision[k]),
                    "recall": float(self.recall[k]),
                    "f1": float(self.f1[k]),
                    "support": int(self.support[k]),
                }
                for k in range(len(self.support))
            ],
            "accuracy": self.accuracy,
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
        }
        if self.roc is not None:
            doc["roc"] = {str(k): pts.tolist() for k, pts in enumerate(self.roc)}
            doc["auc"] = {str(k): self.auc[k] for k in range(len(self.auc))}
            doc["macro_auc"] = self.macro_auc
        return doc


def confusion_and_report(truth, predicted, num_classes: int) -> EvaluationReport:
    """Confusion counts and precision/recall/F1/support per class.

    Zero denominators (empty column or row) yield 0 for the metric rather
    than NaN; the Average/Total row uses macro (unweighted) means.
    """
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.size == 0:
        raise EvaluationError("cannot evaluate empty label vectors")
    if truth.shape != predicted.shape:
        raise EvaluationError("truth and prediction lengths differ")
    for name, arr in (("truth", truth), ("predicted", predicted)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise EvaluationError(f"{name} labels must lie in [0, {num_classes})")

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (truth, predicted), 1)

    diag = np.diag(confusion).astype(np.float64)
    col = confusion.sum(axis=0).astype(np.float64)
    row = confusion.sum(axis=1).astype(np.float64)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(diag), where=pr > 0)

    return EvaluationReport(
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        support=confusion.sum(axis=1),
        accuracy=float(np.trace(confusion)) / float(confusion.sum()),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
    )


def roc_auc(truth, scores) -> tuple[list[np.ndarray], list[float | None], float | None]:
    """One-vs-rest ROC points and trapezoidal AUC per class.

    Equal scores collapse into one threshold step. A class with no
    positives (or no negatives) in truth has an undefined AUC, reported as
    None with a degenerate two-point curve; the macro AUC averages the
    defined entries.
    """
    truth = np.asarray(truth, dtype=np.int64)
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if truth.size != scores.shape[0]:
        raise EvaluationError("score rows must align with truth labels")
    num_classes = scores.shape[1]

    curves: list[np.ndarray] = []
    aucs: list[float | None] = []
    for k in range(num_classes):
        pos = truth == k
        n_pos = int(pos.sum())
        n_neg = truth.size - n_pos
        if n_pos == 0 or n_neg == 0:
            curves.append(np.array([[0.0, 0.0], [1.0, 1.0]]))
            aucs.append(None)
            continue
        order = np.argsort(-scores[:, k], kind="stable")
        sorted_scores = scores[order, k]
        tps = np.cumsum(pos[order])
        fps = np.cumsum(~pos[order])
        step_ends = np.flatnonzero(np.diff(sorted_scores) != 0.0)
        idx = np.concatenate([step_ends, [truth.size - 1]])
        fpr = np.concatenate([[0.0], fps[idx] / n_neg])
        tpr = np.concatenate([[0.0], tps[idx] / n_pos])
        curves.append(np.column_stack([fpr, tpr]))
        aucs.append(float(np.trapezoid(tpr, fpr)))

    defined = [a for a in aucs if a is not None]
    macro = float(np.mean(defined)) if defined else None
    return curves, aucs, macro


def full_report(truth, predicted, scores, num_classes: int) -> EvaluationReport:
    """Metrics report with the ROC/AUC block filled in."""
    report = confusion_and_report(truth, predicted, num_classes)
    curves, aucs, macro = roc_auc(truth, scores)
    return replace(report, roc=curves, auc=aucs, macro_auc=macro)


def roc_points_csv(report: EvaluationReport) -> str:
    """ROC curves as delimited text: one (class, fpr, tpr) row per point."""
    if report.roc is None:
        raise EvaluationError("report carries no ROC points")
    lines = ["class,fpr,tpr"]
    for k, pts in enumerate(report.roc):
        for fpr, tpr in pts:
            lines.append(f"{k},{fpr!r},{tpr!r}")
    return "\n".join(lines) + "\n"


def pearson(x, y) -> float:
    """Pearson correlation coefficient of two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise EvaluationError("pearson expects two equal-length vectors")
    if x.size < 2:
        raise EvaluationError("pearson needs at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise EvaluationError("pearson is undefined for constant input")
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


@dataclass(frozen=True)
class CorrelationTable:
    """Mean inter-subject |r| per (band, subject), plus per-band spread.

    std is the population standard deviation across the subject means;
    average is their mean (the Average column of the study table).
    """

    bands: list[str]
    subjects: list[int]
    mean_abs_r: np.ndarray
    std: np.ndarray
    average: np.ndarray
    window_len: int
    pairs: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "bands": self.bands,
            "subjects": self.subjects,
            "mean_abs_r": self.mean_abs_r.tolist(),
            "std": self.std.tolist(),
            "average": self.average.tolist(),
            "window_len": self.window_len,
            "pairs": self.pairs,
            "seed": self.seed,
        }

    def format_text(self) -> str:
        """Aligned text table: one band per row, one subject per column."""
        header = ["band".ljust(8)] + [f"s{sid}".rjust(8) for sid in self.subjects]
        header += ["std".rjust(9), "average".rjust(9)]
        lines = ["".join(header)]
        for b, band in enumerate(self.bands):
            cells = [band.ljust(8)]
            cells += [f"{v:8.3f}" for v in self.mean_abs_r[b]]
            cells += [f"{self.std[b]:9.4f}", f"{self.average[b]:9.3f}"]
            lines.append("".join(cells))
        return "\n".join(lines) + "\n"


def inter_subject_correlation(recordings_by_subject: Mapping[int, Sequence[Recording]],
                              bands: Sequence[Band], window_len: int = 128,
                              pairs: int = 100, seed: int = 0) -> CorrelationTable:
    """Mean |Pearson r| between each subject and the others, per band.

    Each sampled pair compares time-aligned windows: one random
    (other subject, recording index, channel, start offset) draw defines a
    window that is read from both subjects' recordings, so identical
    recordings correlate at exactly 1. Deterministic given the seed.
    """
    subjects = sorted(recordings_by_subject)
    if len(subjects) < 2:
        raise EvaluationError("the correlation study needs at least 2 subjects")
    if pairs < 1:
        raise EvaluationError("pairs must be >= 1")
    for sid in subjects:
        for rec in recordings_by_subject[sid]:
            if rec.n_samples < window_len:
                raise EvaluationError(
                    f"subject {sid}: recording shorter ({rec.n_samples}) than window {window_len}"
                )

    decomposed = {
        band.name: {sid: [decompose(rec, band) for rec in recordings_by_subject[sid]]
                    for sid in subjects}
        for band in bands
    }

    rng = substream(seed, "correlation-study")
    table = np.zeros((len(bands), len(subjects)))
    for b, band in enumerate(bands):
        per_subject = decomposed[band.name]
        for si, sid in enumerate(subjects):
            others = [o for o in subjects if o != sid]
            total = 0.0
            for _ in range(pairs):
                total += _draw_abs_correlation(rng, per_subject, sid, others, window_len)
            table[b, si] = total / pairs

    return CorrelationTable(
        bands=[band.name for band in bands],
        subjects=subjects,
        mean_abs_r=table,
        std=table.std(axis=1),
        average=table.mean(axis=1),
        window_len=window_len,
        pairs=pairs,
        seed=seed,
    )


def _draw_abs_correlation(rng, per_subject, sid, others, window_len, max_attempts=100):
    for _ in range(max_attempts):
        other = others[rng.integers(len(others))]
        recs_s = per_subject[sid]
        recs_o = per_subject[other]
        rec_idx = int(rng.integers(min(len(recs_s), len(recs_o))))
        a, b = recs_s[rec_idx], recs_o[rec_idx]
        channel = int(rng.integers(min(a.n_channels, b.n_channels)))
        limit = min(a.n_samples, b.n_samples) - window_len
        start = int(rng.integers(limit + 1))
        wa = a.samples[start:start + window_len, channel]
        wb = b.samples[start:start + window_len, channel]
        if wa.std() == 0.0 or wb.std() == 0.0:
            continue  # degenerate window: redraw (still deterministic)
        return abs(pearson(wa, wb))
    raise EvaluationError("could not draw a non-constant window pair")
