"""Classification accuracy and OOD-detection quality metrics.

AUROC follows the Mann-Whitney formulation (ties count 1/2); the
FPR-at-TPR threshold reuses the engine's nearest-rank retention rule so
the two modules cannot disagree on quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import retention_threshold, validate_scores
from .errors import DomainError, ShapeError
from .tensorio import atomic_write_text, validate_labels


def accuracy(pred, truth) -> float:
    """Fraction of exact label matches."""
    p = validate_labels(pred)
    t = validate_labels(truth)
    if p.shape[0] != t.shape[0]:
        raise ShapeError(f"{p.shape[0]} predictions vs {t.shape[0]} truths")
    if p.shape[0] == 0:
        raise DomainError("accuracy of an empty batch is undefined")
    return float(np.mean(p == t))


def confusion_matrix(pred, truth, n_classes: int | None = None) -> np.ndarray:
    """Counts indexed [true class, predicted class]."""
    p = validate_labels(pred)
    t = validate_labels(truth)
    if p.shape[0] != t.shape[0]:
        raise ShapeError(f"{p.shape[0]} predictions vs {t.shape[0]} truths")
    if n_classes is None:
        n_classes = int(max(p.max(initial=-1), t.max(initial=-1))) + 1
    if p.size and max(p.max(), t.max()) >= n_classes:
        raise DomainError("label out of range for the confusion matrix")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return counts


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group-average rank."""
    n = values.size
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    new_group = np.r_[True, sorted_vals[1:] != sorted_vals[:-1]]
    group_id = np.cumsum(new_group) - 1
    first = np.flatnonzero(new_group)
    counts = np.diff(np.r_[first, n])
    group_rank = first + 1 + (counts - 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = group_rank[group_id]
    return ranks


def auroc(id_scores, ood_scores) -> float:
    """Probability a random ID score exceeds a random OOD score (ties = 1/2)."""
    a = validate_scores(id_scores, name="id_scores")
    b = validate_scores(ood_scores, name="ood_scores")
    if a.size == 0 or b.size == 0:
        raise DomainError("AUROC needs at least one score on each side")
    ranks = _average_ranks(np.concatenate([a, b]))
    rank_sum_id = ranks[: a.size].sum()
    u_statistic = rank_sum_id - a.size * (a.size + 1) / 2.0
    return float(u_statistic / (a.size * b.size))


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float) -> float:
    """False-positive rate of OOD scores at the threshold retaining ``tpr_target`` of ID."""
    a = validate_scores(id_scores, name="id_scores")
    b = validate_scores(ood_scores, name="ood_scores")
    if a.size == 0 or b.size == 0:
        raise DomainError("FPR-at-TPR needs at least one score on each side")
    threshold = retention_threshold(a, tpr_target)
    return float(np.mean(b > threshold))


@dataclass(frozen=True)
class EvalReport:
    """Classification and detection quality for one evaluation run."""

    accuracy: float
    confusion: np.ndarray
    n_id: int
    n_ood: int
    auroc: float | None = None
    fpr: float | None = None
    tpr_target: float | None = None
    extras: dict | None = None

    def lines(self) -> list[str]:
        def fmt(value):
            return "nan" if value is None else repr(float(value))

        out = [
            f"accuracy={fmt(self.accuracy)}",
            f"auroc={fmt(self.auroc)}",
            f"fpr_at_tpr={fmt(self.fpr)}",
            f"tpr_target={fmt(self.tpr_target)}",
            f"n_id={self.n_id}",
            f"n_ood={self.n_ood}",
        ]
        for key in sorted(self.extras or {}):
            out.append(f"{key}={fmt(self.extras[key])}")
        return out


def evaluate(
    pred,
    truth,
    id_scores=None,
    ood_scores=None,
    tpr_target: float = 0.95,
    extras: dict | None = None,
) -> EvalReport:
    """Bundle accuracy/confusion with OOD metrics when an OOD split is present."""
    acc = accuracy(pred, truth)
    confusion = confusion_matrix(pred, truth)
    n_id = len(np.atleast_1d(id_scores)) if id_scores is not None else len(truth)
    if ood_scores is None or len(np.atleast_1d(ood_scores)) == 0:
        return EvalReport(
            accuracy=acc, confusion=confusion, n_id=n_id, n_ood=0, extras=extras
        )
    return EvalReport(
        accuracy=acc,
        confusion=confusion,
        n_id=n_id,
        n_ood=len(np.atleast_1d(ood_scores)),
        auroc=auroc(id_scores, ood_scores),
        fpr=fpr_at_tpr(id_scores, ood_scores, tpr_target),
        tpr_target=tpr_target,
        extras=extras,
    )


def save_report(report: EvalReport, report_path, confusion_path) -> None:
    """Write the key=value report and the confusion matrix CSV."""
    atomic_write_text(report_path, "\n".join(report.lines()) + "\n")
    k = report.confusion.shape[0]
    lines = [",".join(f"pred{j}" for j in range(k))]
    lines.extend(",".join(str(int(v)) for v in row) for row in report.confusion)
    atomic_write_text(confusion_path, "\n".join(lines) + "\n")
