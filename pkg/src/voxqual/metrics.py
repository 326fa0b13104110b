"""Evaluation metrics and utterance-to-patient aggregation.

Regression: MSE (with the standard deviation of per-sample squared errors),
Pearson correlation, and Spearman rank correlation with average ranks for
ties. Classification: per-class precision/recall/F1, macro and
support-weighted averages, accuracy, and the confusion matrix.

Patient-level aggregation averages a patient's utterance predictions for
regression; for classification it takes the modal class, breaking ties by
closeness to the mean of the patient's predicted classes and then by the
lower class index.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

GRADE_BIN_NAMES = ("mild", "moderate", "severe")
GRBAS_INDICATORS = ("G", "R", "B", "A", "S")


@dataclass
class RegressionMetrics:
    mse: float
    mse_std: float  # std of the per-sample squared errors
    pcc: Optional[float]  # None when undefined (constant inputs or N < 2)
    srcc: Optional[float]
    n: int


@dataclass
class ClassificationReport:
    confusion: np.ndarray  # rows true, columns predicted
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    accuracy: float
    n: int
    zero_denominator: bool  # some score defaulted to 0 on an empty denominator


@dataclass
class PatientGroup:
    patient_id: str
    predictions: list
    label: object = None
    utterance_ids: list = field(default_factory=list)

    def __post_init__(self):
        if not self.predictions:
            raise ValueError(f"patient {self.patient_id}: empty prediction group")


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x, y) -> Optional[float]:
    """Sample Pearson correlation; None when either input is constant or N < 2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise ValueError(f"pearson: length mismatch {x.size} vs {y.size}")
    if x.size < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        return None
    return float((dx * dy).sum() / (sx * sy))


def spearman(x, y) -> Optional[float]:
    """Pearson correlation of average ranks."""
    return pearson(average_ranks(x), average_ranks(y))


def regression_metrics(preds, labels) -> RegressionMetrics:
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape or preds.ndim != 1 or preds.size == 0:
        raise ValueError(f"regression_metrics: bad shapes {preds.shape} vs {labels.shape}")
    sq = (preds - labels) ** 2
    return RegressionMetrics(
        mse=float(sq.mean()),
        mse_std=float(sq.std()),
        pcc=pearson(preds, labels),
        srcc=spearman(preds, labels),
        n=preds.size,
    )


def classification_metrics(pred_classes, true_classes, n_classes: int = 3) -> ClassificationReport:
    preds = np.asarray(pred_classes, dtype=np.int64)
    trues = np.asarray(true_classes, dtype=np.int64)
    if preds.size == 0 or preds.shape != trues.shape:
        raise ValueError("classification_metrics: empty or mismatched inputs")
    if preds.min() < 0 or preds.max() >= n_classes or trues.min() < 0 or trues.max() >= n_classes:
        raise ValueError(f"classification_metrics: classes must lie in [0, {n_classes})")

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(trues, preds):
        confusion[t, p] += 1

    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    diag = np.diag(confusion).astype(np.float64)
    zero_denominator = False

    def safe_div(num, den):
        nonlocal zero_denominator
        out = np.zeros_like(num, dtype=np.float64)
        ok = den > 0
        if not ok.all():
            zero_denominator = True
        out[ok] = num[ok] / den[ok]
        return out

    precision = safe_div(diag, predicted)
    recall = safe_div(diag, support)
    f1 = safe_div(2.0 * precision * recall, precision + recall)

    n = preds.size
    weights = support / n
    return ClassificationReport(
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float((weights * precision).sum()),
        weighted_recall=float((weights * recall).sum()),
        weighted_f1=float((weights * f1).sum()),
        accuracy=float(diag.sum() / n),
        n=n,
        zero_denominator=zero_denominator,
    )


def aggregate_regression(group: PatientGroup) -> np.ndarray:
    """Arithmetic mean of the patient's utterance predictions, per indicator."""
    return np.mean(np.asarray(group.predictions, dtype=np.float64), axis=0)


def aggregate_classification(group: PatientGroup) -> int:
    """Modal class; ties go to the mode nearest the mean, then the lowest index."""
    classes = np.asarray(group.predictions, dtype=np.int64)
    counts = np.bincount(classes)
    modes = np.flatnonzero(counts == counts.max())
    if modes.size == 1:
        return int(modes[0])
    center = classes.mean()
    return int(min(modes, key=lambda k: (abs(k - center), k)))


def bin_grade(score: float) -> str:
    """Severity bins: [0, 1] mild, (1, 2] moderate, (2, 3] severe."""
    if not (0.0 <= score <= 3.0):
        raise ValueError(f"grade score {score} outside [0, 3]")
    if score <= 1.0:
        return "mild"
    if score <= 2.0:
        return "moderate"
    return "severe"


def bin_grade_index(score: float) -> int:
    return GRADE_BIN_NAMES.index(bin_grade(score))


# ---------------------------------------------------------------------------
# two-level evaluation over prediction rows
# ---------------------------------------------------------------------------


@dataclass
class PredictionOutcome:
    utterance_id: str
    patient_id: str
    values: np.ndarray  # regression vector or class probabilities
    label: np.ndarray  # regression targets or [class index]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.label = np.asarray(self.label, dtype=np.float64)


def group_by_patient(outcomes: Sequence[PredictionOutcome]) -> list:
    groups: dict[str, PatientGroup] = {}
    for o in outcomes:
        g = groups.get(o.patient_id)
        if g is None:
            groups[o.patient_id] = PatientGroup(
                o.patient_id, [o.values], label=o.label, utterance_ids=[o.utterance_id]
            )
        else:
            if not np.array_equal(g.label, o.label):
                raise ValueError(f"patient {o.patient_id} has inconsistent labels")
            g.predictions.append(o.values)
            g.utterance_ids.append(o.utterance_id)
    return list(groups.values())


def evaluate_regression(outcomes: Sequence[PredictionOutcome], indicators: Sequence[str]):
    """Per-indicator metrics at the utterance and patient levels."""
    preds = np.asarray([o.values for o in outcomes], dtype=np.float64)
    labels = np.asarray([o.label for o in outcomes], dtype=np.float64)
    report = {"utterance": {}, "patient": {}}
    for j, name in enumerate(indicators):
        report["utterance"][name] = regression_metrics(preds[:, j], labels[:, j])
    groups = group_by_patient(outcomes)
    p_preds = np.asarray([aggregate_regression(g) for g in groups])
    p_labels = np.asarray([g.label for g in groups], dtype=np.float64)
    for j, name in enumerate(indicators):
        report["patient"][name] = regression_metrics(p_preds[:, j], p_labels[:, j])
    return report


def evaluate_classification(outcomes: Sequence[PredictionOutcome], n_classes: int = 3):
    """Accuracy/precision/recall/F1 at the utterance and patient levels."""
    pred_classes = [int(np.argmax(o.values)) for o in outcomes]
    true_classes = [int(o.label[0]) for o in outcomes]
    report = {
        "utterance": classification_metrics(pred_classes, true_classes, n_classes)
    }
    class_outcomes = [
        PredictionOutcome(o.utterance_id, o.patient_id, [int(np.argmax(o.values))], o.label)
        for o in outcomes
    ]
    groups = group_by_patient(class_outcomes)
    p_preds = [aggregate_classification(PatientGroup(g.patient_id, [int(v[0]) for v in g.predictions])) for g in groups]
    p_trues = [int(g.label[0]) for g in groups]
    report["patient"] = classification_metrics(p_preds, p_trues, n_classes)
    return report


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def regression_report_lines(report) -> list:
    lines = []
    for level in ("utterance", "patient"):
        for name, m in report[level].items():
            base = f"{level}.{name}"
            lines.append(f"{base}.mse={m.mse:.6f}")
            lines.append(f"{base}.mse_std={m.mse_std:.6f}")
            lines.append(f"{base}.pcc={'undefined' if m.pcc is None else format(m.pcc, '.6f')}")
            lines.append(f"{base}.srcc={'undefined' if m.srcc is None else format(m.srcc, '.6f')}")
            lines.append(f"{base}.n={m.n}")
    return lines


def classification_report_lines(report) -> list:
    lines = []
    for level in ("utterance", "patient"):
        m = report[level]
        base = level
        for avg in ("macro", "weighted"):
            for metric in ("precision", "recall", "f1"):
                lines.append(f"{base}.{avg}_{metric}={getattr(m, f'{avg}_{metric}'):.6f}")
        lines.append(f"{base}.accuracy={m.accuracy:.6f}")
        lines.append(f"{base}.n={m.n}")
        if m.zero_denominator:
            lines.append(f"{base}.zero_denominator_warning=1")
        flat = ",".join(str(v) for v in m.confusion.reshape(-1))
        lines.append(f"{base}.confusion={flat}")
    return lines


def scatter_csv(outcomes: Sequence[PredictionOutcome], indicators: Sequence[str]) -> str:
    """CSV export `utterance_id,patient_id,indicator,prediction,label`."""
    buf = io.StringIO()
    buf.write("utterance_id,patient_id,indicator,prediction,label\n")
    for o in outcomes:
        for j, name in enumerate(indicators):
            buf.write(
                f"{o.utterance_id},{o.patient_id},{name},{o.values[j]:.6f},{o.label[j]:.6f}\n"
            )
    return buf.getvalue()
