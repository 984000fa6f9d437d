"""Task labels, stratified splitting, cross-validation and classification metrics."""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .balance import BalanceConfig, BalanceMethod, TrainingSet, balance
from .errors import ClassTooSmallError, EmptyInputError, LengthMismatchError, UnknownTaskError
from .features import FeatureMatrix


class Task(str, enum.Enum):
    BINARY = "binary"
    PUPIL4 = "pupil4"
    EEG3 = "eeg3"
    NINE = "nine"


def _label_binary(cond, load, corr):
    return cond


def _label_pupil4(cond, load, corr):
    return "justlisten" if cond == "justlisten" else f"memory/{load}"


def _label_eeg3(cond, load, corr):
    return None if cond == "justlisten" else f"memory/{load}"


def _label_nine(cond, load, corr):
    return f"justlisten/{load}" if cond == "justlisten" else f"memory/{corr}/{load}"


@dataclass(frozen=True)
class TaskSpec:
    task: Task
    class_names: tuple[str, ...]
    label_fn: Callable

    def label(self, condition: str, load: int, correctness: str | None) -> int | None:
        name = self.label_fn(condition, int(load), correctness)
        return None if name is None else self.class_names.index(name)


_LOADS = (5, 9, 13)
TASKS: dict[Task, TaskSpec] = {
    Task.BINARY: TaskSpec(Task.BINARY, ("justlisten", "memory"), _label_binary),
    Task.PUPIL4: TaskSpec(Task.PUPIL4, ("justlisten", *(f"memory/{l}" for l in _LOADS)), _label_pupil4),
    Task.EEG3: TaskSpec(Task.EEG3, tuple(f"memory/{l}" for l in _LOADS), _label_eeg3),
    Task.NINE: TaskSpec(
        Task.NINE,
        (
            *(f"justlisten/{l}" for l in _LOADS),
            *(f"memory/correct/{l}" for l in _LOADS),
            *(f"memory/incorrect/{l}" for l in _LOADS),
        ),
        _label_nine,
    ),
}


def task_spec(task) -> TaskSpec:
    try:
        return TASKS[Task(task)]
    except ValueError:
        raise UnknownTaskError(f"unknown task {task!r}; choose from {[t.value for t in Task]}") from None


def make_labels(matrix: FeatureMatrix, task) -> tuple[FeatureMatrix, int]:
    """Label rows for ``task``; rows outside its domain are dropped and counted."""
    spec = task_spec(task)
    keep, labels = [], []
    for i, k in enumerate(matrix.keys):
        lab = spec.label(k.condition, k.load, k.correctness)
        if lab is not None:
            keep.append(i)
            labels.append(lab)
    out = matrix.take(np.array(keep, dtype=np.int64))
    out.labels = np.array(labels, dtype=np.int64)
    out.class_names = spec.class_names
    return out, len(matrix) - len(keep)


# Splitting ------------------------------------------------------------------------------------


class SplitMode(str, enum.Enum):
    PER_EPOCH = "epoch"
    PER_SUBJECT = "subject"


@dataclass(frozen=True)
class Split:
    train_idx: np.ndarray
    test_idx: np.ndarray


def _subject_strata(y: np.ndarray, groups: np.ndarray) -> dict[str, int]:
    """Each subject's majority class; ties go to the lowest class id."""
    out = {}
    for s in sorted(set(groups.tolist())):
        out[s] = int(np.argmax(np.bincount(y[groups == s])))
    return out


def _n_test(n: int, frac: float, floor: int) -> int:
    return int(min(max(round(frac * n), floor), n - 1))


def stratified_split(
    y: np.ndarray,
    test_fraction: float = 0.2,
    mode: SplitMode | str = SplitMode.PER_EPOCH,
    seed: int = 0,
    groups: np.ndarray | None = None,
) -> Split:
    """Hold out ``test_fraction`` of rows per class, or of subjects per majority class.

    In subject mode every subject lands wholly in one partition.
    """
    y = np.asarray(y, dtype=np.int64)
    mode = SplitMode(mode)
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test = []
    if mode is SplitMode.PER_EPOCH:
        for c in np.unique(y):
            idx = np.flatnonzero(y == c)
            if len(idx) < 2:
                raise ClassTooSmallError(f"class {c} has {len(idx)} row(s); a split needs at least 2")
            test.extend(rng.permutation(idx)[: _n_test(len(idx), test_fraction, 1)].tolist())
    else:
        if groups is None:
            raise ValueError("subject mode needs groups")
        groups = np.asarray(groups)
        strata = _subject_strata(y, groups)
        if len(strata) < 2:
            raise ClassTooSmallError("a subject-wise split needs at least 2 subjects")
        chosen = []
        for c in sorted(set(strata.values())):
            subs = np.array([s for s, k in strata.items() if k == c])
            k = _n_test(len(subs), test_fraction, 0) if len(subs) > 1 else 0
            chosen.extend(rng.permutation(subs)[:k].tolist())
        if not chosen:
            # every stratum had one subject; hold out one subject overall
            chosen = [rng.permutation(sorted(strata))[0]]
        if len(chosen) == len(strata):
            chosen = chosen[:-1]
        test = np.flatnonzero(np.isin(groups, chosen)).tolist()
    test_idx = np.array(sorted(test), dtype=np.int64)
    mask = np.ones(len(y), dtype=bool)
    mask[test_idx] = False
    return Split(np.flatnonzero(mask), test_idx)


def fold_assignments(
    y: np.ndarray, k: int, mode: SplitMode | str = SplitMode.PER_EPOCH, seed: int = 0, groups=None
) -> np.ndarray:
    """Fold id per row, stratified by class (rows) or majority class (subjects)."""
    y = np.asarray(y, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    mode = SplitMode(mode)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    if mode is SplitMode.PER_EPOCH:
        order = []
        for c in np.unique(y):
            idx = np.flatnonzero(y == c)
            if len(idx) < k:
                raise ClassTooSmallError(f"class {c} has {len(idx)} rows, fewer than k={k} folds")
            order.extend(rng.permutation(idx).tolist())
        fold[np.array(order)] = np.arange(len(order)) % k
        return fold
    groups = np.asarray(groups)
    strata = _subject_strata(y, groups)
    if len(strata) < k:
        raise ClassTooSmallError(f"{len(strata)} subjects cannot fill k={k} folds")
    order = []
    for c in sorted(set(strata.values())):
        order.extend(rng.permutation([s for s, v in strata.items() if v == c]).tolist())
    for i, s in enumerate(order):
        fold[groups == s] = i % k
    return fold


def partitions(matrix: FeatureMatrix, split: Split) -> tuple[TrainingSet, FeatureMatrix]:
    """The training rows as a balancer-eligible set, and the held-out rows."""
    train = matrix.take(split.train_idx)
    return TrainingSet(train.X, train.labels), matrix.take(split.test_idx)


# Metrics ----------------------------------------------------------------------------------------


@dataclass
class EvalReport:
    n_classes: int
    class_names: tuple[str, ...]
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_f1: float
    confusion: list[list[int]]
    zero_prediction_classes: list[int]
    roc_auc: float | None = None
    roc_curve: dict | None = None
    cv: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "class_names": list(self.class_names),
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "confusion": self.confusion,
            "zero_prediction_classes": self.zero_prediction_classes,
            "roc_auc": self.roc_auc,
            "roc_curve": self.roc_curve,
            "cv": self.cv,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        extra = {k: v for k, v in d.items() if k not in known}
        args = {k: d[k] for k in known if k in d}
        args["class_names"] = tuple(args.get("class_names", ()))
        return cls(**args, extra=extra)


_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def roc_points(y_true: np.ndarray, score: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """False/true positive rates at every distinct score threshold, descending."""
    order = np.argsort(-score, kind="stable")
    s, t = score[order], y_true[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(t)[distinct]
    fps = (distinct + 1) - tps
    P, N = t.sum(), len(t) - t.sum()
    return np.r_[0.0, fps / N], np.r_[0.0, tps / P]


def compute_metrics(y_true, y_pred, n_classes: int | None = None, scores=None, class_names: Sequence[str] = ()) -> EvalReport:
    """Accuracy, one-vs-rest precision/recall/F1 (0/0 taken as 0), confusion matrix
    and, for two classes with scores, the trapezoidal ROC-AUC."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) != len(y_pred):
        raise LengthMismatchError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise EmptyInputError("no predictions to score")
    k = int(max(y_true.max(), y_pred.max()) + 1) if n_classes is None else n_classes
    prec, rec, f1, sup, zero_pred = [], [], [], [], []
    for c in range(k):
        t, p = y_true == c, y_pred == c
        tp = int(np.sum(t & p))
        n_pred, n_true = int(p.sum()), int(t.sum())
        if n_pred == 0:
            zero_pred.append(c)
        pc, rc = _div(tp, n_pred), _div(tp, n_true)
        prec.append(pc)
        rec.append(rc)
        f1.append(_div(2 * pc * rc, pc + rc))
        sup.append(n_true)
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    total = len(y_true)
    report = EvalReport(
        n_classes=k,
        class_names=tuple(class_names) or tuple(str(c) for c in range(k)),
        accuracy=float(np.mean(y_true == y_pred)),
        precision=prec,
        recall=rec,
        f1=f1,
        support=sup,
        macro_precision=float(np.mean(prec)),
        macro_recall=float(np.mean(rec)),
        macro_f1=float(np.mean(f1)),
        weighted_f1=float(sum(f * s for f, s in zip(f1, sup)) / total),
        confusion=conf.tolist(),
        zero_prediction_classes=zero_pred,
    )
    if scores is not None and k == 2:
        s = np.asarray(scores, dtype=float)
        s = s[:, 1] if s.ndim == 2 else s
        pos = (y_true == 1).astype(np.int64)
        if 0 < pos.sum() < len(pos):
            fpr, tpr = roc_points(pos, s)
            report.roc_auc = float(_trapezoid(tpr, fpr))
            report.roc_curve = {"fpr": fpr.tolist(), "tpr": tpr.tolist()}
    return report


# Cross-validation -----------------------------------------------------------------------------------

FitPredict = Callable[[TrainingSet, np.ndarray], tuple[np.ndarray, np.ndarray | None]]


def cross_validate(
    matrix: FeatureMatrix,
    fit_predict: FitPredict,
    k: int = 5,
    mode: SplitMode | str = SplitMode.PER_EPOCH,
    seed: int = 0,
    balance_config: BalanceConfig | None = None,
    threads: int = 1,
) -> dict:
    """Per-fold metrics with mean and population standard deviation.

    Balancing, when configured, touches only each fold's training rows.
    """
    y = matrix.labels
    folds = fold_assignments(y, k, mode, seed, matrix.groups)
    n_classes = len(matrix.class_names) or int(y.max()) + 1

    def run(f: int) -> EvalReport:
        split = Split(np.flatnonzero(folds != f), np.flatnonzero(folds == f))
        train, test = partitions(matrix, split)
        if balance_config is not None and balance_config.method is not BalanceMethod.NONE:
            train = balance(train, balance_config).train
        labels, scores = fit_predict(train, test.X)
        return compute_metrics(test.labels, labels, n_classes, scores)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, range(k)))
    else:
        reports = [run(f) for f in range(k)]
    summary = {"k": k, "mode": SplitMode(mode).value, "seed": seed, "folds": []}
    for name in ("accuracy", "macro_f1", "weighted_f1"):
        vals = np.array([getattr(r, name) for r in reports])
        summary[name] = {"mean": float(vals.mean()), "std": float(vals.std()), "folds": vals.tolist()}
    summary["folds"] = [int(np.sum(folds == f)) for f in range(k)]
    return summary


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.4f} ± {std:.4f}"


@dataclass(frozen=True)
class TableRow:
    model: str
    cv_mean: float | None
    cv_std: float | None
    accuracy: float
    weighted_f1: float
    macro_f1: float


MODEL_LABELS = {"rf": "Random Forest", "gbt": "Boosted Trees", "svm": "SVM"}


def results_table(rows: Sequence[TableRow], binary: bool) -> str:
    """Plain-text table with columns Model, CV Acc., Binary/Multi Acc., F1 (W), F1 (M)."""
    acc_col = "Binary Acc." if binary else "Multi Acc."
    header = ["Model", "CV Acc.", acc_col, "F1 (W)", "F1 (M)"]
    body = []
    for r in rows:
        cv = "n/a" if r.cv_mean is None else format_mean_std(r.cv_mean, r.cv_std or 0.0)
        body.append([MODEL_LABELS.get(r.model, r.model), cv, f"{r.accuracy:.4f}", f"{r.weighted_f1:.4f}", f"{r.macro_f1:.4f}"])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "|-" + "-|-".join("-" * w for w in widths) + "-|"
    return "\n".join([line(header), sep, *(line(b) for b in body)]) + "\n"


# Published figures for the boosted model, used when a real dataset is supplied.
REFERENCE_ACCURACY = {
    ("pupil", "binary"): 0.613,
    ("eeg", "binary"): 0.5732,
    ("eeg", "eeg3"): 0.9982,
}
REFERENCE_TOLERANCE = 0.05


def reference_deviation(modality: str, task: str, accuracy: float) -> dict | None:
    ref = REFERENCE_ACCURACY.get((modality, task))
    if ref is None:
        return None
    dev = accuracy - ref
    return {"reference": ref, "observed": accuracy, "deviation": dev, "within_tolerance": abs(dev) <= REFERENCE_TOLERANCE}


__all__ = [
    "MODEL_LABELS",
    "REFERENCE_ACCURACY",
    "TASKS",
    "EvalReport",
    "Split",
    "SplitMode",
    "TableRow",
    "Task",
    "TaskSpec",
    "compute_metrics",
    "cross_validate",
    "fold_assignments",
    "format_mean_std",
    "make_labels",
    "partitions",
    "reference_deviation",
    "results_table",
    "roc_points",
    "stratified_split",
    "task_spec",
]
