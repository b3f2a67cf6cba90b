"""Training and evaluation protocol: folds, loss, metrics, epoch selection.

Stratified 10-fold cross-validation with per-fold best-epoch selection by F1
or a recall-weighted F-beta, weighted binary cross-entropy against class
imbalance, a six-metric report suite computed from first principles (ROC-AUC
by rank statistics, ties counted one half), and unweighted mean/std fold
aggregation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import RunError, ValidationError
from .models import AdamW, Checkpoint, NeuralModel, linear_lr, weighted_bce_loss
from .models.autodiff import sigmoid_values

METRIC_NAMES = ("accuracy", "balanced_accuracy", "precision", "recall", "f1", "roc_auc")


class ProtocolWarning(UserWarning):
    """Degenerate but tolerated protocol situations (e.g. folds without positives)."""


@dataclass(frozen=True)
class FoldSplit:
    """One cross-validation fold: disjoint train/heldout index arrays."""

    fold_index: int
    train_idx: np.ndarray
    heldout_idx: np.ndarray
    seed: int


@dataclass(frozen=True)
class SelectionPolicy:
    """Checkpoint selection criterion: plain F1 or F-beta with beta > 0."""

    criterion: str = "f1"
    beta: float | None = None

    def __post_init__(self):
        if self.criterion not in ("f1", "f_beta"):
            raise ValidationError(f"unknown selection criterion {self.criterion!r}")
        if self.criterion == "f_beta":
            if self.beta is None or self.beta <= 0:
                raise ValidationError("f_beta selection requires beta > 0")

    def score(self, report: "MetricsReport") -> float:
        if self.criterion == "f1":
            return report.f1
        return f_beta(report.precision, report.recall, self.beta)


@dataclass(frozen=True)
class MetricsReport:
    """Six positive-class metrics for one fold (or the aggregate)."""

    accuracy: float
    balanced_accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    fold: int | str = 0
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "fold": self.fold,
            "degenerate": list(self.degenerate),
        }

    def values(self) -> np.ndarray:
        return np.array(
            [self.accuracy, self.balanced_accuracy, self.precision, self.recall, self.f1, self.roc_auc]
        )


@dataclass(frozen=True)
class AggregateReport:
    """Unweighted per-metric mean and (population) std across folds."""

    mean: MetricsReport
    std: MetricsReport
    n_folds: int

    def as_dict(self) -> dict:
        return {"mean": self.mean.as_dict(), "std": self.std.as_dict(), "n_folds": self.n_folds}


@dataclass(frozen=True)
class Hyperparameters:
    lr: float
    weight_decay: float
    dropout: float
    epochs: int
    batch_size: int = 64

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("hyperparameters must have lr > 0, epochs >= 1, batch_size >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")


# fixed configurations from the two dataset profiles; batch size is ours
PROFILES: dict[str, Hyperparameters] = {
    "evons": Hyperparameters(lr=1e-4, weight_decay=0.01, dropout=0.1, epochs=50),
    "fakenewsnet": Hyperparameters(lr=8e-5, weight_decay=0.01, dropout=0.1, epochs=100),
}


# ---------------------------------------------------------------------------
# folds


def stratified_kfold(labels: Sequence[int], k: int = 10, seed: int = 0) -> list[FoldSplit]:
    """Deterministic stratified folds: per-class counts differ by <= 1 across folds.

    Folds without a positive item are tolerated with a warning (unavoidable
    when the minority class is smaller than k); single-class labels are an
    error.
    """
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.size < k:
        raise ValidationError(f"need at least k={k} labeled items")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValidationError("stratified folds require both classes present")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D]))
    assignments = np.empty(y.size, dtype=np.int64)
    for cls in classes:
        members = np.flatnonzero(y == cls)
        rng.shuffle(members)
        assignments[members] = np.arange(members.size) % k
    minority = min(int((y == c).sum()) for c in classes)
    if minority < k:
        warnings.warn(
            f"minority class has {minority} items for k={k}: some folds hold no minority item",
            ProtocolWarning,
            stacklevel=2,
        )
    splits = []
    for fold in range(k):
        heldout = np.flatnonzero(assignments == fold)
        train = np.flatnonzero(assignments != fold)
        splits.append(FoldSplit(fold_index=fold, train_idx=train, heldout_idx=heldout, seed=seed))
    return splits


# ---------------------------------------------------------------------------
# loss and metrics


def weighted_bce(logit, label, w_pos: float = 1.0) -> float:
    """Mean weighted BCE on logits, in the stabilized softplus form."""
    if w_pos <= 0:
        raise ValidationError(f"w_pos must be > 0, got {w_pos}")
    z = np.atleast_1d(np.asarray(logit, dtype=np.float64))
    y = np.atleast_1d(np.asarray(label, dtype=np.float64))
    if z.shape != y.shape:
        raise ValidationError("logit and label shapes differ")
    softplus = lambda x: np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    loss = w_pos * y * softplus(-z) + (1.0 - y) * softplus(z)
    return float(loss.mean())


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> tuple[float, bool]:
    """Fraction of (positive, negative) pairs ranked correctly, ties as 1/2.

    Computed via the rank-sum identity with midranks, which equals the
    pairwise definition exactly. Returns (auc, degenerate) where degenerate
    means one class was absent (auc reported as 0).
    """
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.0, True
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0  # 1-indexed midrank
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)), False


def compute_metrics(
    predicted: Sequence[int], scores: Sequence[float], true: Sequence[int], fold: int | str = 0
) -> MetricsReport:
    """The six positive-class metrics; undefined ratios report 0 with a flag."""
    pred = np.asarray(predicted, dtype=np.int64)
    y = np.asarray(true, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if not (pred.shape == y.shape == s.shape):
        raise ValidationError("predicted, scores, and true labels must have equal lengths")
    if pred.size == 0:
        raise ValidationError("cannot compute metrics on empty inputs")

    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    degenerate: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    accuracy = (tp + tn) / pred.size
    tpr = ratio(tp, tp + fn, "recall")
    tnr = ratio(tn, tn + fp, "tnr")
    precision = ratio(tp, tp + fp, "precision")
    f1 = 2.0 * precision * tpr / (precision + tpr) if (precision + tpr) > 0 else 0.0
    auc, auc_degenerate = roc_auc(s, y)
    if auc_degenerate:
        degenerate.append("roc_auc")
    return MetricsReport(
        accuracy=float(accuracy),
        balanced_accuracy=float((tpr + tnr) / 2.0),
        precision=float(precision),
        recall=float(tpr),
        f1=float(f1),
        roc_auc=auc,
        fold=fold,
        degenerate=tuple(degenerate),
    )


def f_beta(precision: float, recall: float, beta: float) -> float:
    """(1 + beta^2) P R / (beta^2 P + R); 0 when both P and R are 0."""
    if not 0.0 <= precision <= 1.0 or not 0.0 <= recall <= 1.0:
        raise ValidationError("precision and recall must lie in [0, 1]")
    if beta <= 0:
        raise ValidationError("beta must be > 0")
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denom


def aggregate_folds(reports: Sequence[MetricsReport]) -> AggregateReport:
    """Unweighted mean and population std of each metric across folds."""
    if len(reports) == 0:
        raise ValidationError("aggregate_folds needs at least one fold report")
    matrix = np.stack([r.values() for r in reports])
    identical = np.all(matrix == matrix[0], axis=0)  # avoid summation noise on constant columns
    mean = np.where(identical, matrix[0], matrix.mean(axis=0))
    std = np.where(identical, 0.0, matrix.std(axis=0))
    flags = tuple(sorted({flag for r in reports for flag in r.degenerate}))
    return AggregateReport(
        mean=MetricsReport(*[float(v) for v in mean], fold="aggregate", degenerate=flags),
        std=MetricsReport(*[float(v) for v in std], fold="aggregate"),
        n_folds=len(reports),
    )


# ---------------------------------------------------------------------------
# fold training


@dataclass
class EpochTrace:
    epoch: int
    lr: float
    train_loss: float
    report: MetricsReport
    selection_score: float


@dataclass
class FoldResult:
    fold_index: int
    checkpoint: Checkpoint
    report: MetricsReport  # heldout metrics at the selected epoch
    trace: list[EpochTrace] = field(default_factory=list)
    positive_weight: float = 1.0
    protocol: str = "heldout"


def positive_class_weight(labels: np.ndarray) -> float:
    """N_neg / N_pos on the training fold; 1.0 when a class is missing."""
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        warnings.warn("single-class training labels: positive weight fixed at 1", ProtocolWarning)
        return 1.0
    return n_neg / n_pos


def _slice_batch(arrays: dict[str, np.ndarray], idx: np.ndarray) -> dict[str, np.ndarray]:
    return {key: value[idx] for key, value in arrays.items()}


def _stratified_subsplit(
    idx: np.ndarray, labels: np.ndarray, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Carve a stratified selection split out of a training fold."""
    keep, held = [], []
    for cls in np.unique(labels[idx]):
        members = idx[labels[idx] == cls]
        members = members.copy()
        rng.shuffle(members)
        cut = max(1, int(round(fraction * members.size)))
        held.extend(members[:cut])
        keep.extend(members[cut:])
    return np.array(sorted(keep)), np.array(sorted(held))


def train_fold(
    model: NeuralModel,
    arrays: dict[str, np.ndarray],
    labels: Sequence[int],
    fold: FoldSplit,
    hyper: Hyperparameters,
    policy: SelectionPolicy = SelectionPolicy("f1"),
    w_pos: float | None = None,
    threshold: float = 0.5,
    nested_selection_fraction: float | None = None,
) -> FoldResult:
    """Train on the fold's training items for the full epoch budget.

    The learning rate decays linearly from hyper.lr toward zero. After each
    epoch the held-out fold is scored at the decision threshold and the
    checkpoint maximizing the selection criterion is retained (ties break
    toward the earliest epoch). With nested_selection_fraction set, epoch
    selection uses an inner stratified split instead of the held-out fold.
    """
    y = np.asarray(labels, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([fold.seed, fold.fold_index, 0x7A1]))

    train_idx = fold.train_idx
    selection_idx = fold.heldout_idx
    protocol = "heldout"
    if nested_selection_fraction:
        train_idx, selection_idx = _stratified_subsplit(
            fold.train_idx, y.astype(np.int64), nested_selection_fraction, rng
        )
        protocol = f"nested({nested_selection_fraction})"

    if w_pos is None:
        w_pos = positive_class_weight(y[train_idx])

    optimizer = AdamW(model.parameters(), lr=hyper.lr, weight_decay=hyper.weight_decay)
    trace: list[EpochTrace] = []
    best: tuple[float, int] | None = None
    best_checkpoint: Checkpoint | None = None
    best_report: MetricsReport | None = None

    for epoch in range(hyper.epochs):
        optimizer.lr = linear_lr(hyper.lr, epoch, hyper.epochs)
        order = train_idx.copy()
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, order.size, hyper.batch_size):
            batch_idx = order[start : start + hyper.batch_size]
            batch = _slice_batch(arrays, batch_idx)
            logits = model.forward(batch, train=True, rng=rng)
            loss = weighted_bce_loss(logits, y[batch_idx], w_pos=w_pos)
            if not np.isfinite(loss.value):
                raise RunError(f"non-finite loss at epoch {epoch} (fold {fold.fold_index})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.value) * batch_idx.size
        epoch_loss /= order.size

        report = evaluate_model(
            model, arrays, y, selection_idx, threshold=threshold, fold=fold.fold_index
        )
        score = policy.score(report)
        trace.append(EpochTrace(epoch, optimizer.lr, epoch_loss, report, score))
        if best is None or score > best[0]:
            best = (score, epoch)
            best_checkpoint = Checkpoint.from_model(model, epoch=epoch, selection_score=score)
            best_report = report

    assert best_checkpoint is not None and best_report is not None and best is not None
    if protocol != "heldout":
        # metrics are reported on the untouched held-out fold at the selected epoch
        restored = best_checkpoint.restore()
        best_report = evaluate_model(
            restored, arrays, y, fold.heldout_idx, threshold=threshold, fold=fold.fold_index
        )
    return FoldResult(
        fold_index=fold.fold_index,
        checkpoint=best_checkpoint,
        report=best_report,
        trace=trace,
        positive_weight=float(w_pos),
        protocol=protocol,
    )


def evaluate_model(
    model: NeuralModel,
    arrays: dict[str, np.ndarray],
    labels: np.ndarray,
    idx: np.ndarray,
    threshold: float = 0.5,
    fold: int | str = 0,
) -> MetricsReport:
    """Deterministic eval-mode scoring of a subset at the decision threshold."""
    batch = _slice_batch(arrays, idx)
    logits = model.forward(batch, train=False)
    scores = sigmoid_values(logits.value)
    predicted = (scores >= threshold).astype(np.int64)
    return compute_metrics(predicted, scores, labels[idx].astype(np.int64), fold=fold)
