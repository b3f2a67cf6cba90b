"""Binary label construction under explicit, recorded rules.

Three rules exist: a tail-percentile threshold on article engagement
(nearest-rank, labels inclusive at the threshold), a median split over summed
likes per tweet series (strictly-greater-than-median is positive), and a
veracity passthrough. Every labeled instance carries a provenance snapshot of
the fitted rule so labels can be re-derived from the raw corpus bit-exactly.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Article, TweetSeries
from .errors import ValidationError

DEGENERATE_PREVALENCE = 0.4  # median splits below this prevalence get flagged


class LabelDiagnosticWarning(UserWarning):
    """Raised (as a warning, never an error) for degenerate label splits."""


@dataclass(frozen=True)
class LabelRule:
    """A label rule plus, once fitted, the realized threshold."""

    task: str  # "veracity" | "virality"
    rule: str  # "percentile_threshold" | "median_split" | "passthrough"
    parameter: float | None = None
    threshold_value: float | None = None

    def fitted(self, threshold_value: float) -> "LabelRule":
        return LabelRule(self.task, self.rule, self.parameter, float(threshold_value))


@dataclass(frozen=True)
class LabeledInstance:
    item_id: str
    label: int
    provenance: LabelRule


@dataclass(frozen=True)
class ImbalanceReport:
    """Prevalence diagnostics plus the weighted-loss and dummy-F1 implications."""

    n_items: int
    n_positive: int
    prevalence: float
    positive_weight: float | None  # N_neg / N_pos; None when degenerate
    expected_dummy_f1: float
    degenerate: bool


def percentile_threshold(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-indexed)."""
    if len(values) == 0:
        raise ValidationError("percentile_threshold requires a non-empty value list")
    if not 0.0 < p < 100.0:
        raise ValidationError(f"percentile p must lie in (0, 100), got {p}")
    ordered = sorted(float(v) for v in values)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[rank - 1]


def label_by_threshold(
    articles: Sequence[Article], tau: float, task: str = "virality", parameter: float | None = None
) -> list[LabeledInstance]:
    """Label 1 iff engagement >= tau (inclusive at the threshold)."""
    rule = LabelRule(task=task, rule="percentile_threshold", parameter=parameter).fitted(tau)
    return [
        LabeledInstance(a.id, 1 if a.engagement >= tau else 0, rule)
        for a in articles
    ]


def percentile_labels(articles: Sequence[Article], p: float, task: str = "virality") -> list[LabeledInstance]:
    """Fit the nearest-rank percentile on the full corpus, then threshold."""
    tau = percentile_threshold([a.engagement for a in articles], p)
    instances = label_by_threshold(articles, tau, task=task, parameter=p)
    prevalence = sum(i.label for i in instances) / len(instances)
    if prevalence > 2.5 * (100.0 - p) / 100.0:
        warnings.warn(
            f"percentile split is degenerate: prevalence {prevalence:.3f} far exceeds "
            f"the nominal {(100.0 - p) / 100.0:.3f} (ties at the threshold)",
            LabelDiagnosticWarning,
            stacklevel=2,
        )
    return instances


def median_split_labels(series: Sequence[TweetSeries]) -> list[LabeledInstance]:
    """Median split over total likes per series; strictly above the median is positive.

    The median of an even count is the midpoint of the two central values.
    Splits with prevalence below 0.4 (heavy ties at the median) raise a
    diagnostic warning, not an error.
    """
    if len(series) == 0:
        raise ValidationError("median_split_labels requires a non-empty collection")
    totals = np.array([s.total_likes() for s in series], dtype=np.float64)
    median = float(np.median(totals))
    rule = LabelRule(task="virality", rule="median_split", parameter=None).fitted(median)
    instances = [
        LabeledInstance(s.id, 1 if t > median else 0, rule)
        for s, t in zip(series, totals)
    ]
    prevalence = sum(i.label for i in instances) / len(instances)
    if prevalence < DEGENERATE_PREVALENCE:
        warnings.warn(
            f"median split is degenerate: prevalence {prevalence:.3f} "
            f"({int(np.sum(totals == median))} items tie at the median {median})",
            LabelDiagnosticWarning,
            stacklevel=2,
        )
    return instances


def passthrough_labels(items: Sequence[Article] | Sequence[TweetSeries]) -> list[LabeledInstance]:
    """Use each item's stored veracity field as the label."""
    rule = LabelRule(task="veracity", rule="passthrough")
    out = []
    for item in items:
        if item.veracity is None:
            raise ValidationError(f"item {item.id!r} has no veracity label for passthrough labeling")
        out.append(LabeledInstance(item.id, int(item.veracity), rule))
    return out


def imbalance_diagnostics(labels: Sequence[int]) -> ImbalanceReport:
    """Prevalence, suggested positive-class weight, and the dummy-F1 yardstick.

    A stratified dummy matches the class prior in expectation, so its expected
    precision and recall (hence F1) equal the prevalence.
    """
    if len(labels) == 0:
        raise ValidationError("imbalance_diagnostics requires non-empty labels")
    n = len(labels)
    n_pos = int(sum(int(v) for v in labels))
    prevalence = n_pos / n
    degenerate = n_pos == 0 or n_pos == n
    w_pos = None if degenerate else (n - n_pos) / n_pos
    if degenerate:
        warnings.warn(
            f"labels are single-class (prevalence {prevalence:.3f}); positive weight undefined",
            LabelDiagnosticWarning,
            stacklevel=2,
        )
    return ImbalanceReport(
        n_items=n,
        n_positive=n_pos,
        prevalence=prevalence,
        positive_weight=w_pos,
        expected_dummy_f1=prevalence,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# label file round trip


def write_labels(instances: Sequence[LabeledInstance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            record = {
                "item_id": inst.item_id,
                "label": inst.label,
                "task": inst.provenance.task,
                "rule": inst.provenance.rule,
                "parameter": inst.provenance.parameter,
                "threshold_value": inst.provenance.threshold_value,
            }
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n")


def read_labels(path: str) -> list[LabeledInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            rule = LabelRule(
                task=record["task"],
                rule=record["rule"],
                parameter=record["parameter"],
                threshold_value=record["threshold_value"],
            )
            out.append(LabeledInstance(record["item_id"], int(record["label"]), rule))
    return out


def apply_rule(
    items: Sequence[Article] | Sequence[TweetSeries], rule: LabelRule
) -> list[LabeledInstance]:
    """Re-derive labels for a corpus from a provenance snapshot (or fit a fresh rule)."""
    if rule.rule == "passthrough":
        return passthrough_labels(items)
    if rule.rule == "median_split":
        if rule.threshold_value is not None:
            return [
                LabeledInstance(s.id, 1 if s.total_likes() > rule.threshold_value else 0, rule)
                for s in items  # type: ignore[union-attr]
            ]
        return median_split_labels(list(items))  # type: ignore[arg-type]
    if rule.rule == "percentile_threshold":
        articles = list(items)
        if rule.threshold_value is not None:
            return label_by_threshold(articles, rule.threshold_value, rule.task, rule.parameter)  # type: ignore[arg-type]
        if rule.parameter is None:
            raise ValidationError("percentile_threshold rule needs a percentile parameter")
        return percentile_labels(articles, rule.parameter, rule.task)  # type: ignore[arg-type]
    raise ValidationError(f"unknown label rule {rule.rule!r}")
