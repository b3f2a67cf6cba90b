"""Classical baselines sharing the neural models' text-embedding inputs.

The stratified dummy samples predictions from the training class prior (its
expected F1 equals the positive prevalence); logistic regression and the
random forest wrap scikit-learn behind the uniform fit/predict surface and
return probability scores for ranking metrics.
"""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError


def classical_baseline_fit_predict(
    kind: str,
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit one classical baseline and score a test set.

    Returns (scores, labels). Dummy scores are the sampled 0/1 predictions
    themselves; with ties counted 1/2 that pins ROC-AUC near 0.5.
    """
    train_y = np.asarray(train_y, dtype=np.int64)
    if train_y.size == 0:
        raise ValidationError("classical baselines need non-empty training data")

    if kind == "dummy_stratified":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0]))
        prior = float(train_y.mean())
        labels = (rng.random(len(test_x)) < prior).astype(np.int64)
        return labels.astype(np.float64), labels

    if len(np.unique(train_y)) < 2:
        raise ValidationError(f"{kind} baseline needs both classes in the training data")

    if kind == "linear":
        from sklearn.linear_model import LogisticRegression

        clf = LogisticRegression(max_iter=2000)
        clf.fit(train_x, train_y)
        scores = clf.predict_proba(test_x)[:, 1]
        return scores, (scores >= 0.5).astype(np.int64)

    if kind == "tree_ensemble":
        from sklearn.ensemble import RandomForestClassifier

        clf = RandomForestClassifier(n_estimators=100, random_state=seed, n_jobs=1)
        clf.fit(train_x, train_y)
        scores = clf.predict_proba(test_x)[:, 1]
        return scores, (scores >= 0.5).astype(np.int64)

    raise ValidationError(f"unknown classical baseline {kind!r}")
