"""Brute-force metric oracles kept independent of the library implementation."""
import numpy as np


def metrics_oracle(pred, scores, true):
    """Six metrics from explicit loops: confusion counts plus pairwise AUC.

    Undefined ratios are 0 (mirroring the production degenerate-flag
    convention); AUC counts score ties between a positive and a negative as
    one half.
    """
    pred = list(int(p) for p in pred)
    scores = list(float(s) for s in scores)
    true = list(int(t) for t in true)
    tp = fp = tn = fn = 0
    for p, t in zip(pred, true):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 0:
            tn += 1
        else:
            fn += 1
    n = len(true)
    accuracy = (tp + tn) / n
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    tnr = tn / (tn + fp) if (tn + fp) else 0.0
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0

    pos = [s for s, t in zip(scores, true) if t == 1]
    neg = [s for s, t in zip(scores, true) if t == 0]
    if not pos or not neg:
        auc = 0.0
    else:
        wins = 0.0
        for sp in pos:
            for sn in neg:
                if sp > sn:
                    wins += 1.0
                elif sp == sn:
                    wins += 0.5
        auc = wins / (len(pos) * len(neg))
    return {
        "accuracy": accuracy,
        "balanced_accuracy": (recall + tnr) / 2.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "roc_auc": auc,
    }


def random_prediction_set(rng, max_size=20):
    """A random labeled prediction set with deliberate score ties."""
    n = int(rng.integers(1, max_size + 1))
    true = rng.integers(0, 2, size=n)
    pred = rng.integers(0, 2, size=n)
    # quantized scores force plenty of exact ties
    scores = np.round(rng.random(n) * 4) / 4.0
    return pred, scores, true
