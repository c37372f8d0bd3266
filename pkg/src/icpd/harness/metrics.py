from __future__ import annotations

import numpy as np


def accuracy(pred, labels) -> float:
    pred, labels = np.asarray(pred), np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(pred == labels))


def macro_f1(pred, labels) -> float:
    """Unweighted mean of per-class F1 over the classes present in ``labels``.

    A present class that is never predicted scores 0; classes absent from
    ``labels`` are excluded even if predicted.
    """
    pred, labels = np.asarray(pred), np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty evaluation set")
    scores = []
    for c in np.unique(labels):
        tp = np.sum((pred == c) & (labels == c))
        fp = np.sum((pred == c) & (labels != c))
        fn = np.sum((pred != c) & (labels == c))
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores))


def predict(model, X) -> np.ndarray:
    from ..models import forward_with_features

    return forward_with_features(model, X).output.value.argmax(axis=1)


def evaluate_metrics(model, test) -> tuple[float, float]:
    """(accuracy, macro-F1) of ``model`` on a labelled dataset."""
    X, y = test
    if len(X) == 0:
        raise ValueError("empty evaluation set")
    pred = predict(model, X)
    return accuracy(pred, y), macro_f1(pred, y)
