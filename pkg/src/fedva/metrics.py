"""Evaluation metrics for CSMF estimates and individual cause assignments."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import EmptyInput, LengthMismatch, NotASimplex
from .utils import is_simplex


def csmf_accuracy(pi_hat: np.ndarray, pi_true: np.ndarray) -> float:
    """1 - sum|pi_hat - pi_true| / (2 (1 - min pi_true)).

    The complement is the normalized absolute error; the normalizer makes the
    worst possible estimate (all mass on the rarest cause) score exactly 0.
    """
    pi_hat = np.asarray(pi_hat, dtype=np.float64)
    pi_true = np.asarray(pi_true, dtype=np.float64)
    if pi_hat.shape != pi_true.shape:
        raise LengthMismatch("pi_hat and pi_true differ in length")
    if not is_simplex(pi_hat, tol=1e-6):
        raise NotASimplex("pi_hat is not a probability vector")
    if not is_simplex(pi_true, tol=1e-6):
        raise NotASimplex("pi_true is not a probability vector")
    denom = 2.0 * (1.0 - float(pi_true.min()))
    if denom == 0.0:
        raise NotASimplex("pi_true is degenerate (single-cause); accuracy undefined")
    acc = 1.0 - float(np.abs(pi_hat - pi_true).sum()) / denom
    return min(1.0, max(0.0, acc))


def top_cause_accuracy(pred_top: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of deaths whose predicted top cause matches the true cause."""
    pred_top = np.asarray(pred_top)
    truth = np.asarray(truth)
    if pred_top.shape != truth.shape:
        raise LengthMismatch("prediction and truth vectors differ in length")
    if pred_top.size == 0:
        raise EmptyInput("no deaths to score")
    return float(np.mean(pred_top == truth))


def balanced_accuracy(pred_top: np.ndarray, truth: np.ndarray, C: int) -> float:
    """Mean per-cause recall over the causes that actually occur in truth.

    Causes with no true deaths are excluded from the average (their recall
    is 0/0). Recalls are averaged in exact rational arithmetic and rounded
    once, so with equal per-cause counts the result matches
    top_cause_accuracy bit for bit.
    """
    pred_top = np.asarray(pred_top)
    truth = np.asarray(truth)
    if pred_top.shape != truth.shape:
        raise LengthMismatch("prediction and truth vectors differ in length")
    if pred_top.size == 0:
        raise EmptyInput("no deaths to score")
    if truth.min() < 0 or truth.max() >= C or pred_top.min() < 0 or pred_top.max() >= C:
        raise LengthMismatch(f"cause indices must lie in [0, {C})")
    recalls = []
    for c in range(C):
        mask = truth == c
        n_c = int(mask.sum())
        if n_c:
            recalls.append(Fraction(int(np.sum(pred_top[mask] == c)), n_c))
    return float(sum(recalls) / len(recalls))
