"""Classification metrics and probability calibration.

Accuracy, per-class/macro F1, macro one-vs-rest AUROC and AUPRC, and a
per-class Platt calibrator. AUROC uses tie-averaged ranks, AUPRC uses the
step-wise (non-interpolated) area, both matching their brute-force
definitions exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    n: int
    n_classes: int
    accuracy: float
    per_class_f1: list
    macro_f1: float
    counts: list  # gold count per class
    auroc: float | None = None
    per_class_auroc: dict = field(default_factory=dict)
    auroc_skipped: list = field(default_factory=list)
    auprc: float | None = None
    per_class_auprc: dict = field(default_factory=dict)
    log_loss: float | None = None


def confusion_matrix(preds, golds, n_classes: int) -> np.ndarray:
    preds = np.asarray(preds, dtype=int)
    golds = np.asarray(golds, dtype=int)
    if preds.shape != golds.shape or preds.ndim != 1:
        raise MetricError("preds and golds must be 1-d arrays of equal length")
    if preds.size == 0:
        raise MetricError("cannot score an empty prediction set")
    if (preds < 0).any() or (preds >= n_classes).any() or (golds < 0).any() or (golds >= n_classes).any():
        raise MetricError("label outside [0, n_classes)")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (golds, preds), 1)
    return cm


def confusion_and_f1(preds, golds, n_classes: int) -> dict:
    """Accuracy plus per-class and macro F1 (a class with zero precision
    and recall contributes F1 = 0)."""
    cm = confusion_matrix(preds, golds, n_classes)
    n = int(cm.sum())
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0).astype(float)
    gold_tot = cm.sum(axis=1).astype(float)
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        denom = pred_tot[c] + gold_tot[c]
        if denom > 0:
            f1[c] = 2.0 * tp[c] / denom
    return {
        "n": n,
        "accuracy": float(tp.sum() / n),
        "per_class_f1": f1.tolist(),
        "macro_f1": float(f1.mean()),
        "counts": gold_tot.astype(int).tolist(),
        "confusion": cm,
    }


def mc_macro_f1(prevalence: float, n_classes: int) -> float:
    """Closed-form macro F1 of the majority-class predictor when the
    majority class has the given prevalence."""
    return (2.0 * prevalence / (1.0 + prevalence)) / n_classes


def _binary_auroc(scores: np.ndarray, pos: np.ndarray) -> float:
    """Tie-aware rank formulation; equals the pairwise probability that a
    positive outscores a negative, ties counting one half."""
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(pos.size, dtype=float)
    i = 0
    while i < pos.size:
        j = i
        while j + 1 < pos.size and s[j + 1] == s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc(scores, golds, n_classes: int) -> dict:
    """Macro one-vs-rest AUROC. Classes without both a positive and a
    negative example are skipped and reported; no evaluable class is an
    error."""
    scores = np.asarray(scores, dtype=float)
    golds = np.asarray(golds, dtype=int)
    if scores.shape != (golds.size, n_classes):
        raise MetricError(f"scores must have shape (n, {n_classes})")
    per_class = {}
    skipped = []
    for c in range(n_classes):
        pos = golds == c
        if not pos.any() or pos.all():
            skipped.append(c)
            continue
        per_class[c] = _binary_auroc(scores[:, c], pos)
    if not per_class:
        raise MetricError("no class has both positive and negative examples")
    macro = float(np.mean(list(per_class.values())))
    return {"macro": macro, "per_class": per_class, "skipped": skipped}


def _binary_auprc(scores: np.ndarray, pos: np.ndarray) -> float:
    """Step-wise area under the precision-recall curve over the distinct
    score thresholds, descending. Constant scores give the prevalence."""
    n_pos = int(pos.sum())
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = pos[order]
    area = 0.0
    prev_recall = 0.0
    tp = 0
    total = 0
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        tp += int(p[i:j + 1].sum())
        total += j - i + 1
        recall = tp / n_pos
        precision = tp / total
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return area


def auprc(scores, golds, n_classes: int) -> dict:
    """Macro one-vs-rest AUPRC with the same skip rule as auroc."""
    scores = np.asarray(scores, dtype=float)
    golds = np.asarray(golds, dtype=int)
    if scores.shape != (golds.size, n_classes):
        raise MetricError(f"scores must have shape (n, {n_classes})")
    per_class = {}
    skipped = []
    for c in range(n_classes):
        pos = golds == c
        if not pos.any() or pos.all():
            skipped.append(c)
            continue
        per_class[c] = _binary_auprc(scores[:, c], pos)
    if not per_class:
        raise MetricError("no class has both positive and negative examples")
    macro = float(np.mean(list(per_class.values())))
    return {"macro": macro, "per_class": per_class, "skipped": skipped}


def log_loss(scores, golds, eps: float = 1e-12) -> float:
    """Mean negative log probability of the gold class."""
    scores = np.asarray(scores, dtype=float)
    golds = np.asarray(golds, dtype=int)
    p = np.clip(scores[np.arange(golds.size), golds], eps, None)
    return float(-np.log(p).mean())


def evaluate(scores, golds, n_classes: int) -> MetricReport:
    """Full report from probability-like scores: argmax metrics plus the
    ranking metrics and log loss."""
    scores = np.asarray(scores, dtype=float)
    golds = np.asarray(golds, dtype=int)
    base = confusion_and_f1(np.argmax(scores, axis=1), golds, n_classes)
    roc = auroc(scores, golds, n_classes)
    prc = auprc(scores, golds, n_classes)
    return MetricReport(
        n=base["n"], n_classes=n_classes,
        accuracy=base["accuracy"], per_class_f1=base["per_class_f1"],
        macro_f1=base["macro_f1"], counts=base["counts"],
        auroc=roc["macro"], per_class_auroc=roc["per_class"], auroc_skipped=roc["skipped"],
        auprc=prc["macro"], per_class_auprc=prc["per_class"],
        log_loss=log_loss(scores, golds),
    )


# --- Platt calibration ---

_LOGIT_EPS = 1e-12


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, _LOGIT_EPS, 1.0 - _LOGIT_EPS)
    return np.log(p) - np.log1p(-p)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class PlattCalibrator:
    """Per-class sigmoid recalibration sigma(a * logit(s) + b) of
    probability scores. (a, b) = (1, 0) is the identity map, so a
    degenerate class (single label value in validation) keeps its scores."""

    coef: list  # [(a, b)] per class
    identity: list  # per-class flag: left uncalibrated

    def class_scores(self, scores) -> np.ndarray:
        """Calibrated per-class scores, before renormalization. For a
        positive fitted slope this is a strictly monotone map of each
        class's scores, so per-class rankings (hence AUROC) are unchanged."""
        scores = np.asarray(scores, dtype=float)
        out = np.empty_like(scores)
        for c, (a, b) in enumerate(self.coef):
            if self.identity[c]:
                out[:, c] = scores[:, c]
            else:
                out[:, c] = _sigmoid(a * _logit(scores[:, c]) + b)
        return out

    def probabilities(self, scores) -> np.ndarray:
        """Calibrated scores renormalized to sum 1 per row."""
        out = self.class_scores(scores)
        tot = out.sum(axis=1, keepdims=True)
        flat = tot[:, 0] <= 0
        if flat.any():
            out[flat] = 1.0 / out.shape[1]
            tot[flat] = 1.0
        return out / tot


def _fit_platt_binary(z: np.ndarray, y: np.ndarray,
                      max_iters: int = 200, grad_tol: float = 1e-9) -> tuple:
    """Minimize mean logistic loss of sigma(a z + b) by gradient descent
    with backtracking line search, starting at the identity (1, 0)."""
    a, b = 1.0, 0.0
    n = z.size

    def loss_grad(a, b):
        t = a * z + b
        p = _sigmoid(t)
        # stable mean log loss: log(1+exp(-t)) for y=1, log(1+exp(t)) for y=0
        ll = np.where(y, np.logaddexp(0.0, -t), np.logaddexp(0.0, t)).mean()
        r = p - y
        return float(ll), float((r * z).mean()), float(r.mean())

    loss, ga, gb = loss_grad(a, b)
    step = 1.0
    for _ in range(max_iters):
        g2 = ga * ga + gb * gb
        if np.sqrt(g2) < grad_tol:
            break
        step = min(step * 2.0, 1e4)
        for _ in range(80):
            a2 = a - step * ga
            b2 = b - step * gb
            loss2, ga2, gb2 = loss_grad(a2, b2)
            if loss2 <= loss - 1e-4 * step * g2:
                break
            step *= 0.5
        a, b, loss, ga, gb = a2, b2, loss2, ga2, gb2
    return a, b


def fit_platt(val_scores, val_golds, n_classes: int) -> PlattCalibrator:
    """Fit one sigmoid per class on validation scores. A class whose
    validation labels are all-positive or all-negative cannot be fit and
    falls back to the identity (with a warning)."""
    scores = np.asarray(val_scores, dtype=float)
    golds = np.asarray(val_golds, dtype=int)
    if scores.shape != (golds.size, n_classes):
        raise MetricError(f"scores must have shape (n, {n_classes})")
    if golds.size == 0:
        raise MetricError("empty validation set")
    coef = []
    identity = []
    for c in range(n_classes):
        y = (golds == c).astype(float)
        if y.min() == y.max():
            warnings.warn(f"class {c} is degenerate in validation; leaving it uncalibrated")
            coef.append((1.0, 0.0))
            identity.append(True)
            continue
        a, b = _fit_platt_binary(_logit(scores[:, c]), y)
        coef.append((float(a), float(b)))
        identity.append(False)
    return PlattCalibrator(coef=coef, identity=identity)


def validation_split(transcripts, fraction: float = 0.1) -> tuple:
    """Split off the last `fraction` of transcripts (stable order) for
    calibration; returns (rest, validation). At least one transcript goes
    to validation when there are two or more."""
    n = len(transcripts)
    if n == 0:
        raise MetricError("empty corpus")
    k = max(1, int(round(n * fraction))) if n > 1 else 0
    return list(transcripts[:n - k]), list(transcripts[n - k:])
