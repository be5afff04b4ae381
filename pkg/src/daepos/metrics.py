"""Classification metrics and rank correlations."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true labels, columns are predictions."""

    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    undefined: np.ndarray  # per class: True if any ratio had a zero denominator
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self, names: Optional[Sequence[str]] = None) -> dict:
        names = list(names) if names is not None else [str(i) for i in range(len(self.f1))]
        return {
            "accuracy": float(self.accuracy),
            "macro": {
                "precision": float(self.macro_precision),
                "recall": float(self.macro_recall),
                "f1": float(self.macro_f1),
            },
            "per_class": [
                {
                    "class": n,
                    "precision": float(p),
                    "recall": float(r),
                    "f1": float(f),
                    "support": int(s),
                    "undefined": bool(u),
                }
                for n, p, r, f, s, u in zip(
                    names, self.precision, self.recall, self.f1, self.support, self.undefined
                )
            ],
        }

    def to_json(self, names=None) -> str:
        return json.dumps(self.to_dict(names), indent=2) + "\n"

    def to_csv(self, names=None) -> str:
        d = self.to_dict(names)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1", "support", "undefined"])
        for row in d["per_class"]:
            w.writerow([row["class"], repr(row["precision"]), repr(row["recall"]),
                        repr(row["f1"]), row["support"], int(row["undefined"])])
        m = d["macro"]
        w.writerow(["macro", repr(m["precision"]), repr(m["recall"]), repr(m["f1"]),
                    int(self.support.sum()), 0])
        return buf.getvalue()


def confusion(true_labels, predicted_labels, n_classes: Optional[int] = None) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted_labels, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {p.size} predicted")
    if n_classes is None:
        n_classes = int(max(t.max(initial=-1), p.max(initial=-1))) + 1
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def _ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bad = den == 0
    return np.where(bad, 0.0, num / np.where(bad, 1, den)), bad


def report(cm: ConfusionMatrix) -> MetricsReport:
    """Per-class and macro precision/recall/F1. Zero denominators give 0 and set ``undefined``."""
    c = np.asarray(cm.counts)
    if c.size == 0 or c.sum() == 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(c).astype(np.float64)
    precision, p_bad = _ratio(tp, c.sum(axis=0))
    recall, r_bad = _ratio(tp, c.sum(axis=1))
    f1, f_bad = _ratio(2 * precision * recall, precision + recall)
    return MetricsReport(
        accuracy=float(tp.sum() / c.sum()),
        precision=precision,
        recall=recall,
        f1=f1,
        support=c.sum(axis=1),
        undefined=p_bad | r_bad | f_bad,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
    )


def accuracy(true_labels, predicted_labels) -> float:
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape != p.shape or t.size == 0:
        raise ValueError("need equal, non-empty label arrays")
    return float(np.mean(t == p))


# ---------------------------------------------------------------------------
# rank correlation


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least two observations")
    return a, b


def spearman(a, b) -> float:
    """Pearson correlation of mid-ranks."""
    a, b = _pair(a, b)
    ra = rankdata(a) - (a.size + 1) / 2.0
    rb = rankdata(b) - (b.size + 1) / 2.0
    den = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if den == 0.0:
        raise ValueError("a rank vector has zero variance; correlation undefined")
    return float(np.clip(float(ra @ rb) / den, -1.0, 1.0))


def _tie_pairs(x: np.ndarray) -> int:
    _, counts = np.unique(x, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_counts_pairwise(a, b, chunk: int = 512) -> tuple[int, int, int, int, int]:
    """``(concordant, discordant, n0, ties_a, ties_b)`` by exhaustive pair counting.

    Quadratic; kept as a cross-check for :func:`kendall_counts`.
    """
    a, b = _pair(a, b)
    n = a.size
    conc = disc = 0
    for start in range(0, n, chunk):
        i = np.arange(start, min(start + chunk, n))
        da = np.sign(a[i, None] - a[None, :])
        db = np.sign(b[i, None] - b[None, :])
        upper = np.arange(n)[None, :] > i[:, None]
        prod = (da * db)[upper]
        conc += int(np.sum(prod > 0))
        disc += int(np.sum(prod < 0))
    return conc, disc, n * (n - 1) // 2, _tie_pairs(a), _tie_pairs(b)


def _strict_inversions(r: np.ndarray) -> int:
    """Number of pairs i < j with r[i] > r[j], for integer ranks in [0, n).

    Bottom-up merge sort, one vectorised pass per level: each element of a
    right block counts the elements of its left partner block that exceed it.
    """
    n = r.size
    x = r.astype(np.int64)
    idx = np.arange(n)
    inv = 0
    width = 1
    while width < n:
        pid = idx // (2 * width)
        right = (idx // width) % 2 == 1
        key = pid * n + x  # blocks of `width` are sorted, so left keys are globally sorted
        left = key[~right]
        rk, rp = key[right], pid[right]
        inv += int(np.sum(np.searchsorted(left, (rp + 1) * n) - np.searchsorted(left, rk, side="right")))
        x = np.sort(key) - pid * n
        width *= 2
    return inv


def kendall_counts(a, b) -> tuple[int, int, int, int, int]:
    """``(concordant, discordant, n0, ties_a, ties_b)`` in O(n log^2 n), exact integers."""
    a, b = _pair(a, b)
    n = a.size
    order = np.lexsort((b, a))
    _, rb = np.unique(b[order], return_inverse=True)
    # after sorting by (a, b) only pairs with a strictly increasing and b strictly decreasing invert
    disc = _strict_inversions(rb.reshape(-1))
    n0 = n * (n - 1) // 2
    ta, tb = _tie_pairs(a), _tie_pairs(b)
    _, joint = np.unique(np.stack([a, b], axis=1), axis=0, return_counts=True)
    tab = int(np.sum(joint * (joint - 1) // 2))
    conc = n0 - ta - tb + tab - disc
    return conc, disc, n0, ta, tb


def kendall(a, b) -> float:
    """Kendall tau-b."""
    conc, disc, n0, ta, tb = kendall_counts(a, b)
    if n0 == ta or n0 == tb:
        raise ValueError("an argument is constant; correlation undefined")
    return (conc - disc) / math.sqrt((n0 - ta) * (n0 - tb))
