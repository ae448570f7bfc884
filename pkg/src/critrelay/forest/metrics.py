"""Confusion counts with Recall and Precision."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def recall_exact(self) -> Fraction | None:
        pos = self.tp + self.fn
        return Fraction(self.tp, pos) if pos else None

    @property
    def precision_exact(self) -> Fraction | None:
        pred = self.tp + self.fp
        return Fraction(self.tp, pred) if pred else None

    @property
    def recall(self) -> float | None:
        """TP / (TP + FN); None when there are no positive cases."""
        r = self.recall_exact
        return None if r is None else float(r)

    @property
    def precision(self) -> float | None:
        """TP / (TP + FP); None when nothing was predicted positive."""
        p = self.precision_exact
        return None if p is None else float(p)

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.fp + other.fp,
                       self.fn + other.fn, self.tn + other.tn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "recall": _na(self.recall), "precision": _na(self.precision)}


def _na(x):
    return "n/a" if x is None else x


def evaluate(preds, labels) -> Metrics:
    preds = np.asarray(preds).astype(int).ravel()
    labels = np.asarray(labels).astype(int).ravel()
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions, {labels.size} labels")
    return Metrics(
        tp=int(np.count_nonzero((preds == 1) & (labels == 1))),
        fp=int(np.count_nonzero((preds == 1) & (labels == 0))),
        fn=int(np.count_nonzero((preds == 0) & (labels == 1))),
        tn=int(np.count_nonzero((preds == 0) & (labels == 0))),
    )
