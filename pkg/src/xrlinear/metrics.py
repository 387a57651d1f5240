"""Precision@k and Recall@k."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


def _top_labels(pred, k: int) -> list[int]:
    labels = pred.labels if hasattr(pred, "labels") else pred
    return [int(v) for v in list(labels)[:k]]


def _hits(pred, truth, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    t = set(int(v) for v in truth)
    return sum(1 for v in _top_labels(pred, k) if v in t)


def precision_at_k(pred, truth: Iterable[int], k: int) -> float:
    """Hits among the top k divided by k; missing predictions count as misses."""
    return _hits(pred, truth, k) / k


def recall_at_k(pred, truth: Iterable[int], k: int) -> float:
    """Hits among the top k divided by |truth|; 0 for an empty truth set."""
    truth = set(int(v) for v in truth)
    if not truth:
        return 0.0
    return _hits(pred, truth, k) / len(truth)


@dataclass
class MetricReport:
    ks: list[int]
    precision: dict[int, float]
    recall: dict[int, float]
    n_test: int
    n_skipped: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = {
            "n_test": self.n_test,
            "n_skipped": self.n_skipped,
            "precision": {str(k): self.precision[k] for k in self.ks},
            "recall": {str(k): self.recall[k] for k in self.ks},
        }
        return json.dumps(body, indent=2, sort_keys=True)

    def to_table(self) -> str:
        lines = [f"{'k':>4}  {'Prec@k':>8}  {'Recall@k':>8}"]
        for k in self.ks:
            lines.append(f"{k:>4}  {100 * self.precision[k]:>8.2f}  {100 * self.recall[k]:>8.2f}")
        lines.append(f"n_test={self.n_test}" + (f" (skipped {self.n_skipped} empty)" if self.n_skipped else ""))
        return "\n".join(lines)


def evaluate(preds: Sequence, truths: Sequence[Iterable[int]], ks: Sequence[int] = (1, 3, 5),
             skip_empty: bool = False) -> MetricReport:
    if len(preds) != len(truths):
        raise ValueError(f"{len(preds)} predictions for {len(truths)} truth rows")
    ks = list(ks)
    p = {k: [] for k in ks}
    r = {k: [] for k in ks}
    skipped = 0
    for pred, truth in zip(preds, truths):
        truth = list(truth)
        if skip_empty and not truth:
            skipped += 1
            continue
        for k in ks:
            p[k].append(precision_at_k(pred, truth, k))
            r[k].append(recall_at_k(pred, truth, k))
    n = len(preds) - skipped
    mean = lambda xs: float(np.mean(xs)) if xs else 0.0  # noqa: E731
    return MetricReport(ks, {k: mean(p[k]) for k in ks}, {k: mean(r[k]) for k in ks}, n, skipped)
