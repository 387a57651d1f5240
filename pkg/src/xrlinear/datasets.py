"""Text dataset format shared with the public extreme-classification repository.

Header line ``n d L``; then one line per instance: comma-separated 0-based label
ids, then space-separated ``feature:value`` pairs. An instance without labels
starts directly with its first feature pair.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .sparse import CsrMatrix


class DatasetParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = str(path)
        self.lineno = lineno


def read_dataset(path) -> tuple[CsrMatrix, CsrMatrix]:
    """Parse a dataset file into (X n x d, Y n x L)."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetParseError(path, 1, "missing header")
    head = lines[0].split()
    if len(head) != 3 or not all(h.isdigit() for h in head):
        raise DatasetParseError(path, 1, "header must be three non-negative integers 'n d L'")
    n, d, L = (int(h) for h in head)
    body = lines[1:]
    if len(body) != n:
        raise DatasetParseError(path, len(lines), f"header announces {n} instances, found {len(body)}")
    x_ptr, x_idx, x_val = [0], [], []
    y_ptr, y_idx = [0], []
    for lineno, line in enumerate(body, 2):
        tokens = line.rstrip().split(" ")
        labels: list[int] = []
        if tokens and tokens[0] and ":" not in tokens[0]:
            try:
                labels = [int(t) for t in tokens[0].split(",")]
            except ValueError:
                raise DatasetParseError(path, lineno, f"bad label list {tokens[0]!r}") from None
            tokens = tokens[1:]
        elif tokens and tokens[0] == "":
            tokens = tokens[1:]
        if tokens == [""]:
            tokens = []
        if len(set(labels)) != len(labels) or any(not 0 <= v < L for v in labels):
            raise DatasetParseError(path, lineno, "label ids must be distinct and in [0, L)")
        feats: dict[int, float] = {}
        for tok in tokens:
            if not tok:
                raise DatasetParseError(path, lineno, "empty token (double space?)")
            i, sep, v = tok.partition(":")
            try:
                fi, fv = int(i), float(v)
            except ValueError:
                raise DatasetParseError(path, lineno, f"bad feature pair {tok!r}") from None
            if not sep or not 0 <= fi < d:
                raise DatasetParseError(path, lineno, f"feature id {i} outside [0, {d})")
            if not math.isfinite(fv):
                raise DatasetParseError(path, lineno, f"non-finite value {v!r}")
            if fi in feats:
                raise DatasetParseError(path, lineno, f"duplicate feature id {fi}")
            feats[fi] = fv
        for fi in sorted(feats):
            if feats[fi] != 0.0:
                x_idx.append(fi)
                x_val.append(feats[fi])
        x_ptr.append(len(x_idx))
        y_idx.extend(sorted(labels))
        y_ptr.append(len(y_idx))
    X = CsrMatrix((n, d), x_ptr, np.array(x_idx, dtype=np.int64), x_val)
    Y = CsrMatrix((n, L), y_ptr, np.array(y_idx, dtype=np.int64), np.ones(len(y_idx)))
    return X, Y


def write_dataset(path, X: CsrMatrix, Y: CsrMatrix) -> None:
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y have different row counts")
    out = [f"{X.shape[0]} {X.shape[1]} {Y.shape[1]}"]
    for i in range(X.shape[0]):
        labels = ",".join(str(v) for v in Y.row_indices(i).tolist())
        a, b = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{j}:{v!r}" for j, v in zip(X.indices[a:b].tolist(), X.data[a:b].tolist()))
        out.append(" ".join(p for p in (labels, feats) if p) if labels else " " + feats if feats else "")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_raw_text(path) -> tuple[list[list[int]], list[str]]:
    """Lines of ``comma-separated labels<TAB>text``."""
    labels, texts = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        head, sep, text = line.partition("\t")
        if not sep:
            raise DatasetParseError(path, lineno, "expected 'labels<TAB>text'")
        try:
            labels.append([int(t) for t in head.split(",")] if head else [])
        except ValueError:
            raise DatasetParseError(path, lineno, f"bad label list {head!r}") from None
        texts.append(text)
    return labels, texts


def label_rows(Y: CsrMatrix) -> list[list[int]]:
    return [Y.row_indices(i).tolist() for i in range(Y.shape[0])]
