"""In-memory XR-LINEAR model: per-layer rankers plus their indexing matrices."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sparse import (
    CscMatrix,
    DoublySparseMatrix,
    assignment_of,
    load_matrix,
    save_matrix,
    to_doubly_sparse,
)


class CombinerKind(str, enum.Enum):
    RANKER_ONLY = "ranker_only"
    SIGMOID_PRODUCT = "sigmoid_product"


class LayerModel:
    """Ranker W (d x K_t) of one layer, grouped into one doubly-sparse block per parent cluster."""

    def __init__(self, t: int, W: CscMatrix, C: CscMatrix):
        if W.shape[1] != C.shape[0]:
            raise ValueError(f"layer {t}: W has {W.shape[1]} columns but C has {C.shape[0]} rows")
        self.t = t
        self.W = W
        self.C = C
        self.parent = assignment_of(C)
        n_parents = C.shape[1]
        self.child_ids = np.argsort(self.parent, kind="stable").astype(np.int64)
        self.child_ptr = np.zeros(n_parents + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.parent, minlength=n_parents), out=self.child_ptr[1:])
        Wp = W.to_scipy()[:, self.child_ids].tocsc()
        self.blocks: list[DoublySparseMatrix] = [
            to_doubly_sparse(CscMatrix.from_scipy(Wp[:, self.child_ptr[k] : self.child_ptr[k + 1]]))
            for k in range(n_parents)
        ]
        self._pack()

    @property
    def n_nodes(self) -> int:
        return self.W.shape[1]

    @property
    def n_parents(self) -> int:
        return self.C.shape[1]

    def children(self, k: int) -> np.ndarray:
        return self.child_ids[self.child_ptr[k] : self.child_ptr[k + 1]]

    def _pack(self):
        """Concatenate the blocks' hash tables and row payloads for the inference kernel."""
        blocks = self.blocks
        nb = len(blocks)
        self.tab_ptr = np.zeros(nb + 1, dtype=np.int64)
        self.row_off = np.zeros(nb + 1, dtype=np.int64)
        self.nnz_off = np.zeros(nb + 1, dtype=np.int64)
        for k, b in enumerate(blocks):
            self.tab_ptr[k + 1] = self.tab_ptr[k] + b._keys.size
            self.row_off[k + 1] = self.row_off[k] + b.row_ptr.size
            self.nnz_off[k + 1] = self.nnz_off[k] + b.nnz
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.empty(0, dt)  # noqa: E731
        self.keys = cat([b._keys for b in blocks], np.int64)
        self.slots = cat([b._slots for b in blocks], np.int64)
        self.row_ptr = cat([b.row_ptr for b in blocks], np.int64)
        self.cols = cat([b.row_cols for b in blocks], np.int64)
        self.vals = cat([b.row_vals for b in blocks], np.float64)

    def memory_entries(self) -> dict[str, int]:
        raw = sum(b.nnz for b in self.blocks)
        return {"raw_nnz": raw, "with_overhead": sum(b.memory_entries()["with_overhead"] for b in self.blocks)}


@dataclass
class XrLinearModel:
    layers: list[LayerModel]
    combiner: CombinerKind = CombinerKind.SIGMOID_PRODUCT
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.combiner = CombinerKind(self.combiner)
        if not self.layers:
            raise ValueError("model has no layers")
        if self.layers[0].n_parents != 1:
            raise ValueError("first layer must hang off a single root")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.n_parents != a.n_nodes:
                raise ValueError(f"layer {b.t} expects {b.n_parents} parents, layer {a.t} has {a.n_nodes} nodes")
        d = {layer.W.shape[0] for layer in self.layers}
        if len(d) != 1:
            raise ValueError("layers disagree on feature dimension")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_features(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def n_labels(self) -> int:
        return self.layers[-1].n_nodes

    @property
    def sizes(self) -> list[int]:
        return [layer.n_nodes for layer in self.layers]

    def truncated(self, depth: int) -> "XrLinearModel":
        """The partial model made of layers 1..depth (the matcher for layer depth + 1)."""
        return XrLinearModel(self.layers[:depth], self.combiner, dict(self.meta))

    def with_combiner(self, combiner: CombinerKind | str) -> "XrLinearModel":
        return XrLinearModel(self.layers, CombinerKind(combiner), dict(self.meta))

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for layer in self.layers:
            save_matrix(d / f"C_{layer.t}.mat", layer.C)
            save_matrix(d / f"W_{layer.t}.mat", layer.W)
        meta = dict(self.meta)
        meta.update(D=self.depth, K=self.sizes, combiner=self.combiner.value, n_features=self.n_features)
        (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "XrLinearModel":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        layers = []
        for t in range(1, meta["D"] + 1):
            C = load_matrix(d / f"C_{t}.mat")
            W = load_matrix(d / f"W_{t}.mat")
            C = C if isinstance(C, CscMatrix) else C.to_csc()
            W = W if isinstance(W, CscMatrix) else W.to_csc()
            layers.append(LayerModel(t, W, C))
        model = cls(layers, CombinerKind(meta["combiner"]), meta)
        if model.sizes != meta["K"]:
            raise ValueError("model manifest does not match stored matrices")
        return model

