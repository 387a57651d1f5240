"""Run configuration shared by the command-line pipeline and recorded in model metadata."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .embedding import EmbeddingKind
from .indexing import Objective, _log_exact
from .model import CombinerKind
from .solver import Loss
from .trainer import NegativeKind


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # vectorizer
    min_df: int = 1
    # indexing
    embedding: str = EmbeddingKind.PIFA.value
    spectral_dim: int = 16
    alpha: float = 0.5
    B: int = 8
    K: int | None = None
    max_leaf_size: int = 100
    objective: str = Objective.SKMEANS.value
    balanced: bool = True
    kmeans_iter: int = 20
    # training
    negatives: str = NegativeKind.TFN_PLUS_MAN.value
    loss: str = Loss.SQUARED_HINGE.value
    lam: float = 1.0
    tol: float = 0.1
    max_iter: int = 100
    eps: float = 0.1
    train_beam: int | None = None
    # inference
    combiner: str = CombinerKind.SIGMOID_PRODUCT.value
    beam: int = 10
    topk: int = 10
    seed: int = 0

    def validate(self, n_labels: int | None = None) -> "RunConfig":
        """Raise ConfigError on any inconsistent setting; returns self."""
        try:
            for name, enum_cls in (("embedding", EmbeddingKind), ("objective", Objective),
                                   ("negatives", NegativeKind), ("loss", Loss), ("combiner", CombinerKind)):
                setattr(self, name, enum_cls(getattr(self, name)).value)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.min_df < 1:
            raise ConfigError("min_df must be >= 1")
        if self.spectral_dim < 1:
            raise ConfigError("spectral_dim must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.B < 2:
            raise ConfigError("B must be >= 2")
        if self.K is not None:
            try:
                _log_exact(self.K, self.B)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            if n_labels is not None and self.K > n_labels:
                raise ConfigError(f"K={self.K} exceeds the number of labels L={n_labels}")
        if self.max_leaf_size < 1 or self.kmeans_iter < 1:
            raise ConfigError("max_leaf_size and kmeans_iter must be >= 1")
        if not self.lam > 0 or not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("lam and tol must be > 0, max_iter >= 1")
        if self.eps < 0:
            raise ConfigError("eps must be >= 0")
        if self.beam < 1 or self.topk < 1 or (self.train_beam is not None and self.train_beam < 1):
            raise ConfigError("beam sizes and topk must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        return self

    @property
    def effective_train_beam(self) -> int:
        return self.beam if self.train_beam is None else self.train_beam

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})
