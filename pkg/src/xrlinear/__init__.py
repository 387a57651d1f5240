"""Tree-based linear models for extreme multilabel ranking."""

from .config import ConfigError, RunConfig
from .datasets import DatasetParseError, read_dataset, read_raw_text, write_dataset
from .embedding import (
    EmbeddingKind,
    LabelEmbedding,
    build_embedding,
    embed_pifa,
    embed_pifa_lf,
    embed_pii,
    embed_spectral,
)
from .indexing import ClusterAssignment, ClusterChain, Objective, build_cluster_chain, kmeans_partition
from .inference import BeamStats, Prediction, batch_predict, beam_search, combine, ensemble_average
from .metrics import MetricReport, evaluate, precision_at_k, recall_at_k
from .model import CombinerKind, LayerModel, XrLinearModel
from .solver import BinaryProblem, Loss, SolverConfig, SolveResult, solve_binary
from .sparse import (
    CscMatrix,
    CsrMatrix,
    DoublySparseMatrix,
    ShapeError,
    SparseVec,
    binarize_matmul,
    hard_threshold,
    spmv_doubly_sparse,
    to_doubly_sparse,
)
from .text import TfidfModel, fit_tfidf, tokenize, transform
from .trainer import (
    NegativeKind,
    NegativeSamplingScheme,
    build_layer_labels,
    select_negatives,
    train_layer,
    train_xr_linear,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
