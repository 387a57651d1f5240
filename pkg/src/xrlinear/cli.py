"""Command-line pipeline: vectorize, cluster, train, predict, eval.

Failures print one JSON object on stderr, e.g.
``{"error": "DatasetParseError", "message": "...", "line": 7}``, and exit nonzero
(2 for invalid arguments or configuration, 3 for unreadable input, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .config import ConfigError, RunConfig
from .datasets import DatasetParseError, label_rows, read_dataset, read_raw_text, write_dataset
from .embedding import build_embedding
from .indexing import ClusterChain, build_cluster_chain, default_leaf_count
from .inference import batch_predict, format_prediction, parse_prediction
from .metrics import evaluate
from .model import XrLinearModel
from .solver import SolverConfig
from .sparse import CsrMatrix
from .text import TfidfModel, fit_tfidf
from .trainer import NegativeSamplingScheme, train_xr_linear

log = logging.getLogger("xrlinear")

VECTORIZER_FILE = "vectorizer.tsv"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads(arg: int | None) -> int:
    if arg is not None:
        if arg < 1:
            raise UsageError("--threads must be >= 1")
        return arg
    env = os.environ.get("XRL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"XRL_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _out(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _is_raw_text(path) -> bool:
    with open(path, encoding="utf-8") as f:
        return "\t" in f.readline()


def _labels_matrix(rows: list[list[int]], n_labels: int | None, path) -> CsrMatrix:
    L = n_labels if n_labels is not None else 1 + max((v for r in rows for v in r), default=-1)
    for i, r in enumerate(rows):
        if len(set(r)) != len(r) or any(not 0 <= v < L for v in r):
            raise DatasetParseError(path, i + 1, f"label ids must be distinct and in [0, {L})")
    return CsrMatrix.from_scipy(_indicator(rows, L))


def _indicator(rows, L):
    indptr = np.cumsum([0] + [len(r) for r in rows])
    idx = np.array([v for r in rows for v in sorted(r)], dtype=np.int64)
    return sp.csr_matrix((np.ones(idx.size), idx, indptr), shape=(len(rows), L))


def _config(args, **extra) -> RunConfig:
    cfg = RunConfig()
    for k, v in vars(args).items():
        if hasattr(cfg, k) and v is not None:
            setattr(cfg, k, v)
    for k, v in extra.items():
        setattr(cfg, k, v)
    return cfg


def _build_chain(X, Y, cfg: RunConfig, threads: int, label_features=None) -> ClusterChain:
    L = Y.shape[1]
    cfg.validate(L)
    K = cfg.K if cfg.K is not None else default_leaf_count(L, cfg.B, cfg.max_leaf_size)
    kw = {"k": cfg.spectral_dim, "seed": cfg.seed, "alpha": cfg.alpha}
    if label_features is not None:
        kw["label_features"] = label_features
    Z = build_embedding(cfg.embedding, X, Y, **kw)
    log.info("clustering L=%d labels into K=%d leaves (B=%d)", L, K, cfg.B)
    return build_cluster_chain(Z, cfg.B, K, cfg.seed, objective=cfg.objective, balanced=cfg.balanced,
                               max_iter=cfg.kmeans_iter, n_jobs=threads)


def cmd_vectorize(args) -> int:
    cfg = _config(args).validate()
    if (args.vectorizer is None) == (args.save_vectorizer is None):
        raise UsageError("give exactly one of --vectorizer (apply) or --save-vectorizer (fit)")
    labels, texts = read_raw_text(args.input)
    if args.save_vectorizer:
        vec = fit_tfidf(texts, cfg.min_df)
        vec.save(_out(args.save_vectorizer))
    else:
        vec = TfidfModel.load(args.vectorizer)
    X = vec.transform_many(texts)
    Y = _labels_matrix(labels, args.n_labels, args.input)
    write_dataset(_out(args.output), X, Y)
    return 0


def cmd_cluster(args) -> int:
    X, Y = read_dataset(args.data)
    cfg = _config(args)
    lf = read_dataset(args.label_features)[0] if args.label_features else None
    chain = _build_chain(X, Y, cfg, _threads(args.threads), lf)
    chain.save(args.output)
    return 0


def cmd_train(args) -> int:
    X, Y = read_dataset(args.data)
    cfg = _config(args).validate(Y.shape[1])
    threads = _threads(args.threads)
    if args.chain:
        chain = ClusterChain.load(args.chain)
        if chain.n_labels != Y.shape[1]:
            raise ConfigError(f"chain indexes {chain.n_labels} labels, data has {Y.shape[1]}")
        cfg.B = chain.branching or cfg.B
        cfg.K = chain.sizes[-2] if chain.depth > 1 else 1
    else:
        chain = _build_chain(X, Y, cfg, threads)
        cfg.K = chain.sizes[-2] if chain.depth > 1 else 1
    vec_ref = None
    if args.vectorizer:
        vec = TfidfModel.load(args.vectorizer)
        if vec.dim != X.shape[1]:
            raise ConfigError(f"vectorizer has {vec.dim} features, data has {X.shape[1]}")
        vec_ref = VECTORIZER_FILE
    scheme = NegativeSamplingScheme(cfg.negatives, cfg.effective_train_beam)
    solver = SolverConfig(cfg.loss, cfg.lam, cfg.tol, cfg.max_iter)
    meta = {"config": cfg.to_dict(), "vectorizer": vec_ref, "n_labels": Y.shape[1]}
    model = train_xr_linear(X, Y, chain, scheme, solver, cfg.eps, combiner=cfg.combiner, seed=cfg.seed,
                            n_jobs=threads, meta=meta)
    out = Path(args.output)
    model.save(out)
    if vec_ref:
        shutil.copyfile(args.vectorizer, out / VECTORIZER_FILE)
    return 0


def _load_queries(model_dir: Path, model: XrLinearModel, path) -> CsrMatrix:
    if _is_raw_text(path):
        ref = model.meta.get("vectorizer")
        if not ref:
            raise ConfigError("raw-text input needs a model trained with --vectorizer")
        _, texts = read_raw_text(path)
        return TfidfModel.load(model_dir / ref).transform_many(texts)
    return read_dataset(path)[0]


def cmd_predict(args) -> int:
    model_dir = Path(args.model)
    model = XrLinearModel.load(model_dir)
    stored = RunConfig.from_dict(model.meta.get("config", {}))
    beam = args.beam if args.beam is not None else stored.beam
    topk = args.topk if args.topk is not None else stored.topk
    if beam < 1 or topk < 1:
        raise ConfigError("beam and topk must be >= 1")
    X = _load_queries(model_dir, model, args.input)
    preds = batch_predict(model, X, beam, topk, _threads(args.threads))
    text = "".join(format_prediction(p) + "\n" for p in preds)
    if args.output:
        _out(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def read_predictions(path) -> list:
    return [parse_prediction(line) for line in Path(path).read_text(encoding="utf-8").splitlines()]


def cmd_eval(args) -> int:
    if _is_raw_text(args.truth):
        truths, _ = read_raw_text(args.truth)
    else:
        truths = label_rows(read_dataset(args.truth)[1])
    try:
        preds = read_predictions(args.predictions)
    except ValueError as e:
        raise DatasetParseError(args.predictions, 0, f"bad prediction file: {e}") from None
    if any(k < 1 for k in args.k):
        raise UsageError("every k must be >= 1")
    report = evaluate(preds, truths, args.k, skip_empty=args.skip_empty)
    sys.stdout.write(report.to_json() + "\n")
    sys.stderr.write(report.to_table() + "\n")
    if args.json:
        _out(args.json).write_text(report.to_json() + "\n")
    return 0


def _add_common(p, seed=True):
    if seed:
        p.add_argument("--seed", type=int, default=None, help="randomness seed (default 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: XRL_THREADS or all cores)")


def _add_cluster_flags(p):
    p.add_argument("--embedding", choices=["pii", "pifa", "pifa_lf", "spectral"])
    p.add_argument("--spectral-dim", dest="spectral_dim", type=int)
    p.add_argument("--alpha", type=float, help="PIFA+LF blend weight")
    p.add_argument("--B", "-B", dest="B", type=int, help="branching factor (default 8)")
    p.add_argument("--K", "-K", dest="K", type=int, help="leaf clusters, a power of B (default: auto)")
    p.add_argument("--max-leaf-size", dest="max_leaf_size", type=int)
    p.add_argument("--objective", choices=["kmeans", "skmeans"])
    p.add_argument("--unbalanced", dest="balanced", action="store_false", default=None)
    p.add_argument("--kmeans-iter", dest="kmeans_iter", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="xrlinear", description="Tree-based linear extreme multilabel ranking.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("vectorize", help="raw 'labels<TAB>text' lines -> tfidf dataset file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--save-vectorizer", help="fit a vectorizer on the input and write it here")
    p.add_argument("--vectorizer", help="apply an existing vectorizer")
    p.add_argument("--n-labels", dest="n_labels", type=int, help="label count L (default: max id + 1)")
    p.add_argument("--min-df", dest="min_df", type=int)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("cluster", help="build a cluster chain from a training dataset")
    p.add_argument("data")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--label-features", help="dataset file whose feature rows are the label features (pifa_lf)")
    _add_cluster_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="train a model directory")
    p.add_argument("data")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--chain", help="cluster chain directory (default: cluster automatically)")
    p.add_argument("--vectorizer", help="vectorizer used for the data; stored with the model")
    _add_cluster_flags(p)
    p.add_argument("--negatives", choices=["tfn", "man", "tfn+man"])
    p.add_argument("--loss", choices=["hinge", "squared_hinge", "logistic"])
    p.add_argument("--lam", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--eps", type=float, help="weight threshold")
    p.add_argument("--train-beam", dest="train_beam", type=int, help="matcher beam for negatives (default: --beam)")
    p.add_argument("--combiner", choices=["ranker_only", "sigmoid_product"])
    p.add_argument("--beam", type=int, help="default inference beam stored with the model")
    p.add_argument("--topk", type=int, help="default topk stored with the model")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="rank labels for a dataset or raw-text file")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--beam", type=int)
    p.add_argument("--topk", type=int)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="precision/recall@k of a prediction file")
    p.add_argument("predictions")
    p.add_argument("truth", help="dataset or raw-text file holding the true labels")
    p.add_argument("-k", "--k", nargs="+", type=int, default=[1, 3, 5])
    p.add_argument("--skip-empty", action="store_true", help="drop instances without true labels")
    p.add_argument("--json", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)
    return ap


def _fail(kind: str, message: str, code: int, line: int | None = None) -> int:
    body = {"error": kind, "message": message}
    if line is not None:
        body["line"] = line
    sys.stderr.write(json.dumps(body) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail("UsageError", str(e), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        return _fail(type(e).__name__, str(e), 2)
    except DatasetParseError as e:
        return _fail("DatasetParseError", str(e), 3, e.lineno)
    except (OSError, json.JSONDecodeError) as e:
        return _fail(type(e).__name__, str(e), 3)
    except Exception as e:  # noqa: BLE001
        return _fail(type(e).__name__, str(e), 1)


if __name__ == "__main__":
    sys.exit(main())
