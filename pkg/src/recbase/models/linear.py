"""Sparse and dense linear item models.

The elastic-net model learns the item weight matrix one column at a time:
column j is regressed on all other item columns with nonnegative
coefficients and a zero self-weight, then pruned to its topK largest
coefficients; columns are independent, so they can be fit in parallel. The
closed-form model inverts the regularized Gram matrix once:
``B = -P / diag(P)`` with ``P = (X^T X + reg I)^{-1}`` and a zero diagonal.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sps
from joblib import Parallel, delayed
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import ElasticNet

from ..data import DataError, InteractionMatrix
from .base import ItemSimilarityModel

__all__ = ["fit_slim_elasticnet", "fit_ease", "MemoryBudgetExceeded"]


class MemoryBudgetExceeded(RuntimeError):
    """Dense item-item workspace would exceed the configured memory budget."""


def _slim_columns(X: sps.csc_matrix, columns, topK, l1_ratio, alpha_reg, max_iter, tol):
    """Fit one elastic-net column per target item; X is a private copy."""
    model = ElasticNet(
        alpha=alpha_reg,
        l1_ratio=l1_ratio,
        positive=True,
        fit_intercept=False,
        copy_X=False,
        max_iter=max_iter,
        tol=tol,
        selection="cyclic",
    )
    out = []
    for j in columns:
        y = np.asarray(X[:, j].todense()).ravel()
        lo, hi = X.indptr[j], X.indptr[j + 1]
        saved = X.data[lo:hi].copy()
        X.data[lo:hi] = 0.0  # the target item must not predict itself
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model.fit(X, y)
        X.data[lo:hi] = saved
        coef = model.sparse_coef_.tocoo()
        idx, vals = coef.col, coef.data
        keep = (vals > 0) & (idx != j)
        idx, vals = idx[keep], vals[keep]
        if idx.size > topK:
            order = np.lexsort((idx, -vals))[:topK]
            idx, vals = idx[order], vals[order]
        out.append((j, idx.astype(np.int64), vals))
    return out


def fit_slim_elasticnet(
    train: InteractionMatrix,
    topK: int,
    l1_ratio: float,
    alpha_reg: float,
    max_iter: int = 200,
    tol: float = 1e-4,
    n_jobs: int = 1,
) -> ItemSimilarityModel:
    if not 0 < l1_ratio <= 1:
        raise DataError("l1_ratio must lie in (0, 1]")
    if alpha_reg <= 0:
        raise DataError("alpha_reg must be positive")
    if topK < 1:
        raise DataError("topK must be >= 1")
    n_items = train.n_items
    all_cols = np.arange(n_items)
    if n_jobs == 1:
        results = [
            _slim_columns(
                train.csc().copy(), all_cols, topK, l1_ratio, alpha_reg, max_iter, tol
            )
        ]
    else:
        chunks = np.array_split(all_cols, n_jobs)
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_slim_columns)(
                train.csc().copy(), chunk, topK, l1_ratio, alpha_reg, max_iter, tol
            )
            for chunk in chunks
            if chunk.size
        )
    rows, cols, vals = [], [], []
    for chunk_result in results:
        for j, idx, w in chunk_result:
            rows.append(idx)
            cols.append(np.full(idx.size, j, dtype=np.int64))
            vals.append(w)
    weights = sps.csr_matrix(
        (
            np.concatenate(vals) if vals else np.empty(0),
            (
                np.concatenate(rows) if rows else np.empty(0, np.int64),
                np.concatenate(cols) if cols else np.empty(0, np.int64),
            ),
        ),
        shape=(n_items, n_items),
    )
    model = ItemSimilarityModel(
        train,
        {"topK": topK, "l1_ratio": l1_ratio, "alpha": alpha_reg},
        weights,
    )
    model.kind = "slim"
    return model


def fit_ease(
    train: InteractionMatrix,
    l2_norm: float,
    memory_budget_gb: float = 4.0,
) -> ItemSimilarityModel:
    if l2_norm <= 0:
        raise DataError("l2_norm must be positive")
    n = train.n_items
    needed_gb = 3 * n * n * 8 / 1e9  # Gram, inverse and weight matrices
    if needed_gb > memory_budget_gb:
        raise MemoryBudgetExceeded(
            f"dense {n}x{n} workspace needs ~{needed_gb:.1f} GB, "
            f"budget is {memory_budget_gb:.1f} GB"
        )
    X = train.csr()
    gram = np.asarray((X.T @ X).todense())
    gram[np.diag_indices(n)] += l2_norm
    cho = scipy.linalg.cho_factor(gram, overwrite_a=True)
    inv = scipy.linalg.cho_solve(cho, np.eye(n))
    weights = inv / (-np.diag(inv))[None, :]
    np.fill_diagonal(weights, 0.0)
    model = ItemSimilarityModel(train, {"l2_norm": l2_norm}, weights)
    model.kind = "ease"
    return model
