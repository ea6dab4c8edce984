"""Random-walk graph recommenders.

The two-step walk goes user -> item -> user -> item: transition
probabilities are the interaction weights raised elementwise to ``alpha``
and row-normalized, and the item-item similarity is the product of the
item-to-user and user-to-item transition matrices. The popularity-penalized
variant divides each similarity column by the target item's raw interaction
count raised to ``beta`` (``beta = 0`` reproduces the plain walk exactly).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from ..data import DataError, InteractionMatrix
from .base import ItemSimilarityModel

__all__ = ["fit_p3alpha", "fit_rp3beta"]


def _row_normalize(mat: sps.csr_matrix) -> sps.csr_matrix:
    sums = np.asarray(mat.sum(axis=1)).ravel()
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    return sps.diags(scale) @ mat


def _walk_similarity(
    train: InteractionMatrix,
    topK: int,
    alpha: float,
    normalize_similarity: bool,
    pop_beta: float | None,
    block_size: int = 1024,
) -> sps.csr_matrix:
    if topK < 1:
        raise DataError("topK must be >= 1")
    powered = train.csr().copy()
    powered.data = np.power(powered.data, alpha)
    if not np.all(np.isfinite(powered.data)):
        raise DataError("alpha produced non-finite transition weights")
    p_user_item = _row_normalize(powered)
    p_item_user = _row_normalize(powered.T.tocsr())

    col_scale = None
    if pop_beta is not None:
        pop = train.item_counts().astype(np.float64)
        col_scale = np.zeros_like(pop)
        nz = pop > 0
        col_scale[nz] = np.power(pop[nz], -pop_beta)

    n_items = train.n_items
    rows_out, cols_out, vals_out = [], [], []
    for start in range(0, n_items, block_size):
        stop = min(start + block_size, n_items)
        block = (p_item_user[start:stop] @ p_user_item).toarray()
        if col_scale is not None:
            block *= col_scale[None, :]
        block[np.arange(stop - start), np.arange(start, stop)] = 0.0
        for r in range(stop - start):
            row = block[r]
            nz_idx = np.flatnonzero(row)
            if nz_idx.size == 0:
                continue
            if nz_idx.size > topK:
                order = np.lexsort((nz_idx, -row[nz_idx]))[:topK]
                nz_idx = nz_idx[order]
            rows_out.append(np.full(nz_idx.size, start + r, dtype=np.int64))
            cols_out.append(nz_idx)
            vals_out.append(row[nz_idx])
    sim = sps.csr_matrix(
        (
            np.concatenate(vals_out) if vals_out else np.empty(0),
            (
                np.concatenate(rows_out) if rows_out else np.empty(0, np.int64),
                np.concatenate(cols_out) if cols_out else np.empty(0, np.int64),
            ),
        ),
        shape=(n_items, n_items),
    )
    if normalize_similarity:
        sim = _row_normalize(sim)
    return sim


def fit_p3alpha(
    train: InteractionMatrix,
    topK: int,
    alpha: float,
    normalize_similarity: bool = True,
) -> ItemSimilarityModel:
    sim = _walk_similarity(train, topK, alpha, normalize_similarity, None)
    model = ItemSimilarityModel(
        train,
        {"topK": topK, "alpha": alpha, "normalize_similarity": normalize_similarity},
        sim,
    )
    model.kind = "p3alpha"
    return model


def fit_rp3beta(
    train: InteractionMatrix,
    topK: int,
    alpha: float,
    beta: float,
    normalize_similarity: bool = True,
) -> ItemSimilarityModel:
    sim = _walk_similarity(train, topK, alpha, normalize_similarity, beta)
    model = ItemSimilarityModel(
        train,
        {
            "topK": topK,
            "alpha": alpha,
            "beta": beta,
            "normalize_similarity": normalize_similarity,
        },
        sim,
    )
    model.kind = "rp3beta"
    return model
