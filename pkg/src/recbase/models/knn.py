"""Nearest-neighbor recommenders: collaborative, content-based and hybrid.

Item-based models score a user as profile-row times the item similarity
matrix; user-based models score as the user's similarity row times the
training matrix. The CBF variants compute similarities from content features
alone but still apply them to the collaborative profile; the CFCBF hybrids
concatenate interaction and content vectors (content scaled by ``w``) before
computing similarities, so ``w = 0`` reduces them to the pure collaborative
models exactly.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from ..data import ContentMatrix, DataError, InteractionMatrix
from ..similarity import SimilarityConfig, compute_similarity, concat_hybrid
from .base import ItemSimilarityModel, UserSimilarityModel

__all__ = ["fit_knn", "fit_knn_cbf", "fit_knn_cfcbf"]


def _wrap(train, axis, cfg, similarity, kind):
    params = {"axis": axis, **cfg.to_dict()}
    if axis == "items":
        model = ItemSimilarityModel(train, params, similarity.csr())
    else:
        model = UserSimilarityModel(train, params, similarity.csr())
    model.kind = kind
    return model


def fit_knn(train: InteractionMatrix, axis: str, cfg: SimilarityConfig):
    """Collaborative KNN over item columns (axis='items') or user rows."""
    sim = compute_similarity(train, axis, cfg)
    kind = "item-knn-cf" if axis == "items" else "user-knn-cf"
    return _wrap(train, axis, cfg, sim, kind)


def fit_knn_cbf(
    train: InteractionMatrix | None,
    content: ContentMatrix,
    axis: str,
    cfg: SimilarityConfig,
):
    """Content-based KNN: similarities from attribute vectors only.

    ``train`` supplies the collaborative profiles used at scoring time; pass
    None to build a model usable only through fold-in profiles.
    """
    entity_rows = InteractionMatrix(content.csr(), require_positive=False)
    sim = compute_similarity(entity_rows, "users", cfg)
    if train is None:
        if axis != "items":
            raise DataError("user-based CBF requires the training matrix")
        train = InteractionMatrix(
            sps.csr_matrix((0, content.n_entities)), require_positive=False
        )
    expected = train.n_items if axis == "items" else train.n_users
    if content.n_entities != expected:
        raise DataError(
            f"content indexes {content.n_entities} entities, expected {expected}"
        )
    kind = "item-knn-cbf" if axis == "items" else "user-knn-cbf"
    return _wrap(train, axis, cfg, sim, kind)


def fit_knn_cfcbf(
    train: InteractionMatrix,
    content: ContentMatrix,
    axis: str,
    cfg: SimilarityConfig,
    w: float,
):
    """Hybrid KNN on concatenated collaborative + content feature vectors."""
    hybrid = concat_hybrid(train, content, w, axis)
    sim = compute_similarity(hybrid, axis, cfg)
    kind = "item-knn-cfcbf" if axis == "items" else "user-knn-cfcbf"
    model = _wrap(train, axis, cfg, sim, kind)
    model.hyperparameters["w"] = w
    return model
