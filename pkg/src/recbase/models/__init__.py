"""Baseline recommenders behind one fit/score contract.

``ALGORITHM_IDS`` enumerates every built-in baseline; :func:`fit_algorithm`
dispatches a hyperparameter assignment to the right fit function, and
:func:`make_trainer` builds the incremental trainer for the iterative model
so epoch counts can be chosen by early stopping.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..data import ContentMatrix, DataError, InteractionMatrix
from ..similarity import SimilarityConfig
from .base import (
    ColdStartUnsupported,
    FactorModel,
    FittedModel,
    ItemSimilarityModel,
    PopularityModel,
    ScoreVector,
    UserSimilarityModel,
)
from .factor import IalsTrainer, fit_ials, fit_pure_svd
from .graph import fit_p3alpha, fit_rp3beta
from .io import load_model, save_model
from .knn import fit_knn, fit_knn_cbf, fit_knn_cfcbf
from .linear import MemoryBudgetExceeded, fit_ease, fit_slim_elasticnet
from .popularity import fit_top_popular

__all__ = [
    "AlgorithmSpec",
    "ALGORITHMS",
    "ALGORITHM_IDS",
    "ColdStartUnsupported",
    "FactorModel",
    "FittedModel",
    "IalsTrainer",
    "ItemSimilarityModel",
    "MemoryBudgetExceeded",
    "PopularityModel",
    "ScoreVector",
    "UserSimilarityModel",
    "fit_algorithm",
    "fit_ease",
    "fit_ials",
    "fit_knn",
    "fit_knn_cbf",
    "fit_knn_cfcbf",
    "fit_p3alpha",
    "fit_pure_svd",
    "fit_rp3beta",
    "fit_slim_elasticnet",
    "fit_top_popular",
    "load_model",
    "make_trainer",
    "save_model",
]


@dataclass(frozen=True)
class AlgorithmSpec:
    id: str
    iterative: bool = False
    needs_content: bool = False
    tunable: bool = True


ALGORITHMS: dict[str, AlgorithmSpec] = {
    spec.id: spec
    for spec in (
        AlgorithmSpec("toppop", tunable=False),
        AlgorithmSpec("user-knn-cf"),
        AlgorithmSpec("item-knn-cf"),
        AlgorithmSpec("user-knn-cbf", needs_content=True),
        AlgorithmSpec("item-knn-cbf", needs_content=True),
        AlgorithmSpec("user-knn-cfcbf", needs_content=True),
        AlgorithmSpec("item-knn-cfcbf", needs_content=True),
        AlgorithmSpec("p3alpha"),
        AlgorithmSpec("rp3beta"),
        AlgorithmSpec("puresvd"),
        AlgorithmSpec("ials", iterative=True),
        AlgorithmSpec("slim"),
        AlgorithmSpec("ease"),
    )
}

ALGORITHM_IDS = tuple(ALGORITHMS)


def _similarity_config(params: dict) -> SimilarityConfig:
    return SimilarityConfig(
        measure=params.get("similarity", "cosine"),
        topK=int(params.get("topK", 100)),
        shrink=float(params.get("shrink", 0.0)),
        normalize=bool(params.get("normalize", True)),
        asymmetric_alpha=float(params.get("asymmetric_alpha", 1.0)),
        tversky_alpha=float(params.get("tversky_alpha", 1.0)),
        tversky_beta=float(params.get("tversky_beta", 1.0)),
        feature_weighting=params.get("feature_weighting", "none"),
    )


def fit_algorithm(
    algorithm_id: str,
    train: InteractionMatrix,
    params: dict,
    seed: int = 0,
    content: ContentMatrix | None = None,
    epochs: int | None = None,
    memory_budget_gb: float = 4.0,
    n_jobs: int = 1,
) -> FittedModel:
    """Fit a built-in baseline from a hyperparameter assignment.

    ``epochs`` applies to the iterative model only (its value normally comes
    out of early stopping rather than the search space).
    """
    if algorithm_id not in ALGORITHMS:
        raise DataError(f"unknown algorithm id {algorithm_id!r}")
    spec = ALGORITHMS[algorithm_id]
    if spec.needs_content and content is None:
        raise DataError(f"{algorithm_id} requires a content matrix")
    params = dict(params)
    if algorithm_id == "toppop":
        return fit_top_popular(train)
    if algorithm_id in ("user-knn-cf", "item-knn-cf"):
        axis = "items" if algorithm_id.startswith("item") else "users"
        return fit_knn(train, axis, _similarity_config(params))
    if algorithm_id in ("user-knn-cbf", "item-knn-cbf"):
        axis = "items" if algorithm_id.startswith("item") else "users"
        return fit_knn_cbf(train, content, axis, _similarity_config(params))
    if algorithm_id in ("user-knn-cfcbf", "item-knn-cfcbf"):
        axis = "items" if algorithm_id.startswith("item") else "users"
        return fit_knn_cfcbf(
            train, content, axis, _similarity_config(params),
            float(params.get("w", 1.0)),
        )
    if algorithm_id == "p3alpha":
        return fit_p3alpha(
            train,
            int(params["topK"]),
            float(params["alpha"]),
            bool(params.get("normalize_similarity", True)),
        )
    if algorithm_id == "rp3beta":
        return fit_rp3beta(
            train,
            int(params["topK"]),
            float(params["alpha"]),
            float(params["beta"]),
            bool(params.get("normalize_similarity", True)),
        )
    if algorithm_id == "puresvd":
        return fit_pure_svd(
            train,
            int(params["num_factors"]),
            params.get("cold_user_mode", "item_similarity"),
            params.get("cold_topk"),
            seed=seed,
        )
    if algorithm_id == "ials":
        if epochs is None:
            raise DataError("ials requires an epoch count (from early stopping)")
        return fit_ials(
            train,
            int(params["num_factors"]),
            int(epochs),
            confidence=params.get("confidence", "linear"),
            alpha=float(params.get("alpha", 1.0)),
            epsilon=float(params.get("epsilon", 1.0)),
            reg=float(params.get("reg", 1e-3)),
            seed=seed,
            cold_user_mode=params.get("cold_user_mode", "item_similarity"),
            cold_topk=params.get("cold_topk"),
        )
    if algorithm_id == "slim":
        return fit_slim_elasticnet(
            train,
            int(params["topK"]),
            float(params["l1_ratio"]),
            float(params["alpha"]),
            n_jobs=n_jobs,
        )
    if algorithm_id == "ease":
        return fit_ease(
            train, float(params["l2_norm"]), memory_budget_gb=memory_budget_gb
        )
    raise DataError(f"unhandled algorithm id {algorithm_id!r}")  # pragma: no cover


def make_trainer(
    algorithm_id: str,
    train: InteractionMatrix,
    params: dict,
    seed: int = 0,
) -> IalsTrainer:
    """Incremental trainer for iterative algorithms (epoch-wise training)."""
    if algorithm_id != "ials":
        raise DataError(f"{algorithm_id} is not an iterative algorithm")
    return IalsTrainer(
        train,
        int(params["num_factors"]),
        confidence=params.get("confidence", "linear"),
        alpha=float(params.get("alpha", 1.0)),
        epsilon=float(params.get("epsilon", 1.0)),
        reg=float(params.get("reg", 1e-3)),
        seed=seed,
        cold_user_mode=params.get("cold_user_mode", "item_similarity"),
        cold_topk=params.get("cold_topk"),
    )
