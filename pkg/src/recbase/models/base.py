"""Common fit/score contract shared by every baseline recommender.

A fitted model exposes dense per-user score vectors over the full catalog
(``score_all`` / ``score_block``), candidate scoring for sampled evaluation,
deterministic ``recommend`` lists with index tie-breaking, and ``fold_in``
scoring for users absent from training. Models are immutable after fit and
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from ..data import DataError, InteractionMatrix

__all__ = [
    "ColdStartUnsupported",
    "ScoreVector",
    "FittedModel",
    "ItemSimilarityModel",
    "UserSimilarityModel",
    "FactorModel",
    "PopularityModel",
]


class ColdStartUnsupported(RuntimeError):
    """Raised by models that cannot score a fold-in profile."""


@dataclass
class ScoreVector:
    """Dense scores for one user; excluded (seen) positions are -inf."""

    user: int
    scores: np.ndarray
    excluded: np.ndarray


def _as_profile_matrix(profiles, n_items: int) -> sps.csr_matrix:
    if isinstance(profiles, InteractionMatrix):
        return profiles.csr()
    mat = sps.csr_matrix(profiles)
    if mat.shape[1] != n_items:
        raise DataError(f"profile has {mat.shape[1]} columns, expected {n_items}")
    return mat


class FittedModel:
    """Base class: stores kind, hyperparameters and the training matrix."""

    kind: str = "abstract"

    def __init__(self, train: InteractionMatrix, hyperparameters: dict):
        self.n_users = train.n_users
        self.n_items = train.n_items
        self.hyperparameters = dict(hyperparameters)
        self.fit_epochs: int | None = None
        self._train_csr = train.csr()

    # -- scoring ------------------------------------------------------------

    def _raw_score_block(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score_block(self, users: np.ndarray, exclude_seen: bool = True) -> np.ndarray:
        """Dense (len(users), n_items) score block; seen items forced to -inf."""
        users = np.asarray(users, dtype=np.int64)
        scores = self._raw_score_block(users)
        if exclude_seen:
            for r, u in enumerate(users):
                lo, hi = self._train_csr.indptr[u], self._train_csr.indptr[u + 1]
                scores[r, self._train_csr.indices[lo:hi]] = -np.inf
        return scores

    def score_all(self, user: int, exclude_seen: bool = True) -> ScoreVector:
        if not 0 <= user < self.n_users:
            raise DataError(f"user {user} out of range")
        scores = self.score_block(np.array([user]), exclude_seen)[0]
        lo, hi = self._train_csr.indptr[user], self._train_csr.indptr[user + 1]
        excluded = (
            self._train_csr.indices[lo:hi].copy()
            if exclude_seen
            else np.empty(0, np.int64)
        )
        return ScoreVector(user=user, scores=scores, excluded=excluded)

    def score_candidates(self, user: int, candidates: np.ndarray) -> np.ndarray:
        scores = self.score_block(np.array([user]), exclude_seen=False)[0]
        return scores[np.asarray(candidates, dtype=np.int64)]

    def recommend(self, user: int, n: int, exclude_seen: bool = True) -> np.ndarray:
        """Top-n item indices by descending score, ties toward smaller index."""
        sv = self.score_all(user, exclude_seen)
        order = np.lexsort((np.arange(self.n_items), -sv.scores))
        if exclude_seen and sv.excluded.size:
            mask = np.ones(self.n_items, dtype=bool)
            mask[sv.excluded] = False
            order = order[mask[order]]
        return order[:n]

    # -- cold-start ---------------------------------------------------------

    def fold_in_block(self, profiles) -> np.ndarray:
        """Scores for users known only through their profile rows."""
        raise ColdStartUnsupported(f"{self.kind} cannot score fold-in profiles")

    def fold_in(self, profile) -> np.ndarray:
        return self.fold_in_block(sps.csr_matrix(profile, shape=(1, self.n_items)))[0]

    # -- persistence hooks (see models.io) -----------------------------------

    def _payload(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_payload(cls, train: InteractionMatrix, hyperparameters: dict, payload: dict):
        raise NotImplementedError


class ItemSimilarityModel(FittedModel):
    """Scores are the user profile times an item-item weight matrix.

    The weight matrix may be sparse (KNN, graph, SLIM) or dense (the
    closed-form linear model); either way its diagonal is zero.
    """

    def __init__(self, train, hyperparameters, weights):
        super().__init__(train, hyperparameters)
        if weights.shape != (self.n_items, self.n_items):
            raise DataError("item weight matrix has wrong shape")
        self.weights = weights

    def _raw_score_block(self, users):
        profiles = self._train_csr[users]
        return self._score_profiles(profiles)

    def _score_profiles(self, profiles: sps.csr_matrix) -> np.ndarray:
        if sps.issparse(self.weights):
            return np.asarray((profiles @ self.weights).todense(), dtype=np.float64)
        return np.asarray(profiles @ self.weights, dtype=np.float64)

    def fold_in_block(self, profiles) -> np.ndarray:
        return self._score_profiles(_as_profile_matrix(profiles, self.n_items))

    def _payload(self):
        if sps.issparse(self.weights):
            w = self.weights.tocsr()
            return {
                "weights_kind": np.array("sparse"),
                "w_data": w.data,
                "w_indices": w.indices,
                "w_indptr": w.indptr,
            }
        return {"weights_kind": np.array("dense"), "w_dense": self.weights}

    @classmethod
    def _from_payload(cls, train, hyperparameters, payload):
        if str(payload["weights_kind"]) == "sparse":
            n = train.n_items
            w = sps.csr_matrix(
                (payload["w_data"], payload["w_indices"], payload["w_indptr"]),
                shape=(n, n),
            )
        else:
            w = payload["w_dense"]
        model = cls(train, hyperparameters, w)
        return model


class UserSimilarityModel(FittedModel):
    """Scores are the user's similarity row times the training matrix.

    Fold-in is not available: a profile alone cannot be located among the
    training users without recomputing the similarity structure.
    """

    def __init__(self, train, hyperparameters, weights: sps.csr_matrix):
        super().__init__(train, hyperparameters)
        if weights.shape != (self.n_users, self.n_users):
            raise DataError("user weight matrix has wrong shape")
        self.weights = weights.tocsr()

    def _raw_score_block(self, users):
        return np.asarray(
            (self.weights[users] @ self._train_csr).todense(), dtype=np.float64
        )

    def _payload(self):
        w = self.weights
        return {"w_data": w.data, "w_indices": w.indices, "w_indptr": w.indptr}

    @classmethod
    def _from_payload(cls, train, hyperparameters, payload):
        n = train.n_users
        w = sps.csr_matrix(
            (payload["w_data"], payload["w_indices"], payload["w_indptr"]), shape=(n, n)
        )
        return cls(train, hyperparameters, w)


class FactorModel(FittedModel):
    """Latent factor model: scores are user factors times item factors.

    Cold users are scored per ``cold_user_mode``: ``item_similarity``
    projects the profile through the item-factor Gram matrix (optionally
    top-k pruned), ``embedding_average`` builds the user's latent vector as
    profile times item factors.
    """

    def __init__(
        self,
        train,
        hyperparameters,
        user_factors: np.ndarray,
        item_factors: np.ndarray,
        cold_user_mode: str = "item_similarity",
        cold_topk: int | None = None,
    ):
        super().__init__(train, hyperparameters)
        if user_factors.shape[0] != self.n_users or item_factors.shape[0] != self.n_items:
            raise DataError("factor matrices have wrong leading dimension")
        if user_factors.shape[1] != item_factors.shape[1]:
            raise DataError("factor matrices have mismatched rank")
        if cold_user_mode not in ("item_similarity", "embedding_average"):
            raise DataError(f"unknown cold_user_mode {cold_user_mode!r}")
        self.user_factors = user_factors
        self.item_factors = item_factors
        self.cold_user_mode = cold_user_mode
        self.cold_topk = cold_topk
        self._cold_similarity: sps.csr_matrix | np.ndarray | None = None

    @property
    def num_factors(self) -> int:
        return self.item_factors.shape[1]

    def _raw_score_block(self, users):
        return self.user_factors[users] @ self.item_factors.T

    def _item_gram(self):
        # Gram matrix of item factors; the diagonal is kept because fold-in is
        # a projection (profile items are masked later by the evaluator).
        if self._cold_similarity is None:
            V = self.item_factors
            if self.cold_topk is None:
                self._cold_similarity = V @ V.T
            else:
                k = self.cold_topk
                blocks = []
                for start in range(0, self.n_items, 2048):
                    stop = min(start + 2048, self.n_items)
                    block = V[start:stop] @ V.T
                    keep = np.zeros_like(block)
                    if block.shape[1] > k:
                        for r in range(block.shape[0]):
                            row = block[r]
                            top = np.lexsort((np.arange(row.size), -row))[:k]
                            keep[r, top] = row[top]
                    else:
                        keep = block
                    blocks.append(sps.csr_matrix(keep))
                self._cold_similarity = sps.vstack(blocks, format="csr")
        return self._cold_similarity

    def fold_in_block(self, profiles) -> np.ndarray:
        mat = _as_profile_matrix(profiles, self.n_items)
        if self.cold_user_mode == "embedding_average":
            latent = mat @ self.item_factors
            return latent @ self.item_factors.T
        gram = self._item_gram()
        if sps.issparse(gram):
            return np.asarray((mat @ gram).todense(), dtype=np.float64)
        return np.asarray(mat @ gram, dtype=np.float64)

    def _payload(self):
        return {
            "user_factors": self.user_factors,
            "item_factors": self.item_factors,
            "cold_user_mode": np.array(self.cold_user_mode),
            "cold_topk": np.array(-1 if self.cold_topk is None else self.cold_topk),
        }

    @classmethod
    def _from_payload(cls, train, hyperparameters, payload):
        cold_topk = int(payload["cold_topk"])
        return cls(
            train,
            hyperparameters,
            payload["user_factors"],
            payload["item_factors"],
            str(payload["cold_user_mode"]),
            None if cold_topk < 0 else cold_topk,
        )


class PopularityModel(FittedModel):
    """Non-personalized ranking by per-item interaction count."""

    def __init__(self, train, hyperparameters, popularity: np.ndarray):
        super().__init__(train, hyperparameters)
        if popularity.shape != (self.n_items,):
            raise DataError("popularity vector has wrong shape")
        self.popularity = popularity.astype(np.float64)

    def _raw_score_block(self, users):
        return np.tile(self.popularity, (len(users), 1))

    def fold_in_block(self, profiles) -> np.ndarray:
        mat = _as_profile_matrix(profiles, self.n_items)
        return np.tile(self.popularity, (mat.shape[0], 1))

    def _payload(self):
        return {"popularity": self.popularity}

    @classmethod
    def _from_payload(cls, train, hyperparameters, payload):
        return cls(train, hyperparameters, payload["popularity"])
