"""Latent-factor recommenders: truncated SVD and implicit-feedback ALS.

The SVD model decomposes the training matrix with a seeded randomized
truncated SVD (5 power iterations) and scores warm users from their scaled
left factors. The ALS model turns weights into confidences, either
``1 + alpha * r`` or ``1 + alpha * ln(1 + r / epsilon)``, and alternates
exact f-by-f ridge solves for user and item factors; preferences are 1 on
the support and 0 elsewhere. Training is exposed incrementally so an early
stopping controller can snapshot the best epoch.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sps
from sklearn.utils.extmath import randomized_svd

from ..data import DataError, InteractionMatrix
from .base import FactorModel

__all__ = ["fit_pure_svd", "fit_ials", "IalsTrainer"]


def fit_pure_svd(
    train: InteractionMatrix,
    num_factors: int,
    cold_user_mode: str = "item_similarity",
    cold_topk: int | None = None,
    seed: int = 0,
) -> FactorModel:
    """Truncated SVD of the training matrix; scores are U * Sigma * V^T rows."""
    if num_factors < 1:
        raise DataError("num_factors must be >= 1")
    if num_factors > min(train.n_users, train.n_items):
        raise DataError(
            f"num_factors={num_factors} exceeds "
            f"min(n_users, n_items)={min(train.n_users, train.n_items)}"
        )
    U, sigma, VT = randomized_svd(
        train.csr(), n_components=num_factors, n_iter=5, random_state=seed
    )
    model = FactorModel(
        train,
        {
            "num_factors": num_factors,
            "cold_user_mode": cold_user_mode,
            "cold_topk": cold_topk,
            "seed": seed,
        },
        U * sigma,
        VT.T.copy(),
        cold_user_mode,
        cold_topk,
    )
    model.kind = "puresvd"
    return model


class IalsTrainer:
    """Incrementally trainable alternating-least-squares model.

    ``run_epochs`` advances training; ``snapshot`` returns an independent
    frozen model copy, which is what an early-stopping controller keeps as
    its best-so-far model.
    """

    def __init__(
        self,
        train: InteractionMatrix,
        num_factors: int,
        confidence: str = "linear",
        alpha: float = 1.0,
        epsilon: float = 1.0,
        reg: float = 1e-3,
        seed: int = 0,
        cold_user_mode: str = "item_similarity",
        cold_topk: int | None = None,
    ):
        if reg <= 0:
            raise DataError("reg must be positive")
        if confidence not in ("linear", "log"):
            raise DataError(f"unknown confidence scaling {confidence!r}")
        if confidence == "log" and epsilon <= 0:
            raise DataError("epsilon must be positive with log confidence scaling")
        if num_factors < 1:
            raise DataError("num_factors must be >= 1")
        self.train = train
        self.reg = reg
        self.params = {
            "num_factors": num_factors,
            "confidence": confidence,
            "alpha": alpha,
            "epsilon": epsilon,
            "reg": reg,
            "seed": seed,
            "cold_user_mode": cold_user_mode,
            "cold_topk": cold_topk,
        }
        self.cold_user_mode = cold_user_mode
        self.cold_topk = cold_topk

        conf = train.csr().copy()
        if confidence == "linear":
            conf.data = 1.0 + alpha * conf.data
        else:
            conf.data = 1.0 + alpha * np.log1p(conf.data / epsilon)
        self._conf_user = conf
        self._conf_item = conf.T.tocsr()

        rng = np.random.default_rng(seed)
        self.user_factors = rng.uniform(0.0, 0.1, (train.n_users, num_factors))
        self.item_factors = rng.uniform(0.0, 0.1, (train.n_items, num_factors))
        self.epoch = 0

    def _solve_side(self, conf: sps.csr_matrix, this: np.ndarray, other: np.ndarray):
        f = other.shape[1]
        gram = other.T @ other + self.reg * np.eye(f)
        indptr, indices, data = conf.indptr, conf.indices, conf.data
        for row in range(this.shape[0]):
            lo, hi = indptr[row], indptr[row + 1]
            if lo == hi:
                this[row] = 0.0
                continue
            cols = indices[lo:hi]
            c = data[lo:hi]
            M = other[cols]
            A = gram + (M.T * (c - 1.0)) @ M
            b = M.T @ c
            this[row] = scipy.linalg.solve(A, b, assume_a="pos")

    def run_epochs(self, n: int = 1) -> None:
        for _ in range(n):
            self._solve_side(self._conf_user, self.user_factors, self.item_factors)
            self._solve_side(self._conf_item, self.item_factors, self.user_factors)
            self.epoch += 1

    def objective(self) -> float:
        """Confidence-weighted squared error plus the regularization terms."""
        U, V = self.user_factors, self.item_factors
        gram = V.T @ V
        total = float(np.sum((U @ gram) * U))  # sum of s^2 over all cells
        conf = self._conf_user
        rows = np.repeat(np.arange(conf.shape[0]), np.diff(conf.indptr))
        s = np.einsum("ij,ij->i", U[rows], V[conf.indices])
        total += float(np.sum(conf.data * (1.0 - s) ** 2 - s**2))
        total += self.reg * (float(np.sum(U**2)) + float(np.sum(V**2)))
        return total

    def snapshot(self) -> FactorModel:
        model = FactorModel(
            self.train,
            dict(self.params),
            self.user_factors.copy(),
            self.item_factors.copy(),
            self.cold_user_mode,
            self.cold_topk,
        )
        model.kind = "ials"
        model.fit_epochs = self.epoch
        return model


def fit_ials(
    train: InteractionMatrix,
    num_factors: int,
    epochs: int,
    confidence: str = "linear",
    alpha: float = 1.0,
    epsilon: float = 1.0,
    reg: float = 1e-3,
    seed: int = 0,
    cold_user_mode: str = "item_similarity",
    cold_topk: int | None = None,
) -> FactorModel:
    """Train for a fixed epoch count (epoch selection happens in the tuner)."""
    if epochs < 1:
        raise DataError("epochs must be >= 1")
    trainer = IalsTrainer(
        train, num_factors, confidence, alpha, epsilon, reg, seed,
        cold_user_mode, cold_topk,
    )
    trainer.run_epochs(epochs)
    return trainer.snapshot()
