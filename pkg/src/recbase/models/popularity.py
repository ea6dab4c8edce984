"""Non-personalized popularity baseline."""

from __future__ import annotations

from ..data import InteractionMatrix
from .base import PopularityModel

__all__ = ["fit_top_popular"]


def fit_top_popular(train: InteractionMatrix) -> PopularityModel:
    """Rank items by their number of interactions, identically for all users."""
    model = PopularityModel(train, {}, train.item_counts().astype(float))
    model.kind = "toppop"
    return model
