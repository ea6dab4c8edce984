"""Model persistence.

A saved model is a single ``.npz`` container (format version 1) holding:

* ``format_version``, ``kind``, ``model_class`` and ``fit_epochs`` scalars,
* ``hyperparameters_json``: the hyperparameter record as a JSON string,
* ``train_*``: the CSR arrays and shape of the training matrix (needed for
  profile-based scoring and seen-item masking),
* class-specific payload arrays (similarity/weight matrices, factor pairs or
  the popularity vector) under the keys each model class defines.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sps

from ..data import DataError, InteractionMatrix
from .base import (
    FactorModel,
    FittedModel,
    ItemSimilarityModel,
    PopularityModel,
    UserSimilarityModel,
)

__all__ = ["save_model", "load_model"]

_FORMAT_VERSION = 1

_CLASSES = {
    cls.__name__: cls
    for cls in (ItemSimilarityModel, UserSimilarityModel, FactorModel, PopularityModel)
}


def save_model(model: FittedModel, path: str) -> None:
    train = model._train_csr
    arrays = {
        "format_version": np.array(_FORMAT_VERSION),
        "kind": np.array(model.kind),
        "model_class": np.array(type(model).__name__),
        "fit_epochs": np.array(-1 if model.fit_epochs is None else model.fit_epochs),
        "hyperparameters_json": np.array(json.dumps(model.hyperparameters, sort_keys=True)),
        "train_data": train.data,
        "train_indices": train.indices,
        "train_indptr": train.indptr,
        "train_shape": np.array(train.shape),
    }
    for key, value in model._payload().items():
        arrays[f"payload_{key}"] = value
    np.savez(path, **arrays)


def load_model(path: str) -> FittedModel:
    with np.load(path, allow_pickle=False) as blob:
        version = int(blob["format_version"])
        if version != _FORMAT_VERSION:
            raise DataError(f"unsupported model format version {version}")
        class_name = str(blob["model_class"])
        if class_name not in _CLASSES:
            raise DataError(f"unknown model class {class_name!r}")
        shape = tuple(blob["train_shape"])
        train = InteractionMatrix(
            sps.csr_matrix(
                (blob["train_data"], blob["train_indices"], blob["train_indptr"]),
                shape=shape,
            ),
            require_positive=False,
        )
        payload = {
            key[len("payload_") :]: blob[key]
            for key in blob.files
            if key.startswith("payload_")
        }
        hyperparameters = json.loads(str(blob["hyperparameters_json"]))
        model = _CLASSES[class_name]._from_payload(train, hyperparameters, payload)
        model.kind = str(blob["kind"])
        epochs = int(blob["fit_epochs"])
        model.fit_epochs = None if epochs < 0 else epochs
    return model
