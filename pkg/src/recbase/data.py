"""Dataset ingestion, preprocessing, splitting and negative sampling.

Everything that turns a raw interaction log into a reproducible
:class:`SplitBundle`: loading delimiter-separated files (gzip-transparent),
binarization, k-core filtering, the per-user split protocols and negative
sampling. All randomized operations are pure functions of
``(matrix, parameters, seed)``; per-user randomness is derived from
independent substreams so results do not depend on iteration order.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sps

__all__ = [
    "DataError",
    "ColumnSchema",
    "InteractionMatrix",
    "ContentMatrix",
    "Provenance",
    "SplitBundle",
    "SeededRng",
    "load_interactions",
    "load_content",
    "binarize",
    "k_core_filter",
    "split_random_holdout",
    "split_leave_last_out",
    "split_leave_one_out_random",
    "split_user_holdout",
    "split_fixed_per_user",
    "sample_negatives",
    "validate_bundle",
    "save_bundle",
    "load_bundle",
    "load_external_split",
    "dataset_digest",
]

_UINT64_MASK = (1 << 64) - 1

# Substream tags keep the per-user generators of distinct pipeline stages
# statistically independent even when the same seed is reused.
_TAG_RANDOM_HOLDOUT = 1
_TAG_LEAVE_ONE_OUT = 2
_TAG_USER_HOLDOUT = 3
_TAG_FIXED_PER_USER = 4
_TAG_NEGATIVES = 5


class DataError(ValueError):
    """Raised for malformed input files or contract violations."""


# ---------------------------------------------------------------------------
# Core types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeededRng:
    """Seedable, portable random source.

    Streams are produced by NumPy's PCG64 generator seeded through a
    ``SeedSequence``; identical seeds yield identical streams on every
    platform. ``generator(*stream)`` derives an independent substream from
    the extra integer keys, so per-user draws are order-independent.
    """

    seed: int

    def generator(self, *stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed & _UINT64_MASK, *stream])


def _as_rng(rng: "SeededRng | int") -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    return SeededRng(int(rng))


class InteractionMatrix:
    """Sparse user-by-item matrix of interaction weights.

    Stores at most one entry per ``(user, item)`` pair; every stored weight
    is positive (explicit ratings are kept as their raw value until
    :func:`binarize`). Timestamps, when present, cover every entry and share
    the weight matrix's sparsity pattern. Instances are treated as immutable
    after construction and are safe to share across threads.
    """

    def __init__(
        self,
        matrix: sps.spmatrix,
        timestamps: sps.spmatrix | None = None,
        user_labels: Sequence[str] | None = None,
        item_labels: Sequence[str] | None = None,
        require_positive: bool = True,
    ):
        csr = sps.csr_matrix(matrix, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        csr.eliminate_zeros()
        data = csr.data
        if not np.all(np.isfinite(data)):
            raise DataError("interaction weights must be finite")
        if require_positive and data.size and data.min() <= 0:
            raise DataError("interaction weights must be positive")
        self._csr = csr
        self._csc: sps.csc_matrix | None = None
        self.n_users, self.n_items = csr.shape
        if timestamps is not None:
            ts = sps.csr_matrix(timestamps)
            ts.sort_indices()
            if ts.shape != csr.shape or ts.nnz != csr.nnz or not (
                np.array_equal(ts.indptr, csr.indptr)
                and np.array_equal(ts.indices, csr.indices)
            ):
                raise DataError("timestamps must cover exactly the stored entries")
            ts = sps.csr_matrix(
                (ts.data.astype(np.int64), ts.indices, ts.indptr), shape=ts.shape
            )
            self._ts = ts
        else:
            self._ts = None
        self.user_labels = None if user_labels is None else list(user_labels)
        self.item_labels = None if item_labels is None else list(item_labels)

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_entries(
        cls,
        n_users: int,
        n_items: int,
        users: np.ndarray,
        items: np.ndarray,
        weights: np.ndarray,
        timestamps: np.ndarray | None = None,
        user_labels: Sequence[str] | None = None,
        item_labels: Sequence[str] | None = None,
        require_positive: bool = True,
    ) -> "InteractionMatrix":
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if users.size:
            if users.min() < 0 or users.max() >= n_users:
                raise DataError("user index out of range")
            if items.min() < 0 or items.max() >= n_items:
                raise DataError("item index out of range")
        key = users * n_items + items
        if np.unique(key).size != key.size:
            raise DataError("duplicate (user, item) entries")
        mat = sps.csr_matrix((weights, (users, items)), shape=(n_users, n_items))
        ts = None
        if timestamps is not None:
            ts = sps.csr_matrix(
                (np.asarray(timestamps, dtype=np.int64), (users, items)),
                shape=(n_users, n_items),
            )
        return cls(mat, ts, user_labels, item_labels, require_positive)

    # -- accessors ----------------------------------------------------------

    def csr(self) -> sps.csr_matrix:
        return self._csr

    def csc(self) -> sps.csc_matrix:
        if self._csc is None:
            self._csc = self._csr.tocsc()
        return self._csc

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def has_timestamps(self) -> bool:
        return self._ts is not None

    def timestamps_csr(self) -> sps.csr_matrix:
        if self._ts is None:
            raise DataError("matrix has no timestamps")
        return self._ts

    def entry_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
        """Entries in row-major order: (users, items, weights, timestamps?)."""
        csr = self._csr
        rows = np.repeat(
            np.arange(self.n_users, dtype=np.int64), np.diff(csr.indptr)
        )
        ts = self._ts.data if self._ts is not None else None
        return rows, csr.indices.astype(np.int64), csr.data, ts

    def user_items(self, user: int) -> np.ndarray:
        csr = self._csr
        return csr.indices[csr.indptr[user] : csr.indptr[user + 1]]

    def user_counts(self) -> np.ndarray:
        return np.diff(self._csr.indptr)

    def item_counts(self) -> np.ndarray:
        return np.asarray(self._csr.getnnz(axis=0)).ravel()

    def select_entries(self, positions: np.ndarray) -> "InteractionMatrix":
        """New matrix (same shape/labels) keeping entries at row-major positions."""
        rows, cols, data, ts = self.entry_arrays()
        positions = np.asarray(positions, dtype=np.int64)
        return InteractionMatrix.from_entries(
            self.n_users,
            self.n_items,
            rows[positions],
            cols[positions],
            data[positions],
            None if ts is None else ts[positions],
            self.user_labels,
            self.item_labels,
        )

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return (
            f"InteractionMatrix({self.n_users}x{self.n_items}, nnz={self.nnz}, "
            f"timestamps={self.has_timestamps})"
        )


class ContentMatrix:
    """Sparse entity-by-feature matrix of finite attribute weights."""

    def __init__(
        self,
        matrix: sps.spmatrix,
        entity_labels: Sequence[str] | None = None,
        feature_labels: Sequence[str] | None = None,
    ):
        csr = sps.csr_matrix(matrix, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        csr.eliminate_zeros()
        if not np.all(np.isfinite(csr.data)):
            raise DataError("content weights must be finite")
        self._csr = csr
        self.n_entities, self.n_features = csr.shape
        self.entity_labels = None if entity_labels is None else list(entity_labels)
        self.feature_labels = None if feature_labels is None else list(feature_labels)

    def csr(self) -> sps.csr_matrix:
        return self._csr

    @property
    def nnz(self) -> int:
        return self._csr.nnz


@dataclass
class Provenance:
    """Record of how a bundle was produced (splitter, parameters, seed).

    ``extras`` carries auxiliary artifacts such as fold-in profile matrices
    for user-holdout splits, warnings, and overlap flags.
    """

    splitter: str
    params: dict
    seed: int | None
    extras: dict = field(default_factory=dict)


@dataclass
class SplitBundle:
    """Train / validation / test matrices plus optional per-user negatives."""

    train: InteractionMatrix
    test: InteractionMatrix
    validation: InteractionMatrix | None = None
    negatives: dict[int, np.ndarray] | None = None
    provenance: Provenance = field(
        default_factory=lambda: Provenance("unknown", {}, None)
    )

    @property
    def n_users(self) -> int:
        return self.train.n_users

    @property
    def n_items(self) -> int:
        return self.train.n_items

    def parts(self) -> list[InteractionMatrix]:
        out = [self.train, self.test]
        if self.validation is not None:
            out.append(self.validation)
        return out


def validate_bundle(bundle: SplitBundle, check_negatives: bool = True) -> None:
    """Check the structural invariants of a bundle; raise DataError on violation.

    Train/validation/test must share one shape and be pairwise disjoint on
    (user, item) pairs, except that ``extras['validation_overlaps_train']``
    waives train/validation disjointness. Negative lists must be
    duplicate-free and disjoint from every split of their user.
    """
    shape = (bundle.train.n_users, bundle.train.n_items)
    for part in bundle.parts():
        if (part.n_users, part.n_items) != shape:
            raise DataError("bundle parts have mismatched shapes")

    def _keys(m: InteractionMatrix) -> np.ndarray:
        rows, cols, _, _ = m.entry_arrays()
        return rows * shape[1] + cols

    overlap_ok = bool(bundle.provenance.extras.get("validation_overlaps_train"))
    train_keys = _keys(bundle.train)
    test_keys = _keys(bundle.test)
    if np.intersect1d(train_keys, test_keys).size:
        raise DataError("train and test overlap")
    if bundle.validation is not None:
        val_keys = _keys(bundle.validation)
        if np.intersect1d(val_keys, test_keys).size:
            raise DataError("validation and test overlap")
        if not overlap_ok and np.intersect1d(val_keys, train_keys).size:
            raise DataError("train and validation overlap")

    if check_negatives and bundle.negatives is not None:
        for user, negs in bundle.negatives.items():
            negs = np.asarray(negs)
            if np.unique(negs).size != negs.size:
                raise DataError(f"negative list of user {user} contains duplicates")
            owned: set[int] = set()
            for part in bundle.parts():
                owned.update(part.user_items(user).tolist())
            for extra_key in ("fold_in_validation", "fold_in_test"):
                fold = bundle.provenance.extras.get(extra_key)
                if fold is not None:
                    owned.update(fold.user_items(user).tolist())
            if owned.intersection(negs.tolist()):
                raise DataError(f"negative list of user {user} overlaps their items")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


@dataclass
class ColumnSchema:
    """Column layout of a delimiter-separated interaction file.

    Columns are 0-based indices, or names when ``header`` is true. ``weight``
    and ``timestamp`` are optional; absent weight columns default every
    interaction to weight 1.
    """

    user: int | str
    item: int | str
    weight: int | str | None = None
    timestamp: int | str | None = None
    delimiter: str = "\t"
    header: bool = False

    def to_dict(self) -> dict:
        return {
            "user": self.user,
            "item": self.item,
            "weight": self.weight,
            "timestamp": self.timestamp,
            "delimiter": self.delimiter,
            "header": self.header,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ColumnSchema":
        return cls(
            user=d["user"],
            item=d["item"],
            weight=d.get("weight"),
            timestamp=d.get("timestamp"),
            delimiter=d.get("delimiter", "\t"),
            header=bool(d.get("header", False)),
        )


def _open_text(path: str):
    # gzip-transparent: sniff the magic bytes rather than trusting the name.
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _resolve_columns(schema: ColumnSchema, header_fields: list[str] | None):
    def resolve(col, name):
        if col is None:
            return None
        if isinstance(col, str):
            if header_fields is None:
                raise DataError(
                    f"schema names column {name}={col!r} but header=False"
                )
            try:
                return header_fields.index(col)
            except ValueError:
                raise DataError(f"column {col!r} not found in header") from None
        return int(col)

    return (
        resolve(schema.user, "user"),
        resolve(schema.item, "item"),
        resolve(schema.weight, "weight"),
        resolve(schema.timestamp, "timestamp"),
    )


def _parse_interaction_rows(path: str, schema: ColumnSchema):
    """Yield (line_no, user_label, item_label, weight, timestamp) tuples."""
    with _open_text(path) as fh:
        line_no = 0
        header_fields = None
        if schema.header:
            first = fh.readline()
            line_no += 1
            if not first:
                raise DataError(f"{path}: empty file")
            header_fields = first.rstrip("\r\n").split(schema.delimiter)
        u_col, i_col, w_col, t_col = _resolve_columns(schema, header_fields)
        n_needed = max(c for c in (u_col, i_col, w_col, t_col) if c is not None) + 1
        for line in fh:
            line_no += 1
            stripped = line.rstrip("\r\n")
            if not stripped:
                continue
            fields = stripped.split(schema.delimiter)
            if len(fields) < n_needed:
                raise DataError(
                    f"{path}:{line_no}: expected at least {n_needed} columns, got {len(fields)}"
                )
            try:
                weight = 1.0 if w_col is None else float(fields[w_col])
                ts = None if t_col is None else int(float(fields[t_col]))
            except ValueError:
                raise DataError(f"{path}:{line_no}: unparsable numeric field") from None
            if not math.isfinite(weight) or weight <= 0:
                raise DataError(f"{path}:{line_no}: weight must be a positive number")
            yield line_no, fields[u_col], fields[i_col], weight, ts


def load_interactions(path: str, schema: ColumnSchema) -> InteractionMatrix:
    """Load a delimiter-separated interaction log into an InteractionMatrix.

    User and item labels are mapped to contiguous 0-based indices in order of
    first appearance; the maps are retained on the matrix (``user_labels``,
    ``item_labels``) for report output. Duplicate (user, item) rows are
    collapsed keeping the row with the earliest timestamp (the first
    occurrence when no timestamp column exists).
    """
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    # (u, i) -> (weight, ts, order) of the kept row
    kept: dict[tuple[int, int], tuple[float, int | None, int]] = {}
    n_rows = 0
    for line_no, u_label, i_label, weight, ts in _parse_interaction_rows(path, schema):
        n_rows += 1
        u = user_index.setdefault(u_label, len(user_index))
        i = item_index.setdefault(i_label, len(item_index))
        key = (u, i)
        prev = kept.get(key)
        if prev is None:
            kept[key] = (weight, ts, line_no)
        elif ts is not None and prev[1] is not None and ts < prev[1]:
            kept[key] = (weight, ts, line_no)
    if n_rows == 0:
        raise DataError(f"{path}: empty file")

    users = np.fromiter((k[0] for k in kept), dtype=np.int64, count=len(kept))
    items = np.fromiter((k[1] for k in kept), dtype=np.int64, count=len(kept))
    weights = np.fromiter((v[0] for v in kept.values()), dtype=np.float64, count=len(kept))
    has_ts = schema.timestamp is not None
    timestamps = (
        np.fromiter((v[1] for v in kept.values()), dtype=np.int64, count=len(kept))
        if has_ts
        else None
    )
    user_labels = [None] * len(user_index)
    for label, idx in user_index.items():
        user_labels[idx] = label
    item_labels = [None] * len(item_index)
    for label, idx in item_index.items():
        item_labels[idx] = label
    return InteractionMatrix.from_entries(
        len(user_index),
        len(item_index),
        users,
        items,
        weights,
        timestamps,
        user_labels,
        item_labels,
    )


def load_content(path: str, schema: ColumnSchema,
                 entity_labels: Sequence[str] | None = None) -> ContentMatrix:
    """Load an entity/feature attribute file (columns: entity, feature[, weight]).

    When ``entity_labels`` is given (typically the item labels of an already
    loaded interaction matrix) entities are aligned to those indices and
    unknown entities are rejected; otherwise entities are indexed by first
    appearance like :func:`load_interactions`.
    """
    entity_index: dict[str, int] = (
        {label: i for i, label in enumerate(entity_labels)}
        if entity_labels is not None
        else {}
    )
    frozen_entities = entity_labels is not None
    feature_index: dict[str, int] = {}
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for line_no, e_label, f_label, weight, _ in _parse_interaction_rows(path, schema):
        if frozen_entities:
            if e_label not in entity_index:
                raise DataError(f"{path}:{line_no}: unknown entity {e_label!r}")
            e = entity_index[e_label]
        else:
            e = entity_index.setdefault(e_label, len(entity_index))
        f = feature_index.setdefault(f_label, len(feature_index))
        rows.append(e)
        cols.append(f)
        vals.append(weight)
    if not rows:
        raise DataError(f"{path}: empty file")
    n_entities = len(entity_index)
    mat = sps.csr_matrix(
        (vals, (rows, cols)), shape=(n_entities, len(feature_index))
    )
    ent_labels = [None] * n_entities
    for label, idx in entity_index.items():
        ent_labels[idx] = label
    feat_labels = [None] * len(feature_index)
    for label, idx in feature_index.items():
        feat_labels[idx] = label
    return ContentMatrix(mat, ent_labels, feat_labels)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def binarize(m: InteractionMatrix, threshold: float) -> InteractionMatrix:
    """Keep entries with weight > threshold at weight 1; drop the rest."""
    if not math.isfinite(threshold):
        raise DataError("threshold must be finite")
    rows, cols, data, ts = m.entry_arrays()
    keep = data > threshold
    if not keep.any():
        warnings.warn("binarize produced an empty matrix", stacklevel=2)
    return InteractionMatrix.from_entries(
        m.n_users,
        m.n_items,
        rows[keep],
        cols[keep],
        np.ones(int(keep.sum())),
        None if ts is None else ts[keep],
        m.user_labels,
        m.item_labels,
    )


def k_core_filter(
    m: InteractionMatrix,
    min_user_interactions: int,
    min_item_interactions: int,
    iterative: bool = False,
) -> InteractionMatrix:
    """Drop users/items with fewer interactions than the inclusive minima.

    Single-pass mode applies the user filter then the item filter once each;
    iterative mode alternates until a fixed point. Surviving indices are
    re-compacted to a contiguous range and the label maps updated.
    """
    if min_user_interactions < 0 or min_item_interactions < 0:
        raise DataError("thresholds must be nonnegative")
    mat = m.csr().copy()
    ts = m.timestamps_csr().copy() if m.has_timestamps else None
    user_keep = np.ones(m.n_users, dtype=bool)
    item_keep = np.ones(m.n_items, dtype=bool)

    while True:
        u_counts = np.diff(mat.indptr)
        drop_u = u_counts < min_user_interactions
        if drop_u.any():
            keep = ~drop_u
            user_keep[user_keep] = keep
            mat = mat[keep]
            if ts is not None:
                ts = ts[keep]
            if mat.nnz == 0:
                raise DataError(
                    f"min_user_interactions={min_user_interactions} emptied the matrix"
                )
        i_counts = np.asarray(mat.getnnz(axis=0)).ravel()
        drop_i = i_counts < min_item_interactions
        if drop_i.any():
            keep = ~drop_i
            item_keep[item_keep] = keep
            mat = mat[:, keep]
            if ts is not None:
                ts = ts[:, keep]
            if mat.nnz == 0:
                raise DataError(
                    f"min_item_interactions={min_item_interactions} emptied the matrix"
                )
        if not iterative:
            # one more user check: single-pass means user filter then item
            # filter exactly once, so we stop here regardless.
            break
        if not drop_u.any() and not drop_i.any():
            break

    u_labels = (
        [m.user_labels[i] for i in np.flatnonzero(user_keep)]
        if m.user_labels is not None
        else None
    )
    i_labels = (
        [m.item_labels[i] for i in np.flatnonzero(item_keep)]
        if m.item_labels is not None
        else None
    )
    return InteractionMatrix(mat, ts, u_labels, i_labels)


# ---------------------------------------------------------------------------
# Splitters
# ---------------------------------------------------------------------------


def _positions_by_user(m: InteractionMatrix) -> np.ndarray:
    return m.csr().indptr


def _finish_bundle(
    m: InteractionMatrix,
    train_pos: list[np.ndarray],
    test_pos: list[np.ndarray],
    val_pos: list[np.ndarray] | None,
    provenance: Provenance,
) -> SplitBundle:
    train = m.select_entries(np.concatenate(train_pos) if train_pos else np.empty(0, np.int64))
    test = m.select_entries(np.concatenate(test_pos) if test_pos else np.empty(0, np.int64))
    validation = None
    if val_pos is not None:
        validation = m.select_entries(
            np.concatenate(val_pos) if val_pos else np.empty(0, np.int64)
        )
    return SplitBundle(train=train, test=test, validation=validation, provenance=provenance)


def split_random_holdout(
    m: InteractionMatrix,
    test_ratio: float,
    rng: SeededRng | int,
    validation_ratio: float | None = None,
) -> SplitBundle:
    """Per-user random holdout: ceil(ratio * profile) interactions to test.

    Users with a single interaction keep it in train. When
    ``validation_ratio`` is set, the same rule carves validation out of the
    remaining train part (always leaving at least one train interaction).
    """
    if not 0 < test_ratio < 1:
        raise DataError("test_ratio must be in (0, 1)")
    rng = _as_rng(rng)
    indptr = _positions_by_user(m)
    train_pos, test_pos, val_pos = [], [], []
    for u in range(m.n_users):
        pos = np.arange(indptr[u], indptr[u + 1], dtype=np.int64)
        n = pos.size
        if n == 0:
            continue
        if n == 1:
            train_pos.append(pos)
            continue
        g = rng.generator(_TAG_RANDOM_HOLDOUT, u)
        perm = pos[g.permutation(n)]
        n_test = math.ceil(test_ratio * n)
        test_pos.append(perm[:n_test])
        rest = perm[n_test:]
        if validation_ratio and rest.size >= 2:
            n_val = min(math.ceil(validation_ratio * rest.size), rest.size - 1)
            val_pos.append(rest[:n_val])
            rest = rest[n_val:]
        train_pos.append(rest)
    prov = Provenance(
        "random_holdout",
        {"test_ratio": test_ratio, "validation_ratio": validation_ratio},
        rng.seed,
    )
    return _finish_bundle(
        m, train_pos, test_pos, val_pos if validation_ratio else None, prov
    )


def split_leave_last_out(
    m: InteractionMatrix, with_validation: bool = False
) -> SplitBundle:
    """Hold out each user's most recent interaction as test.

    Timestamp ties are broken toward the larger item index (deterministic).
    With ``with_validation`` the second most recent interaction goes to
    validation. Users with a single interaction keep it in train; validation
    is only taken from users with at least three interactions so that train
    never empties.
    """
    if not m.has_timestamps:
        raise DataError("leave-last-out requires timestamps on all entries")
    ts = m.timestamps_csr()
    indptr = ts.indptr
    train_pos, test_pos, val_pos = [], [], []
    for u in range(m.n_users):
        lo, hi = indptr[u], indptr[u + 1]
        pos = np.arange(lo, hi, dtype=np.int64)
        n = pos.size
        if n == 0:
            continue
        if n == 1:
            train_pos.append(pos)
            continue
        # order by (timestamp, item index); CSR stores indices ascending so a
        # stable sort on timestamps leaves ties in item-index order.
        order = np.argsort(ts.data[lo:hi], kind="stable")
        ordered = pos[order]
        test_pos.append(ordered[-1:])
        rest = ordered[:-1]
        if with_validation and n >= 3:
            val_pos.append(rest[-1:])
            rest = rest[:-1]
        train_pos.append(rest)
    prov = Provenance("leave_last_out", {"with_validation": with_validation}, None)
    return _finish_bundle(m, train_pos, test_pos, val_pos if with_validation else None, prov)


def split_leave_one_out_random(
    m: InteractionMatrix, rng: SeededRng | int, with_validation: bool = False
) -> SplitBundle:
    """Hold out one uniformly random interaction per user as test.

    Single-interaction users keep their interaction in train. With
    ``with_validation`` a second random interaction (users with >= 3) goes to
    validation.
    """
    rng = _as_rng(rng)
    indptr = _positions_by_user(m)
    train_pos, test_pos, val_pos = [], [], []
    for u in range(m.n_users):
        pos = np.arange(indptr[u], indptr[u + 1], dtype=np.int64)
        n = pos.size
        if n == 0:
            continue
        if n == 1:
            train_pos.append(pos)
            continue
        g = rng.generator(_TAG_LEAVE_ONE_OUT, u)
        perm = pos[g.permutation(n)]
        test_pos.append(perm[:1])
        rest = perm[1:]
        if with_validation and n >= 3:
            val_pos.append(rest[:1])
            rest = rest[1:]
        train_pos.append(rest)
    prov = Provenance(
        "leave_one_out_random", {"with_validation": with_validation}, rng.seed
    )
    return _finish_bundle(m, train_pos, test_pos, val_pos if with_validation else None, prov)


def split_user_holdout(
    m: InteractionMatrix,
    n_validation_users: int,
    n_test_users: int,
    profile_ratio: float,
    rng: SeededRng | int,
) -> SplitBundle:
    """Hold out whole users; split their profiles into fold-in and ground truth.

    Remaining (warm) users form train. Each held-out user's profile is split
    ``profile_ratio`` / ``1 - profile_ratio`` into an input part, stored in
    the ``fold_in_validation`` / ``fold_in_test`` matrices inside provenance
    extras, and a ground-truth part placed in validation / test. Held-out
    users with fewer than two interactions keep their whole profile as
    fold-in input with zero ground truth (counted as a warning).
    """
    if n_validation_users + n_test_users >= m.n_users:
        raise DataError("held-out users must leave at least one training user")
    if not 0 < profile_ratio < 1:
        raise DataError("profile_ratio must be in (0, 1)")
    rng = _as_rng(rng)
    g = rng.generator(_TAG_USER_HOLDOUT)
    perm = g.permutation(m.n_users)
    val_users = set(perm[:n_validation_users].tolist())
    test_users = set(perm[n_validation_users : n_validation_users + n_test_users].tolist())

    indptr = _positions_by_user(m)
    train_pos, test_pos, val_pos = [], [], []
    fold_val_pos, fold_test_pos = [], []
    degenerate = 0
    for u in range(m.n_users):
        pos = np.arange(indptr[u], indptr[u + 1], dtype=np.int64)
        n = pos.size
        if n == 0:
            continue
        if u not in val_users and u not in test_users:
            train_pos.append(pos)
            continue
        gt_list = val_pos if u in val_users else test_pos
        fold_list = fold_val_pos if u in val_users else fold_test_pos
        if n < 2:
            fold_list.append(pos)
            degenerate += 1
            continue
        n_gt = max(1, math.floor((1 - profile_ratio) * n))
        gu = rng.generator(_TAG_USER_HOLDOUT, u)
        shuffled = pos[gu.permutation(n)]
        gt_list.append(shuffled[:n_gt])
        fold_list.append(shuffled[n_gt:])

    def build(plist):
        return m.select_entries(
            np.concatenate(plist) if plist else np.empty(0, np.int64)
        )

    if degenerate:
        warnings.warn(
            f"{degenerate} held-out users had <2 interactions; kept whole as profile",
            stacklevel=2,
        )
    prov = Provenance(
        "user_holdout",
        {
            "n_validation_users": n_validation_users,
            "n_test_users": n_test_users,
            "profile_ratio": profile_ratio,
        },
        rng.seed,
        extras={
            "fold_in_validation": build(fold_val_pos),
            "fold_in_test": build(fold_test_pos),
            "degenerate_heldout_users": degenerate,
        },
    )
    return _finish_bundle(m, train_pos, test_pos, val_pos, prov)


def split_fixed_per_user(
    m: InteractionMatrix,
    p: int,
    rng: SeededRng | int,
    validation_ratio: float | None = None,
    allow_validation_in_train: bool = False,
) -> SplitBundle:
    """Keep min(p, profile) random interactions per user in train, rest in test.

    When ``validation_ratio`` is set, validation is carved from each user's
    train part. With very small ``p`` that would empty train, so
    ``allow_validation_in_train`` instead samples validation as a subset of
    train that also stays in train (the overlap is flagged in provenance and
    tolerated by :func:`validate_bundle`).
    """
    if p < 1:
        raise DataError("p must be >= 1")
    rng = _as_rng(rng)
    indptr = _positions_by_user(m)
    train_pos, test_pos, val_pos = [], [], []
    for u in range(m.n_users):
        pos = np.arange(indptr[u], indptr[u + 1], dtype=np.int64)
        n = pos.size
        if n == 0:
            continue
        g = rng.generator(_TAG_FIXED_PER_USER, u)
        perm = pos[g.permutation(n)]
        n_train = min(p, n)
        tr = perm[:n_train]
        test_pos.append(perm[n_train:])
        if validation_ratio:
            n_val = min(math.ceil(validation_ratio * tr.size), tr.size)
            if allow_validation_in_train:
                val_pos.append(tr[:n_val])
            elif tr.size - n_val >= 1:
                val_pos.append(tr[:n_val])
                tr = tr[n_val:]
        train_pos.append(tr)
    extras = {}
    if validation_ratio and allow_validation_in_train:
        extras["validation_overlaps_train"] = True
    prov = Provenance(
        "fixed_per_user",
        {
            "p": p,
            "validation_ratio": validation_ratio,
            "allow_validation_in_train": allow_validation_in_train,
        },
        rng.seed,
        extras=extras,
    )
    return _finish_bundle(
        m, train_pos, test_pos, val_pos if validation_ratio else None, prov
    )


# ---------------------------------------------------------------------------
# Negative sampling
# ---------------------------------------------------------------------------


def sample_negatives(
    bundle: SplitBundle, n_per_user: int, rng: SeededRng | int
) -> SplitBundle:
    """Populate per-user negative item sets for sampled evaluation.

    For every user with at least one test interaction, ``n_per_user``
    distinct items are drawn uniformly from the items absent from that
    user's train, validation, test and fold-in sets. If fewer such items
    exist they are all used and the user is recorded as a shortfall. The
    returned bundle reuses the input matrices; the negative sets are fixed
    so that every evaluation of the bundle sees the same candidates.
    """
    if n_per_user < 1:
        raise DataError("n_per_user must be >= 1")
    rng = _as_rng(rng)
    n_items = bundle.n_items
    exclusion_parts = list(bundle.parts())
    for key in ("fold_in_validation", "fold_in_test"):
        fold = bundle.provenance.extras.get(key)
        if fold is not None:
            exclusion_parts.append(fold)
    negatives: dict[int, np.ndarray] = {}
    shortfall_users: list[int] = []
    test_counts = bundle.test.user_counts()
    for u in range(bundle.n_users):
        if test_counts[u] == 0:
            continue
        owned = np.zeros(n_items, dtype=bool)
        for part in exclusion_parts:
            owned[part.user_items(u)] = True
        candidates = np.flatnonzero(~owned)
        g = rng.generator(_TAG_NEGATIVES, u)
        if candidates.size <= n_per_user:
            negatives[u] = candidates.astype(np.int64)
            if candidates.size < n_per_user:
                shortfall_users.append(u)
        else:
            chosen = g.choice(candidates, size=n_per_user, replace=False)
            chosen.sort()
            negatives[u] = chosen.astype(np.int64)
    if shortfall_users:
        warnings.warn(
            f"{len(shortfall_users)} users had fewer than {n_per_user} "
            "candidate negatives; using all available",
            stacklevel=2,
        )
    prov = replace(
        bundle.provenance,
        extras={
            **bundle.provenance.extras,
            "negatives_n_per_user": n_per_user,
            "negatives_seed": rng.seed,
            "negative_shortfall_users": shortfall_users,
        },
    )
    return replace(bundle, negatives=negatives, provenance=prov)


# ---------------------------------------------------------------------------
# Bundle serialization
# ---------------------------------------------------------------------------


def dataset_digest(*matrices: InteractionMatrix) -> str:
    """SHA-256 digest of the canonical entry listing of the given matrices."""
    h = hashlib.sha256()
    for m in matrices:
        rows, cols, data, ts = m.entry_arrays()
        order = np.lexsort((cols, rows))
        for p in order:
            line = f"{rows[p]}\t{cols[p]}\t{data[p]!r}"
            if ts is not None:
                line += f"\t{ts[p]}"
            h.update(line.encode())
            h.update(b"\n")
        h.update(b"--\n")
    return h.hexdigest()


def _write_matrix(path: str, m: InteractionMatrix) -> None:
    rows, cols, data, ts = m.entry_arrays()
    order = np.lexsort((cols, rows))
    with open(path, "w", encoding="utf-8") as fh:
        for p in order:
            if ts is not None:
                fh.write(f"{rows[p]}\t{cols[p]}\t{data[p]:.17g}\t{ts[p]}\n")
            else:
                fh.write(f"{rows[p]}\t{cols[p]}\t{data[p]:.17g}\n")


def _read_matrix(path: str, n_users: int, n_items: int, has_ts: bool) -> InteractionMatrix:
    users, items, weights, tss = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            users.append(int(fields[0]))
            items.append(int(fields[1]))
            weights.append(float(fields[2]))
            if has_ts:
                tss.append(int(fields[3]))
    return InteractionMatrix.from_entries(
        n_users,
        n_items,
        np.array(users, dtype=np.int64),
        np.array(items, dtype=np.int64),
        np.array(weights),
        np.array(tss, dtype=np.int64) if has_ts else None,
    )


def save_bundle(bundle: SplitBundle, directory: str) -> None:
    """Write a bundle as sorted TSV part files plus a provenance JSON.

    Layout: ``train.tsv``, ``test.tsv``, optional ``validation.tsv`` and
    fold-in matrices, ``negatives.tsv`` as user/item pairs, label maps when
    present, and ``provenance.json`` with splitter, parameters, seed and the
    dataset digest.
    """
    os.makedirs(directory, exist_ok=True)
    has_ts = bundle.train.has_timestamps
    _write_matrix(os.path.join(directory, "train.tsv"), bundle.train)
    _write_matrix(os.path.join(directory, "test.tsv"), bundle.test)
    parts = [bundle.train, bundle.test]
    if bundle.validation is not None:
        _write_matrix(os.path.join(directory, "validation.tsv"), bundle.validation)
        parts.append(bundle.validation)
    for key in ("fold_in_validation", "fold_in_test"):
        fold = bundle.provenance.extras.get(key)
        if fold is not None:
            _write_matrix(os.path.join(directory, f"{key}.tsv"), fold)
            parts.append(fold)
    if bundle.negatives is not None:
        with open(os.path.join(directory, "negatives.tsv"), "w", encoding="utf-8") as fh:
            for u in sorted(bundle.negatives):
                for i in bundle.negatives[u]:
                    fh.write(f"{u}\t{i}\n")
    labels = bundle.train.user_labels
    if labels is not None:
        with open(os.path.join(directory, "user_index_map.tsv"), "w", encoding="utf-8") as fh:
            for idx, label in enumerate(labels):
                fh.write(f"{idx}\t{label}\n")
    labels = bundle.train.item_labels
    if labels is not None:
        with open(os.path.join(directory, "item_index_map.tsv"), "w", encoding="utf-8") as fh:
            for idx, label in enumerate(labels):
                fh.write(f"{idx}\t{label}\n")
    extras_json = {
        k: v
        for k, v in bundle.provenance.extras.items()
        if not isinstance(v, InteractionMatrix)
    }
    meta = {
        "splitter": bundle.provenance.splitter,
        "params": bundle.provenance.params,
        "seed": bundle.provenance.seed,
        "extras": extras_json,
        "n_users": bundle.n_users,
        "n_items": bundle.n_items,
        "has_timestamps": has_ts,
        "has_validation": bundle.validation is not None,
        "fold_in_files": [
            key
            for key in ("fold_in_validation", "fold_in_test")
            if bundle.provenance.extras.get(key) is not None
        ],
        "has_negatives": bundle.negatives is not None,
        "dataset_digest": dataset_digest(*parts),
    }
    with open(os.path.join(directory, "provenance.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(directory: str) -> SplitBundle:
    """Load a bundle previously written by :func:`save_bundle`."""
    with open(os.path.join(directory, "provenance.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    n_users, n_items = meta["n_users"], meta["n_items"]
    has_ts = meta["has_timestamps"]
    train = _read_matrix(os.path.join(directory, "train.tsv"), n_users, n_items, has_ts)
    test = _read_matrix(os.path.join(directory, "test.tsv"), n_users, n_items, has_ts)
    validation = None
    if meta.get("has_validation"):
        validation = _read_matrix(
            os.path.join(directory, "validation.tsv"), n_users, n_items, has_ts
        )
    extras = dict(meta.get("extras", {}))
    for key in meta.get("fold_in_files", []):
        extras[key] = _read_matrix(
            os.path.join(directory, f"{key}.tsv"), n_users, n_items, has_ts
        )
    negatives = None
    if meta.get("has_negatives"):
        negatives = {}
        with open(os.path.join(directory, "negatives.tsv"), "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                u_s, i_s = line.split("\t")
                negatives.setdefault(int(u_s), []).append(int(i_s))
        negatives = {u: np.array(v, dtype=np.int64) for u, v in negatives.items()}
    return SplitBundle(
        train=train,
        test=test,
        validation=validation,
        negatives=negatives,
        provenance=Provenance(
            meta["splitter"], meta["params"], meta["seed"], extras=extras
        ),
    )


def load_external_split(
    train_path: str,
    test_path: str,
    schema: ColumnSchema,
    validation_path: str | None = None,
    negatives_path: str | None = None,
    negatives_schema: ColumnSchema | None = None,
) -> SplitBundle:
    """Build a bundle from third-party split files sharing one label space.

    Intended for auditing externally produced splits: no invariants are
    enforced, and negative lists are kept exactly as found in the file
    (duplicates and overlaps included) so defects stay observable.
    """
    paths = [("train", train_path), ("test", test_path)]
    if validation_path:
        paths.append(("validation", validation_path))
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    raw: dict[str, list[tuple[int, int, float, int | None]]] = {}
    for name, path in paths:
        entries = []
        for _, u_label, i_label, w, ts in _parse_interaction_rows(path, schema):
            u = user_index.setdefault(u_label, len(user_index))
            i = item_index.setdefault(i_label, len(item_index))
            entries.append((u, i, w, ts))
        raw[name] = entries
    negatives = None
    if negatives_path:
        neg_schema = negatives_schema or ColumnSchema(
            user=0, item=1, delimiter=schema.delimiter
        )
        negatives = {}
        for _, u_label, i_label, _, _ in _parse_interaction_rows(
            negatives_path, neg_schema
        ):
            u = user_index.setdefault(u_label, len(user_index))
            i = item_index.setdefault(i_label, len(item_index))
            negatives.setdefault(u, []).append(i)
        negatives = {u: np.array(v, dtype=np.int64) for u, v in negatives.items()}
    n_users, n_items = len(user_index), len(item_index)
    user_labels = [None] * n_users
    for label, idx in user_index.items():
        user_labels[idx] = label
    item_labels = [None] * n_items
    for label, idx in item_index.items():
        item_labels[idx] = label

    def build(entries):
        if not entries:
            return InteractionMatrix.from_entries(
                n_users, n_items, np.empty(0, np.int64), np.empty(0, np.int64),
                np.empty(0), None, user_labels, item_labels,
            )
        arr = np.array([(e[0], e[1]) for e in entries], dtype=np.int64)
        weights = np.array([e[2] for e in entries])
        has_ts = all(e[3] is not None for e in entries)
        ts = np.array([e[3] for e in entries], dtype=np.int64) if has_ts else None
        # external files may repeat pairs; keep the first occurrence
        key = arr[:, 0] * n_items + arr[:, 1]
        _, first = np.unique(key, return_index=True)
        first.sort()
        return InteractionMatrix.from_entries(
            n_users, n_items, arr[first, 0], arr[first, 1], weights[first],
            None if ts is None else ts[first], user_labels, item_labels,
        )

    return SplitBundle(
        train=build(raw["train"]),
        test=build(raw["test"]),
        validation=build(raw["validation"]) if validation_path else None,
        negatives=negatives,
        provenance=Provenance("external", {"train_path": train_path}, None),
    )
