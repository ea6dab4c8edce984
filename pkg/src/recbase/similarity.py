"""Sparse similarity kernels shared by the neighborhood and graph models.

Implements cosine, asymmetric cosine, Jaccard, Dice and Tversky similarity
with an additive shrink term in the denominator, optional TF-IDF / BM25
feature weighting of the interaction weights, top-k row pruning, and the
feature-concatenation hybrid used by the CF+content models. Computation
streams over row blocks of the entity matrix, accumulating dot products via
sparse products, so cost scales with the number of co-occurrences instead of
the dense pair count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .data import ContentMatrix, DataError, InteractionMatrix

__all__ = [
    "SET_MEASURES",
    "MEASURES",
    "SimilarityConfig",
    "SimilarityMatrix",
    "apply_feature_weighting",
    "compute_similarity",
    "top_k_prune",
    "concat_hybrid",
]

MEASURES = ("cosine", "asymmetric_cosine", "jaccard", "dice", "tversky")
SET_MEASURES = ("jaccard", "dice", "tversky")
FEATURE_WEIGHTINGS = ("none", "tfidf", "bm25")

_BM25_K1 = 1.2
_BM25_B = 0.75


@dataclass
class SimilarityConfig:
    """Knobs of a similarity computation.

    ``normalize=False`` drops the measure's denominator entirely (raw dot
    product or intersection count, shrink included). Set-based measures
    binarize the input support first, so feature weighting is rejected for
    them.
    """

    measure: str = "cosine"
    topK: int = 100
    shrink: float = 0.0
    normalize: bool = True
    asymmetric_alpha: float = 1.0
    tversky_alpha: float = 1.0
    tversky_beta: float = 1.0
    feature_weighting: str = "none"

    def validate(self) -> None:
        if self.measure not in MEASURES:
            raise DataError(f"unknown similarity measure {self.measure!r}")
        if self.topK < 1:
            raise DataError("topK must be >= 1")
        if self.shrink < 0:
            raise DataError("shrink must be nonnegative")
        if self.feature_weighting not in FEATURE_WEIGHTINGS:
            raise DataError(f"unknown feature weighting {self.feature_weighting!r}")
        if self.measure in SET_MEASURES and self.feature_weighting != "none":
            raise DataError(
                "feature weighting is not defined for set-based measures"
            )
        for name in ("asymmetric_alpha", "tversky_alpha", "tversky_beta"):
            value = getattr(self, name)
            if not 0 <= value <= 2:
                raise DataError(f"{name} must lie in [0, 2]")

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "topK": self.topK,
            "shrink": self.shrink,
            "normalize": self.normalize,
            "asymmetric_alpha": self.asymmetric_alpha,
            "tversky_alpha": self.tversky_alpha,
            "tversky_beta": self.tversky_beta,
            "feature_weighting": self.feature_weighting,
        }


class SimilarityMatrix:
    """Square sparse similarity matrix with top-k-pruned rows and zero diagonal."""

    def __init__(self, matrix: sps.spmatrix, topK: int | None = None):
        csr = sps.csr_matrix(matrix, dtype=np.float64)
        csr.sort_indices()
        csr.eliminate_zeros()
        if csr.shape[0] != csr.shape[1]:
            raise DataError("similarity matrix must be square")
        if not np.all(np.isfinite(csr.data)):
            raise DataError("similarity values must be finite")
        self._csr = csr
        self.n = csr.shape[0]
        self.topK = topK

    def csr(self) -> sps.csr_matrix:
        return self._csr

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        csr = self._csr
        lo, hi = csr.indptr[i], csr.indptr[i + 1]
        return csr.indices[lo:hi], csr.data[lo:hi]

    def save_text(self, path: str) -> None:
        """Write ``i<TAB>j<TAB>value`` rows for inspection (not a stable format)."""
        csr = self._csr
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(self.n):
                cols, vals = self.row(i)
                for j, v in zip(cols, vals):
                    fh.write(f"{i}\t{j}\t{v:.17g}\n")


# ---------------------------------------------------------------------------
# Feature weighting
# ---------------------------------------------------------------------------


def apply_feature_weighting(m: InteractionMatrix, scheme: str) -> InteractionMatrix:
    """Reweight interaction entries treating rows as documents, columns as terms.

    ``tfidf`` multiplies each entry by ln(n_docs / df(term)); ``bm25`` applies
    Okapi weighting with k1=1.2, b=0.75 and the non-negative idf variant
    ln(1 + (N - df + 0.5) / (df + 0.5)). ``none`` is the identity.
    """
    if scheme not in FEATURE_WEIGHTINGS:
        raise DataError(f"unknown feature weighting {scheme!r}")
    if scheme == "none":
        return m
    csr = m.csr()
    n_docs = csr.shape[0]
    df = np.asarray(csr.getnnz(axis=0)).ravel().astype(np.float64)
    rows, cols, data, ts = m.entry_arrays()
    if scheme == "tfidf":
        with np.errstate(divide="ignore"):
            idf = np.where(df > 0, np.log(n_docs / np.maximum(df, 1)), 0.0)
        new_data = data * idf[cols]
    else:
        idf = np.log1p((n_docs - df + 0.5) / (df + 0.5))
        doc_len = np.asarray(csr.sum(axis=1)).ravel()
        avg_len = doc_len.mean() if n_docs else 0.0
        norm = (1.0 - _BM25_B) + _BM25_B * doc_len / avg_len
        new_data = data * (_BM25_K1 + 1.0) / (data + _BM25_K1 * norm[rows]) * idf[cols]
    keep = new_data > 0
    return InteractionMatrix.from_entries(
        m.n_users,
        m.n_items,
        rows[keep],
        cols[keep],
        new_data[keep],
        None if ts is None else ts[keep],
        m.user_labels,
        m.item_labels,
    )


# ---------------------------------------------------------------------------
# Similarity computation
# ---------------------------------------------------------------------------


def _prune_block(block: np.ndarray, row_offset: int, k: int):
    """Top-k per row of a dense block; boundary ties keep the smaller index."""
    n_rows, n = block.shape
    rows_out, cols_out, vals_out = [], [], []
    for r in range(n_rows):
        row = block[r]
        nz = np.flatnonzero(row)
        if nz.size == 0:
            continue
        if nz.size > k:
            # order by (-value, index): stable deterministic tie handling
            order = np.lexsort((nz, -row[nz]))[:k]
            nz = nz[order]
        cols_out.append(nz)
        vals_out.append(row[nz])
        rows_out.append(np.full(nz.size, row_offset + r, dtype=np.int64))
    return rows_out, cols_out, vals_out


def compute_similarity(
    m: InteractionMatrix,
    axis: str,
    cfg: SimilarityConfig,
    block_size: int = 1024,
) -> SimilarityMatrix:
    """Pairwise similarity between items (column vectors) or users (row vectors).

    The shrink term is added to the measure's denominator; the diagonal is
    zeroed and each row pruned to its ``topK`` largest values. Results are
    deterministic and independent of ``block_size``.
    """
    cfg.validate()
    if m.nnz == 0:
        raise DataError("cannot compute similarity of an empty matrix")
    if axis not in ("items", "users"):
        raise DataError("axis must be 'items' or 'users'")

    weighted = apply_feature_weighting(m, cfg.feature_weighting)
    # entity-major matrix: rows are the objects being compared
    E = weighted.csr() if axis == "users" else weighted.csc().T.tocsr()
    set_based = cfg.measure in SET_MEASURES
    if set_based:
        E = E.copy()
        E.data = np.ones_like(E.data)
    n = E.shape[0]
    ET = E.T.tocsr()

    sq_norms = np.asarray(E.multiply(E).sum(axis=1)).ravel()
    sizes = np.asarray(E.getnnz(axis=1)).ravel().astype(np.float64)

    rows_out, cols_out, vals_out = [], [], []
    alpha = cfg.asymmetric_alpha
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        # dot products (weighted) or co-occurrence counts (set measures)
        overlap = (E[start:stop] @ ET).toarray()
        if not cfg.normalize:
            sim = overlap
        elif cfg.measure == "cosine":
            denom = np.sqrt(sq_norms[start:stop])[:, None] * np.sqrt(sq_norms)[None, :]
            sim = _safe_divide(overlap, denom + cfg.shrink)
        elif cfg.measure == "asymmetric_cosine":
            left = _power(sq_norms[start:stop], alpha)[:, None]
            right = _power(sq_norms, 1.0 - alpha)[None, :]
            sim = _safe_divide(overlap, left * right + cfg.shrink)
        elif cfg.measure == "jaccard":
            union = sizes[start:stop][:, None] + sizes[None, :] - overlap
            sim = _safe_divide(overlap, union + cfg.shrink)
        elif cfg.measure == "dice":
            denom = sizes[start:stop][:, None] + sizes[None, :]
            sim = _safe_divide(2.0 * overlap, denom + cfg.shrink)
        else:  # tversky
            only_a = sizes[start:stop][:, None] - overlap
            only_b = sizes[None, :] - overlap
            denom = (
                overlap
                + cfg.tversky_alpha * only_a
                + cfg.tversky_beta * only_b
            )
            sim = _safe_divide(overlap, denom + cfg.shrink)
        diag = np.arange(start, stop)
        sim[np.arange(stop - start), diag] = 0.0
        r, c, v = _prune_block(sim, start, cfg.topK)
        rows_out.extend(r)
        cols_out.extend(c)
        vals_out.extend(v)

    if rows_out:
        rows_arr = np.concatenate(rows_out)
        cols_arr = np.concatenate(cols_out)
        vals_arr = np.concatenate(vals_out)
    else:
        rows_arr = np.empty(0, np.int64)
        cols_arr = np.empty(0, np.int64)
        vals_arr = np.empty(0)
    out = sps.csr_matrix((vals_arr, (rows_arr, cols_arr)), shape=(n, n))
    return SimilarityMatrix(out, topK=cfg.topK)


def _safe_divide(num: np.ndarray, denom: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    return out


def _power(sq_norms: np.ndarray, exponent: float) -> np.ndarray:
    # sq_norms ** exponent == ||v|| ** (2 * exponent); zero norms stay zero
    return np.power(sq_norms, exponent, where=sq_norms > 0, out=np.zeros_like(sq_norms))


def top_k_prune(s: SimilarityMatrix, k: int) -> SimilarityMatrix:
    """Keep each row's k largest values; boundary ties keep the smaller index."""
    if k < 1:
        raise DataError("k must be >= 1")
    csr = s.csr()
    rows_out, cols_out, vals_out = [], [], []
    for i in range(s.n):
        cols, vals = s.row(i)
        if cols.size > k:
            order = np.lexsort((cols, -vals))[:k]
            cols, vals = cols[order], vals[order]
        rows_out.append(np.full(cols.size, i, dtype=np.int64))
        cols_out.append(cols)
        vals_out.append(vals)
    out = sps.csr_matrix(
        (
            np.concatenate(vals_out) if vals_out else np.empty(0),
            (
                np.concatenate(rows_out) if rows_out else np.empty(0, np.int64),
                np.concatenate(cols_out) if cols_out else np.empty(0, np.int64),
            ),
        ),
        shape=csr.shape,
    )
    return SimilarityMatrix(out, topK=k)


# ---------------------------------------------------------------------------
# Hybrid concatenation
# ---------------------------------------------------------------------------


def concat_hybrid(
    m: InteractionMatrix,
    c: ContentMatrix,
    w: float,
    axis: str = "items",
) -> InteractionMatrix:
    """Concatenate collaborative and content features, scaling content by w.

    For ``axis='items'`` the content rows must index items; the result stacks
    `w * content^T` below the interaction matrix so that item column vectors
    gain the content block. For ``axis='users'`` the content rows index users
    and the block extends each user row. With ``w = 0`` the content block
    vanishes and similarities equal the pure collaborative ones.
    """
    if w < 0:
        raise DataError("w must be nonnegative")
    if axis not in ("items", "users"):
        raise DataError("axis must be 'items' or 'users'")
    expected = m.n_items if axis == "items" else m.n_users
    if c.n_entities != expected:
        raise DataError(
            f"content matrix indexes {c.n_entities} entities, expected {expected}"
        )
    scaled = c.csr() * w
    if axis == "items":
        stacked = sps.vstack([m.csr(), scaled.T.tocsr()], format="csr")
    else:
        stacked = sps.hstack([m.csr(), scaled], format="csr")
    return InteractionMatrix(stacked, require_positive=False)
