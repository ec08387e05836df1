"""Exact cosine top-k search and two-stage re-ranking.

Search is a linear scan: every query is scored against every indexed
embedding. Results are ordered by descending score with ties broken by
ascending ``frame_id``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_embeddings
from .core import EventAnnotation, FrameStream, KeyframeIndex, normalize
from .exceptions import DimensionMismatchError, EmptyStreamError, ReRankCoverageError

__all__ = [
    "CosineIndex",
    "DualEmbeddingIndex",
    "RetrievalResult",
    "candidates_for_hit_rate",
    "first_hit_ranks",
    "rank_order",
    "rerank",
    "top_k",
]


def rank_order(scores: np.ndarray, frame_ids: np.ndarray, k: int | None = None) -> np.ndarray:
    """Positions of the ``k`` best scores, descending, ties by ascending id."""
    n = scores.shape[0]
    if k is None or k >= n:
        return np.lexsort((frame_ids, -scores))
    # every score tied with the k-th best must compete for the last slots
    kth = np.partition(scores, n - k)[n - k]
    cand = np.flatnonzero(scores >= kth)
    order = cand[np.lexsort((frame_ids[cand], -scores[cand]))]
    return order[:k]


@dataclass(frozen=True, eq=False)
class RetrievalResult:
    frame_ids: np.ndarray
    timestamps: np.ndarray
    scores: np.ndarray

    @property
    def ranked(self) -> list[tuple[int, float, float]]:
        return [
            (int(f), float(t), float(s))
            for f, t, s in zip(self.frame_ids, self.timestamps, self.scores)
        ]

    def __len__(self) -> int:
        return self.frame_ids.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RetrievalResult):
            return NotImplemented
        return (
            np.array_equal(self.frame_ids, other.frame_ids)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.scores, other.scores)
        )

    __hash__ = None


class CosineIndex(BaseEstimator):
    """Exact inner-product index over unit-norm rows.

    ``fit(X, frame_ids=None)`` stores the (normalized) rows; ``search``
    returns scores and row positions of the top matches for each query.
    """

    def fit(self, X, y=None, frame_ids=None):
        X = check_embeddings(X)
        self.embeddings_ = X
        self.n_features_in_ = X.shape[1]
        if frame_ids is None:
            frame_ids = np.arange(X.shape[0])
        self.frame_ids_ = np.asarray(frame_ids, dtype=np.int64)
        if self.frame_ids_.shape != (X.shape[0],):
            raise ValueError("frame_ids must have one entry per row of X")
        return self

    def search(self, Q, k=5):
        """Top-``k`` rows for each query.

        Returns
        -------
        scores : ndarray of shape (n_queries, min(k, n_rows))
        positions : ndarray of the same shape, row positions into ``X``
        """
        check_is_fitted(self, "embeddings_")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        Q = check_embeddings(np.atleast_2d(Q), dim=self.n_features_in_, name="Q")
        S = Q @ self.embeddings_.T
        m = min(k, S.shape[1])
        pos = np.empty((Q.shape[0], m), dtype=np.int64)
        for i, row in enumerate(S):
            pos[i] = rank_order(row, self.frame_ids_, m)
        return np.take_along_axis(S, pos, axis=1), pos


def _check_query(index: KeyframeIndex, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.d:
        raise DimensionMismatchError(f"query dimension {q.shape} does not match index dimension {index.d}")
    return normalize(q)


def top_k(index: KeyframeIndex, query, k: int) -> RetrievalResult:
    """Exact top-``k`` keyframes for ``query`` by cosine similarity."""
    if len(index) == 0:
        raise EmptyStreamError("cannot search an empty index")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = _check_query(index, query)
    scores = index.embeddings @ q
    pos = rank_order(scores, index.frame_ids, k)
    return RetrievalResult(index.frame_ids[pos], index.timestamps[pos], scores[pos])


class DualEmbeddingIndex:
    """First-stage keyframes plus a second embedding space for re-ranking.

    Parameters
    ----------
    first_stage : KeyframeIndex
        Keyframes embedded in the search space (space A).
    second_stage : mapping of frame_id -> embedding, or FrameStream
        Embeddings of (at least) the same frames in the re-ranking space
        (space B). Dimensions of A and B are independent.
    strict : bool, default=True
        Require ``second_stage`` to cover every first-stage frame up front.
        With ``strict=False`` a gap is only reported when ``rerank`` needs it.
    """

    def __init__(self, first_stage: KeyframeIndex, second_stage, *, strict=True):
        self.first_stage = first_stage
        if isinstance(second_stage, FrameStream):
            ids = second_stage.frame_ids
            E = second_stage.embeddings
        else:
            items = sorted((int(k), v) for k, v in dict(second_stage).items())
            if not items:
                raise EmptyStreamError("second stage has no embeddings")
            ids = np.array([k for k, _ in items], dtype=np.int64)
            E = check_embeddings(np.stack([np.asarray(v, dtype=np.float64) for _, v in items]))
        self._ids = ids
        self._E = E
        if strict:
            self._positions(first_stage.frame_ids)

    @property
    def second_dim(self) -> int:
        return self._E.shape[1]

    def _positions(self, frame_ids) -> np.ndarray:
        pos = np.searchsorted(self._ids, frame_ids)
        for p, f in zip(pos, frame_ids):
            if p >= len(self._ids) or self._ids[p] != f:
                raise ReRankCoverageError(int(f))
        return pos

    def second_stage_embeddings(self, frame_ids) -> np.ndarray:
        return self._E[self._positions(np.asarray(frame_ids, dtype=np.int64))]


def rerank(dual: DualEmbeddingIndex, query_a, query_b, n_candidates: int, k: int) -> RetrievalResult:
    """Shortlist ``n_candidates`` in space A, rescore them in space B, keep ``k``.

    Scores in the result are space-B similarities.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n_candidates < k:
        raise ValueError(f"n_candidates ({n_candidates}) must be >= k ({k})")
    first = top_k(dual.first_stage, query_a, n_candidates)
    qb = np.asarray(query_b, dtype=np.float64)
    if qb.ndim != 1 or qb.shape[0] != dual.second_dim:
        raise DimensionMismatchError(
            f"second-stage query dimension {qb.shape} does not match space B dimension {dual.second_dim}"
        )
    qb = normalize(qb)
    scores = dual.second_stage_embeddings(first.frame_ids) @ qb
    pos = rank_order(scores, first.frame_ids, k)
    return RetrievalResult(first.frame_ids[pos], first.timestamps[pos], scores[pos])


def first_hit_ranks(index: KeyframeIndex, events: Sequence[EventAnnotation], tolerance_s: float) -> np.ndarray:
    """1-based rank of the first in-tolerance keyframe per event (``inf`` if none)."""
    if len(index) == 0:
        raise EmptyStreamError("cannot search an empty index")
    Q = np.stack([_check_query(index, e.query) for e in events])
    S = Q @ index.embeddings.T
    ranks = np.full(len(events), np.inf)
    for i, (event, row) in enumerate(zip(events, S)):
        order = rank_order(row, index.frame_ids)
        hits = np.flatnonzero(event.matches(index.timestamps[order], tolerance_s))
        if hits.size:
            ranks[i] = hits[0] + 1
    return ranks


def candidates_for_hit_rate(dual, events: Sequence[EventAnnotation], target_rate: float, tolerance_s: float):
    """Smallest first-stage shortlist size ``n`` with Hit@n >= ``target_rate``.

    ``dual`` may be a :class:`DualEmbeddingIndex` or a bare
    :class:`KeyframeIndex`; only the first stage is searched. Hit@n is a step
    function of ``n`` and no interpolation is done. Returns ``None`` when no
    ``n`` up to the index size reaches the target.
    """
    if not events:
        raise ValueError("candidates_for_hit_rate needs at least one event")
    if not 0.0 < target_rate <= 1.0:
        raise ValueError(f"target_rate must lie in (0, 1], got {target_rate}")
    index = dual.first_stage if isinstance(dual, DualEmbeddingIndex) else dual
    ranks = np.sort(first_hit_ranks(index, events, tolerance_s))
    n_events = len(events)
    for m in range(1, n_events + 1):
        if m / n_events >= target_rate:
            break
    r = ranks[m - 1]
    return None if np.isinf(r) else int(r)
