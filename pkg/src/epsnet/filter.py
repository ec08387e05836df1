"""Single-pass streaming novelty filter.

A frame is kept when its highest cosine similarity to every previously kept
frame is strictly below ``tau``; the first frame is always kept. The kept
set is a maximal epsilon-net of the stream with ``epsilon = 1 - tau``:

* coverage: every dropped frame has similarity >= tau to some keyframe;
* separation: every pair of keyframes has similarity < tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_embeddings, check_tau
from .core import FrameRecord, FrameStream, KeyframeIndex, Provenance
from .exceptions import DimensionMismatchError, EmptyStreamError, StreamCorruptError

__all__ = [
    "EpsNetReport",
    "FilterConfig",
    "KeyframeIndex",
    "NoveltyFilter",
    "TemporalMemory",
    "compression_ratio",
    "novelty_filter",
    "verify_epsnet",
]


@dataclass(frozen=True)
class FilterConfig:
    tau: float = 0.92

    def __post_init__(self):
        object.__setattr__(self, "tau", check_tau(self.tau))

    @property
    def epsilon(self) -> float:
        """Cosine-distance radius of the resulting net."""
        return 1.0 - self.tau


class TemporalMemory:
    """Append-only store of retained embeddings.

    ``covers`` scans newest entries first in blocks and stops at the first
    block holding a similarity >= tau. Only the threshold comparison matters
    for the keep decision, so the early exit does not change results.
    Nothing is ever evicted.
    """

    def __init__(self, d: int, block_size: int = 256):
        self.d = int(d)
        self.block_size = int(block_size)
        self._buf = np.empty((16, self.d))
        self._ids: list[int] = []

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def embeddings(self) -> np.ndarray:
        return self._buf[: len(self._ids)]

    @property
    def frame_ids(self) -> list[int]:
        return list(self._ids)

    def add(self, frame_id: int, v: np.ndarray) -> None:
        n = len(self._ids)
        if n == self._buf.shape[0]:
            grown = np.empty((2 * n, self.d))
            grown[:n] = self._buf
            self._buf = grown
        self._buf[n] = v
        self._ids.append(int(frame_id))

    def covers(self, v: np.ndarray, tau: float) -> bool:
        """True if some stored embedding has similarity >= tau with ``v``."""
        stop = len(self._ids)
        while stop > 0:
            start = max(0, stop - self.block_size)
            if (self._buf[start:stop] @ v >= tau).any():
                return True
            stop = start
        return False

    def max_similarity(self, v: np.ndarray) -> float:
        if not self._ids:
            return -math.inf
        return float((self.embeddings @ v).max())


class NoveltyFilter(BaseEstimator):
    """Streaming epsilon-net keyframe selector.

    ``fit`` consumes rows of ``X`` in order; ``partial_fit`` continues the
    same stream with more rows, so feeding a stream in chunks gives the same
    result as feeding it at once.

    Parameters
    ----------
    tau : float, default=0.92
        Similarity threshold in (0, 1). Higher values keep more frames.

    Attributes
    ----------
    keyframe_indices_ : ndarray of int
        Positions (over all rows seen so far) of the retained frames.
    memory_ : TemporalMemory
        Retained embeddings, in stream order.
    n_frames_seen_ : int
    n_features_in_ : int
    """

    def __init__(self, tau=0.92):
        self.tau = tau

    def fit(self, X, y=None):
        for attr in ("memory_", "keyframe_indices_", "n_frames_seen_", "n_features_in_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        tau = check_tau(self.tau)
        X = check_embeddings(X, dim=getattr(self, "n_features_in_", None))
        if not hasattr(self, "memory_"):
            self.n_features_in_ = X.shape[1]
            self.memory_ = TemporalMemory(X.shape[1])
            self.n_frames_seen_ = 0
            self._kept = []
        offset = self.n_frames_seen_
        memory = self.memory_
        for i, v in enumerate(X):
            if not memory.covers(v, tau):
                memory.add(offset + i, v)
                self._kept.append(offset + i)
        self.n_frames_seen_ = offset + X.shape[0]
        self.keyframe_indices_ = np.asarray(self._kept, dtype=np.int64)
        return self

    def fit_predict(self, X, y=None):
        """Fit on ``X`` and return a boolean mask of retained rows."""
        self.fit(X)
        mask = np.zeros(self.n_frames_seen_, dtype=bool)
        mask[self.keyframe_indices_] = True
        return mask

    def predict(self, X):
        """Whether each row would be kept against the current memory.

        Rows are judged independently; the memory is not updated.
        """
        check_is_fitted(self, "memory_")
        tau = check_tau(self.tau)
        X = check_embeddings(X, dim=self.n_features_in_)
        return np.array([not self.memory_.covers(v, tau) for v in X], dtype=bool)

    @property
    def compression_ratio_(self) -> float:
        check_is_fitted(self, "memory_")
        return self.n_frames_seen_ / len(self.keyframe_indices_)


def _as_tau(config) -> float:
    if isinstance(config, FilterConfig):
        return config.tau
    return FilterConfig(config).tau


def novelty_filter(stream, config=FilterConfig()) -> KeyframeIndex:
    """Run the streaming filter over ``stream`` and return the keyframe index.

    ``stream`` is a :class:`FrameStream` or any iterable of
    :class:`FrameRecord`; records are consumed one at a time, so generators
    work. ``config`` may be a :class:`FilterConfig` or a bare ``tau``.
    """
    tau = _as_tau(config)
    if isinstance(stream, FrameStream):
        if len(stream) == 0:
            raise EmptyStreamError("cannot filter an empty stream")
        est = NoveltyFilter(tau=tau).fit(stream.embeddings)
        return KeyframeIndex.from_positions(stream, est.keyframe_indices_, "novelty", tau=tau)
    return _filter_records(stream, tau)


def _filter_records(records: Iterable[FrameRecord], tau: float) -> KeyframeIndex:
    memory = None
    kept: list[FrameRecord] = []
    n = 0
    last_id = -1
    for rec in records:
        if memory is None:
            memory = TemporalMemory(rec.d)
        elif rec.d != memory.d:
            raise StreamCorruptError(
                f"frame_id {rec.frame_id} has dimension {rec.d}, stream dimension is {memory.d}",
                frame_id=rec.frame_id,
            )
        if rec.frame_id <= last_id:
            raise StreamCorruptError(
                f"frame ids must strictly increase (frame_id {rec.frame_id} after {last_id})",
                frame_id=rec.frame_id,
            )
        last_id = rec.frame_id
        n += 1
        if not memory.covers(rec.embedding, tau):
            memory.add(rec.frame_id, rec.embedding)
            kept.append(rec)
    if memory is None:
        raise EmptyStreamError("cannot filter an empty stream")
    keyframes = FrameStream.from_records(kept)
    return KeyframeIndex(keyframes, Provenance("novelty", {"tau": tau}, keyframes.stream_id, n))


@dataclass(frozen=True)
class EpsNetReport:
    """Outcome of :func:`verify_epsnet`.

    Margins are signed so that negative means violated: the coverage gap of
    a dropped frame is ``max_sim - tau`` and the separation gap of a keyframe
    pair is ``tau - sim``. ``worst_gap`` is the smallest of all of them
    (``inf`` when there is nothing to check).
    """

    coverage_ok: bool
    separation_ok: bool
    worst_gap: float
    coverage_gap: float
    separation_gap: float

    @property
    def ok(self) -> bool:
        return self.coverage_ok and self.separation_ok


def _blocked_max(A: np.ndarray, B: np.ndarray, block: int = 2048) -> np.ndarray:
    out = np.empty(A.shape[0])
    for s in range(0, A.shape[0], block):
        out[s : s + block] = (A[s : s + block] @ B.T).max(axis=1)
    return out


def verify_epsnet(index: KeyframeIndex, stream: FrameStream, tau) -> EpsNetReport:
    """Check the coverage and separation properties of ``index`` over ``stream``."""
    tau = float(tau)
    if index.d != stream.d:
        raise DimensionMismatchError(f"index dimension {index.d} != stream dimension {stream.d}")
    pos = stream.positions_of(index.frame_ids)
    K = stream.embeddings[pos]
    dropped = np.ones(len(stream), dtype=bool)
    dropped[pos] = False

    coverage_gap = math.inf
    if dropped.any():
        if len(K) == 0:
            coverage_gap = -math.inf
        else:
            coverage_gap = float((_blocked_max(stream.embeddings[dropped], K) - tau).min())

    separation_gap = math.inf
    if len(K) > 1:
        for s in range(0, len(K), 2048):
            S = K[s : s + 2048] @ K.T
            # keep only pairs (i, j) with j > i
            i = np.arange(s, s + S.shape[0])[:, None]
            S[np.arange(len(K))[None, :] <= i] = -np.inf
            separation_gap = min(separation_gap, float(tau - S.max()))

    return EpsNetReport(
        coverage_ok=coverage_gap >= 0,
        separation_ok=separation_gap > 0,
        worst_gap=min(coverage_gap, separation_gap),
        coverage_gap=coverage_gap,
        separation_gap=separation_gap,
    )


def compression_ratio(stream_len: int, index: KeyframeIndex) -> float:
    """Stream length divided by the number of retained frames."""
    k = len(index)
    if k == 0:
        raise EmptyStreamError("compression ratio of an empty index is undefined")
    if stream_len < k:
        raise ValueError(f"stream_len ({stream_len}) is smaller than the index ({k})")
    return stream_len / k
