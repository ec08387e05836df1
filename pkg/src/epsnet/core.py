"""Domain types and exact dense-vector primitives.

Embeddings are plain ``float64`` numpy vectors of unit length. A stream of
frames is stored column-wise in :class:`FrameStream` (ids, timestamps and an
``(N, d)`` embedding matrix) and can be iterated as :class:`FrameRecord`
objects when per-frame access is more natural.

Determinism contract: every similarity in this package is an inner product
computed by numpy's ``dot``/``matmul``. For a fixed platform and numpy build
these are bit-reproducible from run to run, and ``cosine(a, b)`` equals
``cosine(b, a)`` exactly because the elementwise products are identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    IndexMismatchError,
    NormalizationError,
    StreamCorruptError,
)

#: Norm below which a vector cannot be normalized.
MIN_NORM = 1e-12
#: Rows whose norm is within this distance of 1 are stored as given.
UNIT_ATOL = 1e-6

METHODS = ("novelty", "kmeans", "fp", "uniform", "random", "full")


def normalize(raw) -> np.ndarray:
    """Scale a vector to unit Euclidean norm.

    Raises
    ------
    NormalizationError
        If the norm is not above ``MIN_NORM`` or the vector is not finite.
    """
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise NormalizationError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm <= MIN_NORM:
        raise NormalizationError(f"cannot normalize vector with norm {norm!r}")
    return v / norm


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """Return ``X`` with every row at unit norm.

    Rows already unit-norm within ``UNIT_ATOL`` are left bit-identical so that
    float32 files written by :mod:`epsnet.io` survive a read/write cycle.
    """
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    bad = ~np.isfinite(norms) | (norms <= MIN_NORM)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise NormalizationError(f"row {row} has norm {norms[row]!r} and cannot be normalized")
    off = np.abs(norms - 1.0) > UNIT_ATOL
    if not off.any():
        return X
    out = X.copy()
    out[off] /= norms[off, None]
    return out


def cosine(a, b) -> float:
    """Cosine similarity of two unit embeddings (their inner product)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionMismatchError("cosine expects two 1-d embeddings")
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.dot(a, b))


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    timestamp_s: float
    embedding: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError(f"frame_id must be non-negative, got {self.frame_id}")
        if not self.timestamp_s >= 0:
            raise ValueError(f"timestamp_s must be non-negative, got {self.timestamp_s}")
        emb = np.asarray(self.embedding, dtype=np.float64)
        if emb.ndim != 1:
            raise DimensionMismatchError(f"embedding must be 1-d, got shape {emb.shape}")
        if abs(float(np.linalg.norm(emb)) - 1.0) > UNIT_ATOL:
            emb = normalize(emb)
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)

    @property
    def d(self) -> int:
        return self.embedding.shape[0]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class FrameStream:
    """An ordered sequence of frames with unit-norm embeddings.

    Parameters
    ----------
    embeddings : array-like of shape (n_frames, d)
        Raw embeddings; rows are normalized on ingest.
    frame_ids : array-like of int, optional
        Strictly increasing non-negative ids. Defaults to ``0..n-1``.
    timestamps : array-like of float, optional
        Non-decreasing seconds since stream start. Defaults to
        ``frame_ids / fps`` (``fps`` defaults to 1).
    fps : float, optional
        Nominal frame rate, kept as metadata.
    stream_id : str
        Identifier recorded in the provenance of derived indices.
    """

    def __init__(self, embeddings, frame_ids=None, timestamps=None, *, fps=None, stream_id="stream"):
        X = np.asarray(embeddings, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatchError(f"embeddings must be 2-d (n_frames, d), got shape {X.shape}")
        if X.shape[1] == 0:
            raise DimensionMismatchError("embedding dimension must be positive")
        n = X.shape[0]
        if frame_ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.asarray(frame_ids)
            if ids.shape != (n,):
                raise StreamCorruptError(f"expected {n} frame ids, got shape {ids.shape}")
            if n and not np.issubdtype(ids.dtype, np.integer):
                if not np.all(np.equal(np.mod(ids, 1), 0)):
                    raise StreamCorruptError("frame ids must be integers")
            ids = ids.astype(np.int64)
        if n:
            if ids[0] < 0:
                raise StreamCorruptError("frame ids must be non-negative", frame_id=int(ids[0]))
            steps = np.diff(ids)
            if (steps <= 0).any():
                pos = int(np.flatnonzero(steps <= 0)[0]) + 1
                raise StreamCorruptError(
                    f"frame ids must strictly increase (frame_id {ids[pos]} after {ids[pos - 1]})",
                    frame_id=int(ids[pos]),
                )
        if fps is not None and not fps > 0:
            raise ValueError(f"fps must be positive, got {fps}")
        if timestamps is None:
            ts = ids / float(fps or 1.0)
        else:
            ts = np.asarray(timestamps, dtype=np.float64)
            if ts.shape != (n,):
                raise StreamCorruptError(f"expected {n} timestamps, got shape {ts.shape}")
        if n:
            if not np.isfinite(ts).all() or ts[0] < 0:
                raise StreamCorruptError("timestamps must be finite and non-negative")
            back = np.diff(ts) < 0
            if back.any():
                pos = int(np.flatnonzero(back)[0]) + 1
                raise StreamCorruptError(
                    f"timestamps must be non-decreasing (frame_id {ids[pos]})", frame_id=int(ids[pos])
                )
            X = normalize_rows(X)
        self._X = _readonly(X)
        self._ids = _readonly(ids)
        self._ts = _readonly(ts)
        self.fps = None if fps is None else float(fps)
        self.stream_id = str(stream_id)

    @classmethod
    def from_records(cls, records: Iterable[FrameRecord], *, fps=None, stream_id="stream", d=None):
        records = list(records)
        if not records:
            if d is None:
                raise DimensionMismatchError("cannot infer dimension of an empty record list")
            return cls(np.empty((0, d)), fps=fps, stream_id=stream_id)
        d = records[0].d if d is None else d
        for r in records:
            if r.d != d:
                raise StreamCorruptError(
                    f"frame_id {r.frame_id} has dimension {r.d}, stream dimension is {d}",
                    frame_id=r.frame_id,
                )
        return cls(
            np.stack([r.embedding for r in records]),
            [r.frame_id for r in records],
            [r.timestamp_s for r in records],
            fps=fps,
            stream_id=stream_id,
        )

    @property
    def embeddings(self) -> np.ndarray:
        return self._X

    @property
    def frame_ids(self) -> np.ndarray:
        return self._ids

    @property
    def timestamps(self) -> np.ndarray:
        return self._ts

    @property
    def d(self) -> int:
        return self._X.shape[1]

    def __len__(self) -> int:
        return self._X.shape[0]

    def __getitem__(self, i: int) -> FrameRecord:
        return FrameRecord(int(self._ids[i]), float(self._ts[i]), self._X[i])

    def __iter__(self) -> Iterator[FrameRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, FrameStream):
            return NotImplemented
        return (
            np.array_equal(self._ids, other._ids)
            and np.array_equal(self._ts, other._ts)
            and np.array_equal(self._X, other._X)
        )

    __hash__ = None

    def __repr__(self):
        return f"FrameStream(stream_id={self.stream_id!r}, n_frames={len(self)}, d={self.d})"

    def take(self, positions: Sequence[int]) -> "FrameStream":
        """Sub-stream at the given positions (must be increasing)."""
        pos = np.asarray(positions, dtype=np.int64)
        return FrameStream(
            self._X[pos], self._ids[pos], self._ts[pos], fps=self.fps, stream_id=self.stream_id
        )

    def positions_of(self, frame_ids) -> np.ndarray:
        """Map frame ids to row positions, raising if any id is absent."""
        ids = np.asarray(frame_ids, dtype=np.int64)
        pos = np.searchsorted(self._ids, ids)
        ok = np.zeros(ids.shape, dtype=bool)
        inside = pos < len(self._ids)
        ok[inside] = self._ids[pos[inside]] == ids[inside]
        if not np.all(ok):
            missing = ids[~ok]
            raise IndexMismatchError(f"frame_ids not present in stream: {missing[:10].tolist()}")
        return pos


@dataclass(frozen=True)
class Provenance:
    method: str
    params: dict = field(default_factory=dict)
    source_stream: str = "stream"
    source_length: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown selection method {self.method!r}; expected one of {METHODS}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": dict(self.params),
            "source_stream": self.source_stream,
            "source_length": self.source_length,
        }


@dataclass(frozen=True, eq=False)
class KeyframeIndex:
    """An ordered subset of a stream plus how it was selected."""

    keyframes: FrameStream
    provenance: Provenance

    @classmethod
    def from_positions(cls, stream: FrameStream, positions, method: str, **params) -> "KeyframeIndex":
        pos = np.asarray(positions, dtype=np.int64)
        if pos.size and (np.diff(pos) <= 0).any():
            raise ValueError("selected positions must be strictly increasing")
        return cls(
            stream.take(pos),
            Provenance(method, params, stream.stream_id, len(stream)),
        )

    @property
    def frame_ids(self) -> np.ndarray:
        return self.keyframes.frame_ids

    @property
    def timestamps(self) -> np.ndarray:
        return self.keyframes.timestamps

    @property
    def embeddings(self) -> np.ndarray:
        return self.keyframes.embeddings

    @property
    def d(self) -> int:
        return self.keyframes.d

    @property
    def method(self) -> str:
        return self.provenance.method

    def __len__(self) -> int:
        return len(self.keyframes)

    def __iter__(self):
        return iter(self.keyframes)

    def __eq__(self, other):
        if not isinstance(other, KeyframeIndex):
            return NotImplemented
        return self.keyframes == other.keyframes and self.provenance == other.provenance

    __hash__ = None


def full_index(stream: FrameStream) -> KeyframeIndex:
    """Index that keeps every frame of ``stream``."""
    return KeyframeIndex.from_positions(stream, np.arange(len(stream)), "full")


@dataclass(frozen=True, eq=False)
class EventAnnotation:
    """A ground-truth event: a time anchor plus its text-side query embedding.

    An instant is an interval with ``t_start_s == t_end_s``. ``rerank_query``
    is the same query embedded in the second-stage (re-ranking) space, when
    one is available.
    """

    event_id: object
    sequence_id: object
    t_start_s: float
    t_end_s: float
    query: np.ndarray = field(repr=False)
    rerank_query: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        t0, t1 = float(self.t_start_s), float(self.t_end_s)
        if not (np.isfinite(t0) and np.isfinite(t1)):
            raise ValueError("event times must be finite")
        if t0 > t1:
            raise ValueError(f"event {self.event_id!r}: t_start_s {t0} > t_end_s {t1}")
        object.__setattr__(self, "t_start_s", t0)
        object.__setattr__(self, "t_end_s", t1)
        for name in ("query", "rerank_query"):
            q = getattr(self, name)
            if q is None:
                continue
            q = np.asarray(q, dtype=np.float64)
            if abs(float(np.linalg.norm(q)) - 1.0) > UNIT_ATOL:
                q = normalize(q)
            q.setflags(write=False)
            object.__setattr__(self, name, q)

    @classmethod
    def instant(cls, event_id, sequence_id, t, query, rerank_query=None):
        return cls(event_id, sequence_id, t, t, query, rerank_query)

    @property
    def d(self) -> int:
        return self.query.shape[0]

    def matches(self, timestamps, tolerance_s: float) -> np.ndarray:
        """Mask of timestamps inside ``[t_start - tol, t_end + tol]`` (inclusive)."""
        t = np.asarray(timestamps, dtype=np.float64)
        return (t >= self.t_start_s - tolerance_s) & (t <= self.t_end_s + tolerance_s)

    def __eq__(self, other):
        if not isinstance(other, EventAnnotation):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            self.event_id == other.event_id
            and self.sequence_id == other.sequence_id
            and self.t_start_s == other.t_start_s
            and self.t_end_s == other.t_end_s
            and same(self.query, other.query)
            and same(self.rerank_query, other.rerank_query)
        )

    __hash__ = None
