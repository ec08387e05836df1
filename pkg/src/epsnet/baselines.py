"""Offline frame-selection baselines evaluated at a matched frame count.

Each selector is a scikit-learn style estimator: ``fit(X)`` on an
``(n_frames, d)`` embedding matrix sets ``selected_indices_`` (sorted stream
positions, exactly ``n_frames`` of them). The ``*_select`` functions wrap the
estimators for :class:`SelectionRequest` inputs and return
:class:`~epsnet.core.KeyframeIndex` objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_embeddings, check_n_frames
from .core import FrameStream, KeyframeIndex

__all__ = [
    "FarthestPointSelector",
    "KMeansSelector",
    "RandomSelector",
    "SelectionRequest",
    "UniformSelector",
    "farthest_point_select",
    "kmeans_select",
    "random_select",
    "uniform_select",
]


class _FrameSelector(BaseEstimator):
    def fit(self, X, y=None):
        X = check_embeddings(X)
        k = check_n_frames(self.n_frames, X.shape[0])
        self.n_features_in_ = X.shape[1]
        self.n_frames_seen_ = X.shape[0]
        self.selected_indices_ = np.sort(np.asarray(self._select(X, k), dtype=np.int64))
        return self

    def get_support(self, indices=False):
        check_is_fitted(self, "selected_indices_")
        if indices:
            return self.selected_indices_.copy()
        mask = np.zeros(self.n_frames_seen_, dtype=bool)
        mask[self.selected_indices_] = True
        return mask

    def fit_predict(self, X, y=None):
        return self.fit(X).get_support()


class UniformSelector(_FrameSelector):
    """Every n-th frame, endpoints included.

    Positions are ``round(j * (N - 1) / (k - 1))`` for ``j = 0..k-1`` with
    halves rounded up; ``k = 1`` picks frame 0.
    """

    def __init__(self, n_frames=1):
        self.n_frames = n_frames

    def _select(self, X, k):
        n = X.shape[0]
        if k == 1:
            return [0]
        j = np.arange(k, dtype=np.int64)
        # exact integer round-half-up of j * (n - 1) / (k - 1)
        return (2 * j * (n - 1) + (k - 1)) // (2 * (k - 1))


class RandomSelector(_FrameSelector):
    def __init__(self, n_frames=1, random_state=0):
        self.n_frames = n_frames
        self.random_state = random_state

    def _select(self, X, k):
        rng = np.random.default_rng(self.random_state)
        return rng.choice(X.shape[0], size=k, replace=False)


class FarthestPointSelector(_FrameSelector):
    """Greedy k-center (Gonzalez) selection under cosine distance.

    Starts from frame 0 and repeatedly adds the frame whose distance
    ``1 - similarity`` to the nearest selected frame is largest. Ties go to
    the earliest frame. The selection for ``k - 1`` is a prefix (in pick
    order, see ``pick_order_``) of the selection for ``k``.
    """

    def __init__(self, n_frames=1):
        self.n_frames = n_frames

    def _select(self, X, k):
        min_dist = 1.0 - X @ X[0]
        min_dist[0] = -np.inf
        order = [0]
        for _ in range(1, k):
            i = int(np.argmax(min_dist))
            order.append(i)
            np.minimum(min_dist, 1.0 - X @ X[i], out=min_dist)
            min_dist[i] = -np.inf
        self.pick_order_ = np.asarray(order, dtype=np.int64)
        return order


class KMeansSelector(_FrameSelector):
    """Spherical k-means, then the frame nearest each centroid.

    Centroids are initialized with k-means++ (distance ``1 - cos``, sampling
    proportional to squared distance) from ``random_state`` and renormalized
    after every update. Iteration stops when assignments no longer change or
    after ``max_iter`` rounds. A cluster that ends up empty is re-seeded at
    the frame farthest from its own centroid.

    Snapping: centroids are visited in order and each takes its nearest frame
    not already claimed, so the result always has exactly ``n_frames``
    distinct frames.
    """

    def __init__(self, n_frames=1, random_state=0, max_iter=100):
        self.n_frames = n_frames
        self.random_state = random_state
        self.max_iter = max_iter

    def _init_centroids(self, X, k, rng):
        n = X.shape[0]
        chosen = [int(rng.integers(n))]
        closest = np.clip(1.0 - X @ X[chosen[0]], 0.0, None)
        for _ in range(1, k):
            w = closest**2
            w[chosen] = 0.0
            total = w.sum()
            if total > 0:
                i = int(rng.choice(n, p=w / total))
            else:
                # every remaining frame duplicates a chosen one
                rest = np.setdiff1d(np.arange(n), chosen)
                i = int(rng.choice(rest))
            chosen.append(i)
            np.minimum(closest, np.clip(1.0 - X @ X[i], 0.0, None), out=closest)
        return X[chosen].copy()

    def _select(self, X, k):
        rng = np.random.default_rng(self.random_state)
        C = self._init_centroids(X, k, rng)
        labels = None
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            S = X @ C.T
            new_labels = np.argmax(S, axis=1)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            C = self._update(X, S, labels, k)
        self.cluster_centers_ = C
        self.labels_ = labels
        self.n_iter_ = n_iter
        return self._snap(X, C)

    @staticmethod
    def _update(X, S, labels, k):
        sums = np.zeros((k, X.shape[1]))
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=k)
        own = S[np.arange(X.shape[0]), labels]
        taken = set()
        for j in np.flatnonzero(counts == 0):
            for i in np.argsort(own, kind="stable"):
                if i not in taken:
                    taken.add(int(i))
                    sums[j] = X[i]
                    break
        norms = np.linalg.norm(sums, axis=1)
        degenerate = norms <= 1e-12
        if degenerate.any():
            # members cancel out exactly; fall back to the first member
            for j in np.flatnonzero(degenerate):
                sums[j] = X[np.flatnonzero(labels == j)[0]]
            norms = np.linalg.norm(sums, axis=1)
        return sums / norms[:, None]

    @staticmethod
    def _snap(X, C):
        S = X @ C.T
        claimed = np.zeros(X.shape[0], dtype=bool)
        picks = []
        for j in range(C.shape[0]):
            i = int(np.argmax(S[:, j]))
            if claimed[i]:
                for i in np.argsort(-S[:, j], kind="stable"):
                    if not claimed[i]:
                        break
                i = int(i)
            claimed[i] = True
            picks.append(i)
        return picks


@dataclass(frozen=True)
class SelectionRequest:
    frames: FrameStream
    k: int
    seed: int = 0

    def __post_init__(self):
        check_n_frames(self.k, len(self.frames))


def _run(selector, req: SelectionRequest, method: str, **params) -> KeyframeIndex:
    selector.fit(req.frames.embeddings)
    return KeyframeIndex.from_positions(req.frames, selector.selected_indices_, method, k=req.k, **params)


def kmeans_select(req: SelectionRequest) -> KeyframeIndex:
    return _run(KMeansSelector(req.k, random_state=req.seed), req, "kmeans", seed=req.seed)


def farthest_point_select(req: SelectionRequest) -> KeyframeIndex:
    return _run(FarthestPointSelector(req.k), req, "fp")


def uniform_select(req: SelectionRequest) -> KeyframeIndex:
    return _run(UniformSelector(req.k), req, "uniform")


def random_select(req: SelectionRequest) -> KeyframeIndex:
    return _run(RandomSelector(req.k, random_state=req.seed), req, "random", seed=req.seed)


SELECTORS = {
    "kmeans": kmeans_select,
    "fp": farthest_point_select,
    "uniform": uniform_select,
    "random": random_select,
}
