"""Residual MLP query adapter.

Maps a query embedding from the text-encoder space into the image-embedding
space::

    y = normalize(x + W2 @ tanh(W1 @ x + b1) + b2)

with ``W1`` of shape ``(h, d)`` and ``W2`` of shape ``(d, h)``. With ``W2``
and ``b2`` at zero the adapter is the identity. Training minimizes the mean
cosine distance ``1 - y . target`` by full-batch gradient descent using
analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_embeddings
from .core import UNIT_ATOL, normalize
from .exceptions import DimensionMismatchError, TrainingDivergedError

__all__ = [
    "AdapterConfig",
    "AdapterModel",
    "ResidualMLPAdapter",
    "TrainPair",
    "TrainResult",
    "adapter_forward",
    "adapter_loss",
    "adapter_train",
    "gradient_check",
]

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True, eq=False)
class AdapterModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        h, d = np.shape(self.W1)
        shapes = {"b1": (h,), "W2": (d, h), "b2": (d,)}
        for name, shape in shapes.items():
            if np.shape(getattr(self, name)) != shape:
                raise DimensionMismatchError(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")
        for name in PARAM_NAMES:
            a = np.array(getattr(self, name), dtype=np.float64)
            if not np.isfinite(a).all():
                raise ValueError(f"{name} contains non-finite values")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def zeros(cls, d: int, h: int) -> "AdapterModel":
        return cls(np.zeros((h, d)), np.zeros(h), np.zeros((d, h)), np.zeros(d))

    @classmethod
    def init(cls, d: int, h: int, seed=0) -> "AdapterModel":
        """Random first layer, zero second layer: identity map at start."""
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((h, d)) / np.sqrt(d), np.zeros(h), np.zeros((d, h)), np.zeros(d))

    @classmethod
    def from_vector(cls, theta: np.ndarray, d: int, h: int) -> "AdapterModel":
        sizes = [h * d, h, d * h, d]
        parts = np.split(np.asarray(theta, dtype=np.float64), np.cumsum(sizes)[:-1])
        return cls(parts[0].reshape(h, d), parts[1], parts[2].reshape(d, h), parts[3])

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def n_params(self) -> int:
        d, h = self.d, self.hidden_dim
        return d * h + h + h * d + d

    def to_vector(self) -> np.ndarray:
        """Parameters flattened row-major in the order W1, b1, W2, b2."""
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])

    def __eq__(self, other):
        if not isinstance(other, AdapterModel):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in PARAM_NAMES)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrainPair:
    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        for name in ("source", "target"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.ndim != 1 or abs(float(np.linalg.norm(v)) - 1.0) > UNIT_ATOL:
                v = normalize(v)
            object.__setattr__(self, name, v)


def _params(model) -> tuple:
    if isinstance(model, AdapterModel):
        return model.W1, model.b1, model.W2, model.b2
    return model


def _forward(model, X: np.ndarray):
    W1, b1, W2, b2 = _params(model)
    a = np.tanh(X @ W1.T + b1)
    u = X + a @ W2.T + b2
    n = np.linalg.norm(u, axis=1, keepdims=True)
    return u / n, a, n


def _check_inputs(model: AdapterModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.d:
        raise DimensionMismatchError(f"adapter input dimension is {model.d}, got {X.shape[-1]}")
    return X


def adapter_forward(model: AdapterModel, x) -> np.ndarray:
    """Adapt one embedding (1-d) or a batch of embeddings (2-d)."""
    x = _check_inputs(model, x)
    if x.ndim == 1:
        return _forward(model, x[None, :])[0][0]
    return _forward(model, x)[0]


def _stack_pairs(batch: Sequence[TrainPair]):
    if len(batch) == 0:
        raise ValueError("batch must contain at least one pair")
    return np.stack([p.source for p in batch]), np.stack([p.target for p in batch])


def _loss_and_grad(model, X: np.ndarray, T: np.ndarray):
    """Loss and gradients as a tuple ordered like ``PARAM_NAMES``."""
    W2 = _params(model)[2]
    Y, a, n = _forward(model, X)
    B = X.shape[0]
    loss = float(np.mean(1.0 - np.einsum("ij,ij->i", Y, T)))
    g = -T / B  # dL/dY
    # back through y = u / |u|
    du = (g - Y * np.einsum("ij,ij->i", Y, g)[:, None]) / n
    dz = (du @ W2) * (1.0 - a * a)
    return loss, (dz.T @ X, dz.sum(axis=0), du.T @ a, du.sum(axis=0))


def adapter_loss(model: AdapterModel, batch: Sequence[TrainPair]) -> float:
    """Mean cosine distance between adapted sources and targets, in [0, 2]."""
    X, T = _stack_pairs(batch)
    X = _check_inputs(model, X)
    if T.shape[1] != model.d:
        raise DimensionMismatchError(f"target dimension {T.shape[1]} != adapter dimension {model.d}")
    Y = _forward(model, X)[0]
    return float(np.mean(1.0 - np.einsum("ij,ij->i", Y, T)))


def adapter_gradients(model: AdapterModel, batch: Sequence[TrainPair]) -> dict:
    X, T = _stack_pairs(batch)
    grads = _loss_and_grad(model, _check_inputs(model, X), T)[1]
    return dict(zip(PARAM_NAMES, grads))


@dataclass(frozen=True)
class AdapterConfig:
    hidden_dim: int = 64
    learning_rate: float = 1.0
    epochs: int = 3000
    seed: int = 0
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0.0 <= self.holdout_fraction <= 0.5:
            raise ValueError("holdout_fraction must lie in [0, 0.5]")


@dataclass(frozen=True, eq=False)
class TrainResult:
    model: AdapterModel
    train_loss_curve: list = field(repr=False)
    final_train_loss: float
    holdout_loss: float | None
    initial_model: AdapterModel = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "train_loss_curve": list(self.train_loss_curve),
            "final_train_loss": self.final_train_loss,
            "holdout_loss": self.holdout_loss,
            "hidden_dim": self.model.hidden_dim,
            "d": self.model.d,
            "n_params": self.model.n_params,
        }


def split_holdout(n: int, holdout_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([int(seed), 1])
    perm = rng.permutation(n)
    n_hold = min(int(round(holdout_fraction * n)), n - 1)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def _descend(model: AdapterModel, X, T, learning_rate, epochs):
    params = [np.array(p) for p in _params(model)]
    curve = []
    for epoch in range(epochs):
        loss, grads = _loss_and_grad(params, X, T)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch)
        curve.append(loss)
        for p, g in zip(params, grads):
            p -= learning_rate * g
        if not all(np.isfinite(p).all() for p in params):
            raise TrainingDivergedError(epoch)
    return AdapterModel(*params), curve


def adapter_train(pairs: Sequence[TrainPair], config: AdapterConfig = AdapterConfig()) -> TrainResult:
    """Train an adapter by full-batch gradient descent on a seeded train/holdout split."""
    if len(pairs) < 2:
        raise ValueError("adapter_train needs at least 2 pairs")
    X, T = _stack_pairs(pairs)
    if X.shape[1] != T.shape[1]:
        raise DimensionMismatchError("source and target dimensions differ")
    train_idx, hold_idx = split_holdout(len(pairs), config.holdout_fraction, config.seed)
    init = AdapterModel.init(X.shape[1], config.hidden_dim, seed=config.seed)
    model, curve = _descend(init, X[train_idx], T[train_idx], config.learning_rate, config.epochs)
    final = _mean_cosine_distance(model, X[train_idx], T[train_idx])
    holdout = _mean_cosine_distance(model, X[hold_idx], T[hold_idx]) if hold_idx.size else None
    return TrainResult(model, curve, final, holdout, init)


def _mean_cosine_distance(model, X, T) -> float:
    Y = _forward(model, X)[0]
    return float(np.mean(1.0 - np.einsum("ij,ij->i", Y, T)))


def gradient_check(model: AdapterModel, batch: Sequence[TrainPair], epsilon: float = 1e-5, floor: float = 1e-8) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The relative error of one parameter is ``|g_a - g_n| / max(|g_a| + |g_n|, floor)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    X, T = _stack_pairs(batch)
    X = _check_inputs(model, X)
    _, grads = _loss_and_grad(model, X, T)
    analytic = np.concatenate([g.ravel() for g in grads])
    theta = model.to_vector()
    d, h = model.d, model.hidden_dim
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + epsilon
        up = _mean_cosine_distance(AdapterModel.from_vector(theta, d, h), X, T)
        theta[i] = old - epsilon
        down = _mean_cosine_distance(AdapterModel.from_vector(theta, d, h), X, T)
        theta[i] = old
        numeric[i] = (up - down) / (2 * epsilon)
    err = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(err.max())


class ResidualMLPAdapter(TransformerMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`adapter_train`.

    ``fit(X, Y)`` learns to map rows of ``X`` (query space) onto rows of
    ``Y`` (index space); ``transform(X)`` returns adapted unit vectors.
    """

    def __init__(self, hidden_dim=64, learning_rate=1.0, epochs=3000, random_state=0, holdout_fraction=0.2):
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.random_state = random_state
        self.holdout_fraction = holdout_fraction

    def fit(self, X, Y):
        X = check_embeddings(X)
        Y = check_embeddings(Y, dim=X.shape[1], name="Y")
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        config = AdapterConfig(
            hidden_dim=self.hidden_dim,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.random_state,
            holdout_fraction=self.holdout_fraction,
        )
        result = adapter_train([TrainPair(x, y) for x, y in zip(X, Y)], config)
        self.model_ = result.model
        self.train_loss_curve_ = np.asarray(result.train_loss_curve)
        self.holdout_loss_ = result.holdout_loss
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_embeddings(X, dim=self.n_features_in_)
        return adapter_forward(self.model_, X)

    def score(self, X, Y):
        """Mean cosine similarity between adapted ``X`` and ``Y``."""
        Y = check_embeddings(Y, dim=self.n_features_in_, name="Y")
        return float(np.mean(np.einsum("ij,ij->i", self.transform(X), Y)))
