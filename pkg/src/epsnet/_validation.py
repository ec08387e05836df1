"""Input validation helpers shared by the estimators."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .core import FrameStream, normalize_rows
from .exceptions import DimensionMismatchError


def check_embeddings(X, *, dim=None, name="X"):
    """Validate an ``(n, d)`` embedding matrix and return unit-norm float64 rows."""
    if isinstance(X, FrameStream):
        X = X.embeddings
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True, input_name=name)
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatchError(f"{name} has dimension {X.shape[1]}, expected {dim}")
    return normalize_rows(X)


def check_tau(tau):
    if isinstance(tau, bool) or not isinstance(tau, numbers.Real):
        raise TypeError(f"tau must be a real number, got {type(tau).__name__}")
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(
            f"tau must lie strictly between 0 and 1, got {tau}: tau >= 1 keeps every frame "
            "and tau <= 0 keeps only the first frame"
        )
    return tau


def check_n_frames(k, n_samples):
    if isinstance(k, bool) or not isinstance(k, numbers.Integral):
        raise TypeError(f"n_frames must be an integer, got {type(k).__name__}")
    if not 1 <= k <= n_samples:
        raise ValueError(f"n_frames must satisfy 1 <= n_frames <= {n_samples}, got {k}")
    return int(k)
