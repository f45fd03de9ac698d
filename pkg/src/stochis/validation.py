"""Input validation helpers shared across the package.

Configuration points are plain float arrays: a single point is a 1-D array
of length ``d`` and a batch is a 2-D array of shape ``(k, d)``.  The helpers
here normalise user input to those conventions and fail loudly on shape or
finiteness problems, in the spirit of scikit-learn's ``check_array``.
"""

import numpy as np

__all__ = [
    "as_point",
    "as_point_matrix",
    "as_vector",
    "check_positive",
    "check_count",
]


def as_point_matrix(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a float matrix of shape (k, d).

    Accepts a single point (1-D, promoted to one row), a matrix, or a bare
    scalar (treated as one point in one dimension).  Raises ``ValueError``
    on dimension mismatch or non-finite entries.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1)
    elif X.ndim != 2:
        raise ValueError(f"{name} must be at most 2-dimensional, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has dimension {X.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def as_point(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a single point, a float vector of length d."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"{name} has dimension {x.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def as_vector(y, length: int | None = None, name: str = "y") -> np.ndarray:
    """Coerce ``y`` to a finite 1-D float array, optionally of fixed length."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if length is not None and y.shape[0] != length:
        raise ValueError(f"{name} has length {y.shape[0]}, expected {length}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite entries")
    return y


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_count(value: int, name: str, minimum: int = 0) -> int:
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value
