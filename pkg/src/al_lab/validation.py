"""Input validation helpers.

Small, strict converters used at every public entry point so the numeric
code can assume well-formed float64/int64 arrays.
"""

from __future__ import annotations

import numpy as np


def check_feature_matrix(X, n_features: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 2-D array, optionally checking width."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"{name} has {X.shape[1]} features, expected {n_features}"
        )
    return X


def check_label_vector(y, n_classes: int | None = None, n_samples: int | None = None) -> np.ndarray:
    """Coerce to int64 class ids, checking range against ``n_classes``."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        as_int = y.astype(np.int64)
        if not np.array_equal(as_int, y):
            raise ValueError("labels must be integer class ids")
        y = as_int
    y = y.astype(np.int64)
    if n_samples is not None and len(y) != n_samples:
        raise ValueError(f"labels have length {len(y)}, expected {n_samples}")
    if y.size and y.min() < 0:
        raise ValueError("labels must be nonnegative class ids")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(
            f"label {int(y.max())} out of range for {n_classes} classes"
        )
    return y


def check_index_array(indices, size: int, name: str = "indices") -> np.ndarray:
    """Coerce to int64 indices valid for an axis of length ``size``."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ValueError(f"{name} out of range for size {size}")
    if len(np.unique(idx)) != len(idx):
        raise ValueError(f"{name} contains duplicates")
    return idx


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator, an int seed, or None (fresh entropy)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_fraction(value: float, name: str, *, inclusive_top: bool = False) -> float:
    """Validate a fraction in (0, 1) or (0, 1]."""
    value = float(value)
    top_ok = value <= 1.0 if inclusive_top else value < 1.0
    if not (np.isfinite(value) and 0.0 < value and top_ok):
        bound = "(0, 1]" if inclusive_top else "(0, 1)"
        raise ValueError(f"{name} must lie in {bound}, got {value}")
    return value
