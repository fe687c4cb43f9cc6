"""Small input-validation helpers shared across the package."""

import numpy as np


def as_finite_vector(x, name="x"):
    """Coerce to a finite 1-d float64 array; raise ValueError otherwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"{name} contains a non-finite entry at index {bad}")
    return arr


def as_finite_matrix(x, name="X"):
    """Coerce to a finite 2-d float64 array; raise ValueError otherwise."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        row = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise ValueError(f"{name} contains a non-finite entry in row {row}")
    return arr


def check_positive(value, name, allow_inf=False):
    kind = "positive number" if allow_inf else "positive finite number"
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a {kind}, got {value!r}") from None
    if np.isnan(value) or value <= 0 or (not allow_inf and np.isinf(value)):
        raise ValueError(f"{name} must be a {kind}, got {value}")
    return value


def check_flip_probability(p, name="p"):
    """Flip probabilities live in [0, 0.5); 0.5 degenerates the weighted loss."""
    p = float(p)
    if not 0.0 <= p < 0.5:
        raise ValueError(f"{name} must lie in [0, 0.5), got {p}")
    return p


def check_binary(z, name="z"):
    """Require every entry of z to be exactly 0 or 1."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all((z == 0.0) | (z == 1.0)):
        bad = int(np.flatnonzero((z != 0.0) & (z != 1.0))[0])
        raise ValueError(f"{name} must be binary (0/1); entry {bad} is {z[bad]}")
    return z
