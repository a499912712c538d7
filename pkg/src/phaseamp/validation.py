"""Input validation helpers shared across the package."""

import numpy as np


def as_float_array(x, name="array", ndim=None):
    """Convert to a float64 ndarray and check finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


def check_in_unit_interval(value, name):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_trajectory_matrix(data, name="trajectory"):
    """Trajectories are (steps, channels) float arrays with at least one row."""
    arr = as_float_array(data, name=name, ndim=2)
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one step")
    return arr
