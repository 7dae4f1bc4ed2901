"""Input validation helpers shared by the estimators and the step functions."""

import math

import numpy as np
from sklearn.utils.validation import check_array


def check_positive(value, name, *, allow_zero=False):
    """Return ``value`` as float, raising ``ValueError`` unless it is positive and finite."""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if value < 0.0 or (value == 0.0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value!r}")
    return value


def check_step(dt):
    return check_positive(dt, "dt")


def check_finite(*values, what="state", step=None):
    for v in values:
        if not math.isfinite(v):
            where = "" if step is None else f" at step {step}"
            raise FloatingPointError(f"non-finite {what}{where}")


def check_signal_matrix(X, n_columns, name="X"):
    """Validate a (n_samples, n_columns) float array of time-aligned signals."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                    input_name=name)
    if X.shape[1] != n_columns:
        raise ValueError(f"{name} must have {n_columns} columns, got {X.shape[1]}")
    return X


def check_signal_vector(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x
