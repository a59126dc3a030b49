"""Input validation helpers shared by the estimator classes."""
import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .core import Observations


def check_wages(X, name="wages"):
    """Accept a 1-d array or a single-column 2-d array of positive wages."""
    X = check_array(X, ensure_2d=False, dtype=float, input_name=name)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must have exactly one column, got {X.shape[1]}")
        X = X[:, 0]
    if not np.all(X > 0):
        raise ValueError(f"{name} must be strictly positive")
    return X


def check_spells(y, name="elapsed spells"):
    y = check_array(y, ensure_2d=False, dtype=float, input_name=name)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    if not np.all(y >= 0):
        raise ValueError(f"{name} must be non-negative")
    return y


def check_wages_spells(X, y, censored=None, sample_weight=None):
    """Validate estimator inputs and bundle them as :class:`Observations`."""
    w = check_wages(X)
    t = check_spells(y)
    check_consistent_length(w, t)
    if censored is not None:
        censored = np.asarray(censored, bool)
        check_consistent_length(w, censored)
    if sample_weight is not None:
        sample_weight = check_array(sample_weight, ensure_2d=False, dtype=float,
                                    input_name="sample_weight")
        check_consistent_length(w, sample_weight)
    return Observations(w, t, censored, sample_weight)


def as_observations(obj):
    if isinstance(obj, Observations):
        return obj
    return Observations.from_records(obj)
