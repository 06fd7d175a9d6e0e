"""Input validation helpers shared by the estimators and functional API."""

import numpy as np
from sklearn.utils import check_array

HORIZON = 64
DT = 0.1


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant.

    ``context`` carries machine-readable details (index, channel, ...) that the
    CLI forwards in its error line.
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


def wrap_angle(theta):
    """Map angles to (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    # mod lands on -pi for odd multiples of pi; the half-open interval wants +pi
    return np.where(wrapped <= -np.pi, np.pi, wrapped)


def check_finite(arr, name):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0].tolist()
        raise ValidationError(f"{name} contains non-finite values", field=name, index=bad)
    return arr


def check_dt(dt):
    if not (np.isfinite(dt) and dt > 0):
        raise ValidationError("dt must be positive and finite", field="dt", value=dt)
    return float(dt)


def check_horizon(n, expected=HORIZON, name="sequence"):
    if n != expected:
        raise ValidationError(
            f"{name} must have exactly {expected} steps, got {n}",
            field=name, expected=expected, got=n,
        )


def check_trajectory_array(X):
    """Validate a batch of flattened trajectories.

    Each row is ``[v0, x1, y1, yaw1, ..., x64, y64, yaw64]``.
    """
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != 1 + 3 * HORIZON:
        raise ValidationError(
            f"expected {1 + 3 * HORIZON} columns (v0 + 64 x/y/yaw), got {X.shape[1]}",
            field="X", got=X.shape[1],
        )
    return X


def check_controls_array(X):
    """Validate a batch of flattened controls, interleaved ``[a1, k1, a2, k2, ...]``."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != 2 * HORIZON:
        raise ValidationError(
            f"expected {2 * HORIZON} columns (interleaved a/kappa), got {X.shape[1]}",
            field="X", got=X.shape[1],
        )
    return X


def check_token_array(X, bins):
    X = check_array(X, dtype=None, ensure_all_finite=True)
    if X.shape[1] != 2 * HORIZON:
        raise ValidationError(
            f"expected {2 * HORIZON} tokens per row, got {X.shape[1]}", field="X", got=X.shape[1]
        )
    if not np.all(np.equal(np.mod(X, 1), 0)):
        raise ValidationError("tokens must be integers", field="X")
    return X.astype(np.int64)
