"""Uniform quantization of control sequences into discrete action tokens.

Each of the 64 steps contributes two tokens, acceleration first and then
curvature, for 128 tokens per trajectory. Cells are half-open and uniform;
token ``k`` decodes to the cell center ``lo + (k + 0.5) * (hi - lo) / bins``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import HORIZON, ValidationError, check_controls_array, check_horizon, check_token_array
from .dynamics import ControlSequence

__all__ = ["QuantizerSpec", "ActionTokenSeq", "quantize", "dequantize", "ActionTokenizer"]


@dataclass(frozen=True)
class QuantizerSpec:
    a_lo: float = -10.0
    a_hi: float = 10.0
    kappa_lo: float = -0.2
    kappa_hi: float = 0.2
    a_bins: int = 256
    kappa_bins: int = 256

    def __post_init__(self):
        if not (self.a_lo < self.a_hi and self.kappa_lo < self.kappa_hi):
            raise ValidationError("quantizer ranges need lo < hi", field="range")
        if self.a_bins < 2 or self.kappa_bins < 2:
            raise ValidationError("need at least 2 bins per channel", field="bins")

    @property
    def lo(self):
        return np.array([self.a_lo, self.kappa_lo])

    @property
    def hi(self):
        return np.array([self.a_hi, self.kappa_hi])

    @property
    def bins(self):
        return np.array([self.a_bins, self.kappa_bins])

    @property
    def width(self):
        return (self.hi - self.lo) / self.bins


class ActionTokenSeq(NamedTuple):
    """128 interleaved tokens plus how many inputs were clamped into range."""

    tokens: np.ndarray
    saturated: int = 0

    def to_dict(self):
        return {"tokens": self.tokens.tolist(), "saturated": int(self.saturated)}


def _quantize_array(values, spec):
    # values: (..., 2) with channel last
    lo, hi, bins = spec.lo, spec.hi, spec.bins
    clamped = np.clip(values, lo, hi)
    saturated = int(np.count_nonzero(clamped != values))
    idx = np.floor((clamped - lo) / spec.width).astype(np.int64)
    return np.minimum(idx, bins - 1), saturated


def quantize(controls, spec=None):
    spec = spec or QuantizerSpec()
    idx, saturated = _quantize_array(controls.controls, spec)
    return ActionTokenSeq(idx.ravel(), saturated)


def dequantize(tokens, spec=None, dt=0.1):
    spec = spec or QuantizerSpec()
    if isinstance(tokens, ActionTokenSeq):
        tokens = tokens.tokens
    tokens = np.asarray(tokens)
    check_horizon(tokens.size, 2 * HORIZON, name="tokens")
    pairs = tokens.reshape(-1, 2)
    bad = np.argwhere((pairs < 0) | (pairs >= spec.bins))
    if bad.size:
        step, channel = bad[0]
        flat = int(2 * step + channel)
        raise ValidationError(
            f"token {int(pairs[step, channel])} at index {flat} is outside [0, {spec.bins[channel]})",
            index=flat, channel="a" if channel == 0 else "kappa",
        )
    return ControlSequence(spec.lo + (pairs + 0.5) * spec.width, dt=dt)


class ActionTokenizer(TransformerMixin, BaseEstimator):
    """sklearn transformer: interleaved control rows <-> token rows."""

    def __init__(self, a_range=(-10.0, 10.0), kappa_range=(-0.2, 0.2), bins=256):
        self.a_range = a_range
        self.kappa_range = kappa_range
        self.bins = bins

    def _spec(self):
        bins = self.bins if np.ndim(self.bins) else (self.bins, self.bins)
        return QuantizerSpec(*self.a_range, *self.kappa_range, int(bins[0]), int(bins[1]))

    def fit(self, X, y=None):
        X = check_controls_array(X)
        self.spec_ = self._spec()
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_controls_array(X)
        idx, self.saturated_ = _quantize_array(X.reshape(len(X), -1, 2), self.spec_)
        return idx.reshape(len(X), -1)

    def inverse_transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_token_array(X, self.spec_.bins)
        return np.vstack([dequantize(row, self.spec_).to_row() for row in X])
