"""Overflow-safe elementwise helpers shared across modules."""

import numpy as np


def _as_float(z):
    scalar = np.ndim(z) == 0
    return np.asarray(z, dtype=float), scalar


def softplus(z):
    """log(1 + exp(z)) computed as max(z, 0) + log1p(exp(-|z|))."""
    z, scalar = _as_float(z)
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return float(out) if scalar else out


def softplus_inv(y):
    """Inverse of softplus on y > 0: y + log(-expm1(-y))."""
    y, scalar = _as_float(y)
    if np.any(y <= 0.0):
        raise ValueError("softplus_inv requires positive input")
    out = y + np.log(-np.expm1(-y))
    return float(out) if scalar else out


def sigmoid(z):
    """Logistic function, stable for large |z|."""
    z, scalar = _as_float(z)
    out = np.exp(-(np.maximum(-z, 0.0) + np.log1p(np.exp(-np.abs(z)))))
    return float(out) if scalar else out


def logsumexp(a, axis=None):
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out
