"""Small numerically-stable helpers used throughout the package."""

import numpy as np
from scipy.special import logsumexp


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax; stable for very large score gaps."""
    v = np.asarray(v, dtype=np.float64)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v - logsumexp(v, axis=axis, keepdims=True)
