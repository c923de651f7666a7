"""Input validation helpers shared by the estimators and solvers."""
from __future__ import annotations

import numbers

import numpy as np


def check_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got {M.ndim}-D")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite values")
    return M


def check_weights(W, m: int) -> np.ndarray:
    """Return the diagonal of a positive diagonal weight matrix as a vector.

    Accepts ``None`` (identity), a length-``m`` vector or an ``m x m``
    diagonal matrix.
    """
    if W is None:
        return np.ones(m)
    W = np.asarray(W, dtype=float)
    if W.ndim == 2:
        if W.shape != (m, m):
            raise ValueError(f"weight matrix must be {m}x{m}, got {W.shape}")
        if np.any(W - np.diag(np.diag(W))):
            raise ValueError("weight matrix must be diagonal")
        W = np.diag(W)
    if W.shape != (m,):
        raise ValueError(f"expected {m} weights, got shape {W.shape}")
    if np.any(~np.isfinite(W)) or np.any(W <= 0):
        raise ValueError("weights must be positive and finite")
    return W


def check_probability(p, name: str, closed: bool = False) -> float:
    if not isinstance(p, numbers.Real):
        raise TypeError(f"{name} must be a real number")
    ok = 0 <= p <= 1 if closed else 0 < p < 1
    if not ok:
        raise ValueError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}, got {p}")
    return float(p)


def check_random_state(seed) -> np.random.Generator:
    """Normalise ``None``/int/SeedSequence/Generator to a ``Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
