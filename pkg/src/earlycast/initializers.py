"""Weight initializers: Xavier uniform, orthogonal, He normal."""
from __future__ import annotations

import numpy as np


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """(fan_out, fan_in) matrix, i.i.d. uniform on +-sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fans must be positive")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """(rows, cols) matrix with orthonormal rows or columns.

    QR decomposition of a standard-normal matrix, columns sign-corrected by
    the diagonal of R so the distribution is uniform over the orthogonal
    group. The smaller dimension is the orthonormal one.
    """
    if rows <= 0 or cols <= 0:
        raise ValueError("dimensions must be positive")
    n, m = (rows, cols) if rows >= cols else (cols, rows)
    a = rng.standard_normal((n, m))
    q, r = np.linalg.qr(a)
    q = q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)
    return q if rows >= cols else q.T


def he_normal(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    """Normal with mean 0 and standard deviation sqrt(2 / fan_in)."""
    if fan_in <= 0:
        raise ValueError("fan_in must be positive")
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
