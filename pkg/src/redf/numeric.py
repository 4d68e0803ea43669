"""Deterministic numeric kernel shared by every stochastic component.

Dense arrays are plain float64 numpy arrays. The kernel adds strict shape
checking on top of numpy so that model code fails loudly with ShapeError
instead of silently broadcasting. The random generator is PCG64: the
output stream for a given 64-bit seed is identical on every platform,
which makes it part of the reproducibility contract.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

Matrix = np.ndarray  # 2-D float64, row-major

DEFAULT_SEED = 42


def make_rng(seed: int = DEFAULT_SEED) -> np.random.Generator:
    """Seeded PCG64 generator; same seed gives the same stream everywhere."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for worker `index`, derived as seed XOR index."""
    return make_rng((int(seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF)


def _as2d(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = _as2d(a, "a")
    b = _as2d(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return a @ b


def add(a: Matrix, b: Matrix) -> Matrix:
    a = _as2d(a, "a")
    b = _as2d(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return a + b


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    a = _as2d(a, "a")
    b = _as2d(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: {a.shape} vs {b.shape}")
    return a * b


def transpose(a: Matrix) -> Matrix:
    return np.ascontiguousarray(_as2d(a, "a").T)


def scale(a: Matrix, factor: float) -> Matrix:
    return _as2d(a, "a") * float(factor)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, overflow-safe for |x| up to and beyond 700."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def sigmoid_deriv(y: np.ndarray) -> np.ndarray:
    """Derivative of sigmoid expressed in terms of its output y."""
    return y * (1.0 - y)


def tanh_deriv(y: np.ndarray) -> np.ndarray:
    """Derivative of tanh expressed in terms of its output y."""
    return 1.0 - y * y


def glorot_init(rng: np.random.Generator, rows: int, cols: int) -> Matrix:
    """Uniform init on +-sqrt(6/(rows+cols))."""
    if rows <= 0 or cols <= 0:
        raise ShapeError(f"glorot_init: dims must be positive, got {rows}x{cols}")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))
