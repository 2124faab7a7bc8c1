"""Dense float64 matrix helpers and the seeded random stream.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order. The helpers below add the shape checks and error messages
the rest of the package relies on; the arithmetic itself is numpy's.
"""

import numpy as np

from .exceptions import ShapeError

__all__ = [
    "SeededRng",
    "add_row_broadcast",
    "as_matrix",
    "col_mean",
    "col_var",
    "derive_seed",
    "matmul",
    "randn",
    "transpose",
]

_SEED_MASK = (1 << 64) - 1


def as_matrix(a, name="matrix"):
    """Return ``a`` as a C-contiguous 2-D float64 array.

    1-D input is promoted to a single row.
    """
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} @ {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def transpose(a):
    return np.ascontiguousarray(as_matrix(a).T)


def add_row_broadcast(a, row):
    a = as_matrix(a, "a")
    row = as_matrix(row, "row")
    if row.shape != (1, a.shape[1]):
        raise ShapeError(
            f"row must have shape (1, {a.shape[1]}) to broadcast over {a.shape}, got {row.shape}"
        )
    return a + row


def col_mean(a):
    a = as_matrix(a)
    if a.shape[0] < 1:
        raise ShapeError("col_mean needs at least one row")
    return a.mean(axis=0, keepdims=True)


def col_var(a):
    """Population (divide-by-N) column variance as a 1 x cols matrix."""
    a = as_matrix(a)
    if a.shape[0] < 1:
        raise ShapeError("col_var needs at least one row")
    centered = a - a.mean(axis=0, keepdims=True)
    return (centered * centered).mean(axis=0, keepdims=True)


def derive_seed(*keys):
    """Combine integer keys into one 64-bit seed.

    Uses numpy's ``SeedSequence`` hashing, which is stable across platforms
    and numpy releases, so ``derive_seed(seed, subject, modality)`` always
    names the same stream.
    """
    words = [int(k) & _SEED_MASK for k in keys]
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


class SeededRng:
    """Deterministic random stream: PCG64 bit generator seeded with a 64-bit int.

    Normal draws use the Box-Muller transform on PCG64 doubles rather than
    numpy's ziggurat sampler, so the stream depends only on PCG64 and
    ``Generator.random``.

    For each pair of uniforms ``u1, u2`` in ``[0, 1)``::

        r  = sqrt(-2 * log(1 - u1))
        z0 = r * cos(2 * pi * u2)
        z1 = r * sin(2 * pi * u2)

    and the output stream is ``z0, z1, z0', z1', ...`` (the odd tail of the
    final pair is discarded).
    """

    def __init__(self, seed=0):
        seed = int(seed)
        if not 0 <= seed <= _SEED_MASK:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, size):
        return self._gen.random(size)

    def normal(self, n):
        n_pairs = (n + 1) // 2
        u = self._gen.random(2 * n_pairs).reshape(n_pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.empty((n_pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.reshape(-1)[:n]

    def permutation(self, n):
        """Uniform random permutation of ``range(n)`` (Fisher-Yates via numpy)."""
        return self._gen.permutation(n)


def randn(rng, rows, cols, scale=1.0):
    if scale < 0:
        raise ValueError(f"scale must be >= 0, got {scale}")
    draws = rng.normal(rows * cols).reshape(rows, cols)
    return draws * float(scale)
