"""Dense float64 arithmetic and seeded sampling.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Randomness
always comes from a ``numpy.random.Generator`` backed by PCG64, whose output
stream for a given seed is fixed across platforms and numpy releases;
Gaussian draws use numpy's ziggurat sampler on top of it.
"""

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError

DTYPE = np.float64


def make_rng(seed):
    """Return a PCG64-backed generator for ``seed``.

    Calling this again with the same seed resets the stream.
    """
    if seed < 0:
        raise ArgumentError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_matrix(x):
    a = np.asarray(x, dtype=DTYPE)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def check_finite(x, where="value"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite entries in {where}")
    return x


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "matmul output")


def hadamard(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard needs identical shapes, got {a.shape} and {b.shape}")
    return a * b


def gaussian_sample(rows, cols, variance, rng):
    """I.i.d. N(0, variance) draws of shape (rows, cols)."""
    if variance < 0:
        raise ArgumentError(f"variance must be >= 0, got {variance}")
    draws = rng.standard_normal((rows, cols))
    # the stream advances even when variance is 0 so call order stays aligned
    return draws * np.sqrt(variance)


def spawn_rngs(seed, n):
    """``n`` independent PCG64 streams derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]
