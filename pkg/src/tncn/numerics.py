"""Deterministic dense linear algebra, seeded randomness, and activations.

Conventions used across the package:

* a "matrix" is a 2-D C-contiguous ``numpy.ndarray`` of float64; column
  vectors are (n, 1) matrices and batches are stored column-wise (dim, B).
  float32 appears only at the checkpoint boundary.
* randomness always flows through a ``numpy.random.Generator`` backed by
  PCG64, created with :func:`make_rng`.  PCG64 is a counter-based generator
  with a published reference implementation, so a given seed produces the
  same draw sequence on every platform.
"""

from enum import Enum

import numpy as np


class NumericsError(ValueError):
    """Raised when a numeric contract is violated (bad shape, NaN, ...)."""


class ActivationKind(str, Enum):
    IDENTITY = "identity"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    RELU = "relu"
    SIGNUM = "signum"
    SOFTMAX = "softmax"


def make_rng(seed):
    """Seeded PCG64 generator; the single entry point for randomness."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(seed, index):
    """Independent child generator for parallel work unit ``index``.

    Seed mixing uses SeedSequence spawn keys, so (seed, index) pairs give
    statistically independent, platform-stable streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


def assert_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} contains non-finite entries")
    return arr


def gaussian_init(rows, cols, variance, rng):
    """i.i.d. normal(0, variance) matrix; variance 0 gives exact zeros."""
    if variance < 0:
        raise NumericsError(f"variance must be >= 0, got {variance}")
    if variance == 0:
        return np.zeros((rows, cols))
    m = rng.normal(0.0, np.sqrt(variance), size=(rows, cols))
    return assert_finite(m, "gaussian_init")


def _softmax_columns(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def apply_activation(kind, x):
    """Element-wise activation; softmax normalizes each batch column.

    Every kind except softmax is monotone non-decreasing per coordinate,
    which is all the temporal coding network requires (no derivatives).
    sign(0) = 0 by convention.
    """
    try:
        kind = ActivationKind(kind)
    except ValueError as exc:
        raise NumericsError(f"unknown activation kind: {kind!r}") from exc
    x = np.asarray(x, dtype=np.float64)
    if kind is ActivationKind.IDENTITY:
        return x
    if kind is ActivationKind.TANH:
        return np.tanh(x)
    if kind is ActivationKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-x))
    if kind is ActivationKind.RELU:
        return np.maximum(x, 0.0)
    if kind is ActivationKind.SIGNUM:
        return np.sign(x)
    if kind is ActivationKind.SOFTMAX:
        return _softmax_columns(x)
    raise NumericsError(f"unknown activation kind: {kind}")  # pragma: no cover


def clip_update_norm(update, always=False):
    """Rescale ``update`` to unit Frobenius norm when it exceeds 1.

    With ``always=True`` the update is normalized unconditionally (except
    exact zeros, which stay zero).
    """
    norm = np.linalg.norm(update)
    if norm == 0.0:
        return update
    if always or norm > 1.0:
        return update / norm
    return update


def project_columns_l2(w, radius):
    """Project each column onto the L2 ball of the given radius.

    Columns already inside the ball are returned untouched (idempotent).
    """
    if radius <= 0:
        raise NumericsError(f"radius must be > 0, got {radius}")
    norms = np.linalg.norm(w, axis=0, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    if np.all(scale == 1.0):
        return w
    return w * scale


def spectral_radius(w):
    """Largest absolute eigenvalue of a square matrix."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise NumericsError(f"matrix must be square, got shape {w.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(w))))


def spectral_radius_rescale(w, target):
    """Scale a square matrix so its spectral radius equals ``target``.

    Uses an exact eigensolve rather than power iteration: random recurrent
    matrices often have a complex dominant eigenpair, for which real power
    iteration does not converge.  Zero / nilpotent matrices have spectral
    radius 0 and cannot be rescaled.
    """
    if target <= 0:
        raise NumericsError(f"target must be > 0, got {target}")
    rho = spectral_radius(w)
    if rho < 1e-12:
        raise NumericsError("spectral radius is zero; rescale undefined")
    return assert_finite(w * (target / rho), "spectral_radius_rescale")
