"""Input validation helpers shared by the estimator API and the core ops."""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_generator",
    "check_finite",
    "check_snapshot_matrix",
    "check_received_vector",
]


def as_generator(seed) -> np.random.Generator:
    """Return a `numpy.random.Generator` for a seed, seed path, or generator.

    Integers and tuples of integers are fed through `SeedSequence`, so a
    tuple acts as a counter-based stream split: ``(master, trial, part)``
    always yields the same independent stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, (int, np.integer)):
        return np.random.default_rng(np.random.SeedSequence(int(seed)))
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence([int(s) for s in seed]))
    raise TypeError(f"cannot build a random generator from {seed!r}")


def check_finite(x: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def check_received_vector(r, n_antennas: int | None = None) -> np.ndarray:
    """Coerce a received snapshot (or Snapshot object) to a 1-D complex array."""
    r = getattr(r, "received", r)
    r = np.asarray(r, dtype=np.complex128)
    if r.ndim != 1:
        raise ValueError(f"expected a 1-D received vector, got shape {r.shape}")
    if n_antennas is not None and r.shape[0] != n_antennas:
        raise ValueError(f"expected {n_antennas} antennas, got {r.shape[0]}")
    check_finite(r.view(np.float64), "received vector")
    return r


def check_snapshot_matrix(X, n_antennas: int | None = None) -> np.ndarray:
    """Coerce estimator input to a 2-D complex array, one snapshot per row."""
    if hasattr(X, "received"):
        X = [X.received]
    elif isinstance(X, (list, tuple)) and X and hasattr(X[0], "received"):
        X = [s.received for s in X]
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise ValueError(f"expected snapshots of shape (n, N), got {X.shape}")
    if n_antennas is not None and X.shape[1] != n_antennas:
        raise ValueError(f"expected {n_antennas} antennas, got {X.shape[1]}")
    check_finite(X.view(np.float64), "snapshot matrix")
    return X
