"""Deterministic vector math and seeded randomness shared by every module.

Model parameters travel as flat float64 arrays.  All randomness flows through
counter-based Philox streams keyed on (seed, namespace, ...), so a run replays
bit-identically no matter how client work would be scheduled.

Reductions use numpy's fixed pairwise summation; for a given input shape the
result is deterministic and within 1e-12 relative of a naive sequential sum at
the dimensions used here (d <= 1e4).
"""

import numpy as np


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


# Stream namespaces.  Spawn keys must never collide across uses.
NS_DATA = 0
NS_INIT = 1
NS_CLIENT = 2
NS_ATTACK = 3
NS_VERIFY = 4


def as_vector(values) -> np.ndarray:
    """Validate and return a flat float64 parameter vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"model vector must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("model vector contains NaN or Inf")
    return v


def l2_norm(v) -> float:
    """Euclidean norm sqrt(sum v_i^2)."""
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt(np.dot(v, v)))


def l1_norm(v) -> float:
    """sum |v_i|."""
    v = np.asarray(v, dtype=np.float64)
    return float(np.sum(np.abs(v)))


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a*x + y elementwise, with an explicit dimension check."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return a * x + y


def rng_from(seed: int, *path: int) -> np.random.Generator:
    """Counter-based stream that is a pure function of (seed, path).

    Streams with distinct paths are statistically independent; calling this
    twice with the same arguments replays the identical draw sequence.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def client_stream(seed: int, client_id: int, round_idx: int) -> np.random.Generator:
    """Per-(client, round) stream: batch shuffles first, then compressor draws."""
    return rng_from(seed, NS_CLIENT, client_id, round_idx)
