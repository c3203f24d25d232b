"""Small numeric helpers shared by the rest of the package.

Matrices are plain 2-D ``float64`` numpy arrays; ``as_matrix`` is the one
place that checks shape and finiteness. Random streams come from numpy's
PCG64 generator so a seed fully determines every draw.
"""

import math

import numpy as np


def as_matrix(values, name="matrix"):
    """Return ``values`` as a finite 2-D float64 array (read-only copy)."""
    m = np.array(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    m.setflags(write=False)
    return m


def mat_vec(m, v):
    """Matrix-vector product with an explicit shape check."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"shape mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v


def make_rng(seed):
    """Seeded generator. Same seed, same stream."""
    if seed is None or int(seed) < 0:
        raise ValueError("seed must be a non-negative integer")
    return np.random.Generator(np.random.PCG64(int(seed)))


def uniform_int(rng, lo, hi):
    """Draw one integer uniformly from the closed range [lo, hi]."""
    if lo > hi:
        raise ValueError(f"empty range: lo={lo} > hi={hi}")
    return int(rng.integers(lo, hi, endpoint=True))


def std_normal_cdf(z):
    # erfc keeps precision in the lower tail where 1 + erf(.) would cancel
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def std_normal_inv_cdf(p):
    """Inverse of the standard normal CDF, by bisection.

    Parameters
    ----------
    p : float
        Probability strictly inside (0, 1).

    Returns
    -------
    float
        ``z`` with ``Phi(z) == p`` to well under 1e-9.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if std_normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
