"""Random streams and the small dense kernels the rest of the package needs."""

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .errors import NotSpd

_MASK64 = (1 << 64) - 1

DEFAULT_RIDGE = 1e-8


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Replication ``r`` of an experiment always uses ``stream_id = r``, so a
    replication draws the same numbers no matter which worker runs it or in
    what order. The two 64-bit integers form the 128-bit Philox key.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = ((self.stream_id & _MASK64) << 64) | (self.seed & _MASK64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def spawn(self, offset: int) -> "RngStream":
        """Sibling stream with the same seed and ``stream_id + offset``."""
        return RngStream(self.seed, self.stream_id + offset)


def gaussian_vector(rng: RngStream, d: int) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return rng.normal(d)


def symmetrize(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def invert_spd(m, ridge: float = 0.0) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    ``ridge * I`` is added only when the factorization fails or its smallest
    pivot (``L_ii**2``) falls below ``ridge``.
    """
    m = symmetrize(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    factor = _cholesky(m)
    if factor is None or (ridge > 0 and np.min(np.diag(factor)) ** 2 < ridge):
        if ridge <= 0:
            raise NotSpd("matrix is not positive definite")
        factor = _cholesky(m + ridge * np.eye(n))
        if factor is None:
            raise NotSpd(f"matrix is not positive definite even with ridge {ridge:g}")
    inv = scipy.linalg.cho_solve((factor, True), np.eye(n))
    return symmetrize(inv)


def _cholesky(m):
    try:
        factor = scipy.linalg.cholesky(m, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.diag(factor) > 0):
        return None
    return factor


def ks_distance(sample) -> float:
    """Kolmogorov-Smirnov sup distance between the empirical CDF and N(0, 1)."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("sample must be nonempty")
    cdf = ndtr(x)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(n) / n
    return float(max(upper.max(), lower.max()))
