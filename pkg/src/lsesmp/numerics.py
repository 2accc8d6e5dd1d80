"""Shared numeric primitives: pseudo-inverse, Kronecker products, Gaussian
densities and a deterministic, counter-addressable random stream.

All estimation-core math in this package is real-valued float64. Complex
demo data is mapped to an equivalent real system by
:func:`lsesmp.channel.complex_to_real_stack` before it reaches any
estimator.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "NumericsError",
    "SvdConvergenceError",
    "KronSizeError",
    "pseudo_inverse",
    "kron",
    "gaussian_logpdf",
    "logistic",
    "logit",
    "RandomStream",
    "stream_for_trial",
]

# Refuse to materialize Kronecker products beyond this many entries.
MAX_KRON_ELEMENTS = 200_000_000


class NumericsError(Exception):
    """Base class for numeric failures raised by this package."""


class SvdConvergenceError(NumericsError):
    """SVD failed to converge; carries the offending matrix shape."""

    def __init__(self, rows, cols):
        self.rows = int(rows)
        self.cols = int(cols)
        super().__init__(f"SVD did not converge for a {rows}x{cols} matrix")


class KronSizeError(NumericsError):
    """Kronecker product would exceed the configured element budget."""


def pseudo_inverse(a, rel_tol=1e-10):
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``rel_tol`` times the largest singular value are
    treated as exact zeros, so exactly rank-deficient inputs (e.g. Gram
    matrices masked by a sparse support) invert cleanly on their range.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("pseudo_inverse expects a 2-D array")
    if not np.all(np.isfinite(a)):
        raise ValueError("pseudo_inverse input must be finite")
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(*a.shape) from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    inv_s = np.where(s >= rel_tol * s[0], 1.0, 0.0)
    keep = inv_s > 0
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def kron(a, b):
    """Kronecker product with block (i, j) equal to ``a[i, j] * b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("kron inputs must be finite")
    n_out = a.size * b.size
    if n_out > MAX_KRON_ELEMENTS:
        raise KronSizeError(
            f"kron result would hold {n_out} elements "
            f"(limit {MAX_KRON_ELEMENTS})"
        )
    return np.kron(a, b)


def gaussian_logpdf(x, mean, variance):
    """Log of the univariate normal density. Variance must be positive."""
    if np.any(np.asarray(variance) <= 0.0):
        raise ValueError("gaussian_logpdf requires variance > 0")
    x = np.asarray(x, dtype=float)
    d = x - mean
    return -0.5 * (np.log(2.0 * math.pi * variance) + d * d / variance)


def logistic(x):
    """Numerically safe ``1 / (1 + exp(-x))`` for scalars or arrays."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p):
    """Inverse of :func:`logistic`; expects p strictly inside (0, 1)."""
    return math.log(p / (1.0 - p))


# SplitMix64 constants. The generator is counter-addressable: draw k of a
# stream with seed s is finalize(s + (k + 1) * GOLDEN), which makes block
# generation a pure vectorized map over the draw indices.
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0 ** -53


def _finalize(z):
    """SplitMix64 output mix on uint64 scalars or arrays (wraps mod 2^64)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX_1
        z = (z ^ (z >> np.uint64(27))) * _MIX_2
        return z ^ (z >> np.uint64(31))


class RandomStream:
    """Deterministic SplitMix64 stream with an explicit draw counter.

    The uniform integer sequence is bit-exact for a given seed on any
    platform. Gaussian variates use the Box-Muller transform on pairs of
    uniforms, so the draw count per call is deterministic and there is no
    rejection-sampling nondeterminism. A stream is single-owner mutable:
    never share one instance across threads.
    """

    def __init__(self, seed):
        self.seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.position = 0

    def _raw(self, n):
        idx = np.arange(self.position + 1, self.position + n + 1, dtype=np.uint64)
        self.position += n
        with np.errstate(over="ignore"):
            states = self.seed + idx * _GOLDEN
        return _finalize(states)

    def uniforms(self, n):
        """n uniforms on [0, 1), one raw draw each."""
        return (self._raw(n) >> np.uint64(11)).astype(np.float64) * _U53

    def normals(self, n, mean=0.0, std=1.0):
        """n Gaussian draws via Box-Muller (two uniforms per pair)."""
        if n == 0:
            return np.empty(0)
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = u[0::2]
        u2 = u[1::2]
        radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 in (0, 1], log finite
        angle = 2.0 * math.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return mean + std * z[:n]

    def normal_matrix(self, rows, cols, std=1.0):
        return self.normals(rows * cols, std=std).reshape(rows, cols)

    def bernoulli(self, n, p):
        """n independent {0,1} draws with success probability p."""
        return (self.uniforms(n) < p).astype(np.int8)


def stream_for_trial(base_seed, trial):
    """Derive a trial-disjoint stream from (base_seed, trial).

    The trial index is whitened with the SplitMix64 finalizer and folded
    into the base seed through a second finalizer round, so streams of
    distinct trials are statistically independent sub-streams and
    independent of each trial's draw count.
    """
    base = np.uint64(int(base_seed) & 0xFFFFFFFFFFFFFFFF)
    t = np.uint64(int(trial) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        mixed = t * _GOLDEN + _MIX_1
    derived = _finalize(base ^ _finalize(mixed))
    return RandomStream(derived)
