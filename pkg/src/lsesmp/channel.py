"""Problem-input generation: geometric mmWave channels, beamspace
transforms, Bernoulli-Gaussian sparse channel draws, training matrices and
noisy observations.

Vectors are flattened column-major (``order='F'``) throughout, so
``vec(D @ H @ X) == kron(X.T, D) @ vec(H)`` holds with numpy's kron.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomStream, kron

__all__ = [
    "SystemDims",
    "GeometricParams",
    "SparseChannelSpec",
    "ProblemInstance",
    "ula_response",
    "geometric_channel",
    "dft_matrix",
    "to_beamspace",
    "complex_to_real_stack",
    "bernoulli_gaussian_channel",
    "build_training",
    "observe",
    "effective_sparsity",
]


@dataclass(frozen=True)
class SystemDims:
    """Antenna/stream/training-block counts of one system configuration."""

    n_t: int
    n_r: int
    n_s: int
    t_len: int

    def __post_init__(self):
        if not (1 <= self.n_s <= self.n_t and self.n_s <= self.n_r):
            raise ValueError("require 1 <= n_s <= min(n_t, n_r)")
        if self.t_len < 1:
            raise ValueError("t_len must be >= 1")

    @property
    def n_obs(self):
        """Stacked observation length N_s * T."""
        return self.n_s * self.t_len

    @property
    def n_coef(self):
        """Beamspace coefficient count N_r * N_t."""
        return self.n_r * self.n_t


@dataclass(frozen=True)
class GeometricParams:
    """Scatterer geometry for the multipath channel model.

    ``gains`` are complex per-path amplitudes before the common
    sqrt(n_r * n_t / path_loss) scaling.
    """

    paths: int
    path_loss: float
    element_spacing_over_wavelength: float
    gains: tuple
    departure_angles: tuple
    arrival_angles: tuple

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("at least one path required")
        if self.path_loss <= 0:
            raise ValueError("path_loss must be positive")
        for name in ("gains", "departure_angles", "arrival_angles"):
            if len(getattr(self, name)) != self.paths:
                raise ValueError(f"{name} must have length {self.paths}")


@dataclass(frozen=True)
class SparseChannelSpec:
    """Bernoulli-Gaussian coefficient law: zero w.p. 1 - sparsity, else
    drawn from N(nonzero_mean, nonzero_variance)."""

    sparsity: float
    nonzero_mean: float = 0.0
    nonzero_variance: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.sparsity < 1.0:
            raise ValueError("sparsity must lie in (0, 1)")
        if self.nonzero_variance <= 0.0:
            raise ValueError("nonzero_variance must be positive")

    @property
    def beta(self):
        """Squared-mean-to-variance ratio of the nonzero coefficients."""
        return self.nonzero_mean ** 2 / self.nonzero_variance


@dataclass
class ProblemInstance:
    """One realization of the linear observation model y = S h + n."""

    s_bar: np.ndarray
    h_true: np.ndarray
    b_true: np.ndarray
    y_bar: np.ndarray
    noise_variance: float
    signal_variance: float
    coarse_rank_deficient: bool = field(default=False, compare=False)


def ula_response(angle, n, spacing_ratio=0.5):
    """Uniform-linear-array steering vector, unit Euclidean norm."""
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    k = np.arange(n)
    phase = 2.0 * np.pi * spacing_ratio * np.sin(angle)
    return np.exp(1j * phase * k) / np.sqrt(n)


def geometric_channel(dims: SystemDims, params: GeometricParams):
    """Low-rank multipath channel: sum of scaled outer products of the
    receive and transmit steering vectors, one term per scatterer."""
    d = params.element_spacing_over_wavelength
    a_r = np.column_stack(
        [ula_response(th, dims.n_r, d) for th in params.arrival_angles]
    )
    a_t = np.column_stack(
        [ula_response(ph, dims.n_t, d) for ph in params.departure_angles]
    )
    scale = np.sqrt(dims.n_r * dims.n_t / params.path_loss)
    alpha = scale * np.asarray(params.gains, dtype=complex)
    return (a_r * alpha) @ a_t.conj().T


def dft_matrix(n):
    """Unitary n-point DFT matrix."""
    if n < 1:
        raise ValueError("n must be >= 1")
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n) / np.sqrt(n)


def to_beamspace(h, w_r, w_t):
    """Change of basis to the beam domain: W_r^H H W_t."""
    h = np.asarray(h)
    w_r = np.asarray(w_r)
    w_t = np.asarray(w_t)
    if w_r.shape[0] != h.shape[0] or w_t.shape[0] != h.shape[1]:
        raise ValueError(
            f"shape mismatch: H {h.shape}, W_r {w_r.shape}, W_t {w_t.shape}"
        )
    return w_r.conj().T @ h @ w_t


def complex_to_real_stack(y, s, h, noise_variance):
    """Map a complex linear model to the equivalent real one.

    Stacks real over imaginary parts; the system matrix becomes
    ``[[Re S, -Im S], [Im S, Re S]]`` and the per-coordinate noise
    variance halves. If y = S h + n held exactly, the stacked identity
    y_r = S_r h_r + n_r holds exactly as well.
    """
    y = np.asarray(y)
    s = np.asarray(s)
    h = np.asarray(h)
    y_r = np.concatenate([y.real, y.imag])
    h_r = np.concatenate([h.real, h.imag])
    s_r = np.block([[s.real, -s.imag], [s.imag, s.real]])
    return y_r, s_r, h_r, noise_variance / 2.0


def bernoulli_gaussian_channel(n, spec: SparseChannelSpec, rng: RandomStream):
    """Draw (h, b): support indicators b ~ Bernoulli(sparsity) i.i.d. and
    coefficients h = b * N(mean, variance).

    One uniform and one normal are consumed per entry regardless of the
    realized support, keeping downstream draws independent of b.
    """
    b = rng.bernoulli(n, spec.sparsity)
    values = rng.normals(
        n, mean=spec.nonzero_mean, std=np.sqrt(spec.nonzero_variance)
    )
    return values * b, b


def build_training(dims: SystemDims, signal_variance, design, rng: RandomStream):
    """Training matrix of shape (n_s * t_len, n_r * n_t).

    ``design='gaussian'``: i.i.d. real N(0, signal_variance) entries
    (the default for all quantitative runs; returns float64).

    ``design='kron'``: the structured complex matrix kron(X^T, D) with
    D = C^H W_r and X = W_t^H F S, where the combiner C, precoder F and
    pilot block S have i.i.d. complex Gaussian entries. The result is
    rescaled so its empirical per-entry variance equals signal_variance;
    callers pass it through complex_to_real_stack before estimation.
    """
    if design == "gaussian":
        return rng.normal_matrix(
            dims.n_obs, dims.n_coef, std=np.sqrt(signal_variance)
        )
    if design == "kron":
        def cgauss(rows, cols):
            re = rng.normal_matrix(rows, cols, std=np.sqrt(0.5))
            im = rng.normal_matrix(rows, cols, std=np.sqrt(0.5))
            return re + 1j * im

        w_r = dft_matrix(dims.n_r)
        w_t = dft_matrix(dims.n_t)
        c = cgauss(dims.n_r, dims.n_s)
        f = cgauss(dims.n_t, dims.n_s)
        pilots = cgauss(dims.n_s, dims.t_len)
        d = c.conj().T @ w_r
        x = w_t.conj().T @ f @ pilots
        s_bar = kron(x.T, d)
        emp_var = np.mean(np.abs(s_bar) ** 2)
        return s_bar * np.sqrt(signal_variance / emp_var)
    raise ValueError(f"unknown training design {design!r}")


def observe(s_bar, h, noise_variance, rng: RandomStream):
    """y = S h + n with i.i.d. noise of the given per-entry variance.

    Real systems get real N(0, var) noise; complex systems get circular
    complex noise with total per-entry variance var.
    """
    s_bar = np.asarray(s_bar)
    clean = s_bar @ h
    m = clean.shape[0]
    std = np.sqrt(noise_variance)
    if np.iscomplexobj(s_bar) or np.iscomplexobj(h):
        noise = (rng.normals(m) + 1j * rng.normals(m)) * (std / np.sqrt(2.0))
    else:
        noise = rng.normals(m, std=std)
    return clean + noise


def effective_sparsity(h_v, energy_fraction=0.99):
    """Fraction of entries needed to carry the given share of the squared
    Frobenius norm. Quantifies approximate sparsity of off-grid beamspace
    channels, which have no exact support."""
    mag = np.sort(np.abs(np.asarray(h_v)).ravel() ** 2)[::-1]
    total = mag.sum()
    if total == 0.0:
        return 0.0
    needed = int(np.searchsorted(np.cumsum(mag), energy_fraction * total) + 1)
    return needed / mag.size
