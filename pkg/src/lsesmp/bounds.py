"""Cramer-Rao lower bounds for the unrestricted and support-aware least
squares estimators, with the Fisher-information consistency checks that
make the singular-support bound well defined.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import NumericsError, pseudo_inverse

__all__ = [
    "CrlbReport",
    "CrlbIdentityError",
    "crlb_lse",
    "crlb_lse_smp",
    "score_identity_check",
    "interlacing_bounds",
]

IDENTITY_TOL = 1e-9


class CrlbIdentityError(NumericsError):
    """The projector identities behind the singular CRLB failed, which
    indicates a pathological training matrix."""


@dataclass
class CrlbReport:
    cov: np.ndarray
    trace_mse: float
    rank: int


def crlb_lse(s_bar, noise_variance):
    """Covariance lower bound of unrestricted least squares:
    noise_variance times the inverse Gram matrix of the training."""
    s_bar = np.asarray(s_bar, dtype=float)
    gram = s_bar.T @ s_bar
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericsError("training Gram matrix is singular") from exc
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-12:
        raise NumericsError("training Gram matrix is numerically singular")
    cov = noise_variance * gram_inv
    cov = 0.5 * (cov + cov.T)
    return CrlbReport(cov=cov, trace_mse=float(np.trace(cov)), rank=gram.shape[0])


def crlb_lse_smp(s_bar, b, noise_variance, pinv_rel_tol=1e-10):
    """Covariance lower bound of support-aware least squares.

    The Fisher information of the masked model is singular off the
    support, so the bound uses its pseudo-inverse. Before returning,
    verifies the two identities that keep the singular bound meaningful:
    the information projector equals diag(b), and it is invariant under
    the information-times-pseudo-inverse projector.
    """
    b = np.asarray(b, dtype=float)
    if not np.all((b == 0.0) | (b == 1.0)):
        raise ValueError("support vector must be binary")
    s_bar = np.asarray(s_bar, dtype=float)
    masked = s_bar * b
    gram = masked.T @ masked
    gram_pinv = pseudo_inverse(gram, pinv_rel_tol)

    scale = max(float(np.abs(gram).max()), 1.0)
    projector = gram_pinv @ gram
    if np.max(np.abs(projector - np.diag(b))) > IDENTITY_TOL * scale:
        raise CrlbIdentityError(
            "information projector does not reduce to the support mask"
        )
    # information and its pseudo-inverse share this projector, so the
    # invariance constraint reduces to idempotence
    if np.max(np.abs(projector @ projector - projector)) > IDENTITY_TOL * scale:
        raise CrlbIdentityError("information projector is not idempotent")

    cov = noise_variance * gram_pinv
    cov = 0.5 * (cov + cov.T)
    return CrlbReport(
        cov=cov,
        trace_mse=float(np.trace(cov)),
        rank=int(np.count_nonzero(b)),
    )


def score_identity_check(s_bar, b, h, y, noise_variance, pinv_rel_tol=1e-10):
    """Max-norm residual of the efficiency identity
    score(y, h) == information @ (h_estimate - h).

    The identity holding for every observation is what certifies the
    support-aware least squares estimator as minimum-variance unbiased.
    """
    b = np.asarray(b, dtype=float)
    s_bar = np.asarray(s_bar, dtype=float)
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    masked = s_bar * b
    gram = masked.T @ masked
    score = (masked.T @ y - gram @ h) / noise_variance
    h_est = pseudo_inverse(gram, pinv_rel_tol) @ (masked.T @ y)
    rhs = gram @ (h_est - h) / noise_variance
    return float(np.max(np.abs(score - rhs)))


def interlacing_bounds(s_bar, b, noise_variance):
    """Eigenvalue interlacing between the two covariance bounds.

    With w = (number of masked-out coefficients), the support-restricted
    bound's descending eigenvalues mu_k satisfy
    lambda_k >= mu_k >= lambda_(k+w), a Cauchy interlacing consequence of
    the support Gram matrix being a principal submatrix of the full one.
    Returns (lam, mu, w) with lam the full bound's descending eigenvalues.
    """
    b = np.asarray(b, dtype=float)
    full = crlb_lse(s_bar, noise_variance)
    restricted = crlb_lse_smp(s_bar, b, noise_variance)
    idx = np.flatnonzero(b)
    sub = restricted.cov[np.ix_(idx, idx)]
    lam = np.sort(np.linalg.eigvalsh(full.cov))[::-1]
    mu = np.sort(np.linalg.eigvalsh(sub))[::-1]
    return lam, mu, b.size - idx.size
