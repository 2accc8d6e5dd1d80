"""Density-evolution analysis of the message-passing detector.

Under a Gaussian approximation with the LLR symmetry condition
(variance = twice the mean), the per-iteration behavior collapses to a
scalar recursion on the mean u of the coefficient-side LLRs:

    u_next = l_0 + (t_len - 1) * E[ zeta(L) ],   L ~ Normal(u, 2u),

where zeta is the expected observation-side log-ratio gain as a function
of the incoming LLR. Fixed points of this map predict where the detector
settles; the bit-error proxy maps the fixed point through the Gaussian
tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExitParams",
    "ExitTrajectory",
    "exit_zeta",
    "exit_update",
    "exit_trajectory",
    "exit_fixed_points",
    "ber_predict",
]

FIXED_POINT_RTOL = 1e-8
FIXED_POINT_PATIENCE = 3


@dataclass(frozen=True)
class ExitParams:
    """Parameters of the scalar density-evolution recursion.

    snr is the ratio (training variance * coefficient variance) / noise
    variance; beta the squared-mean-to-variance ratio of the nonzero
    coefficients; l_0 the prior LLR magnitude entering each variable
    message.
    """

    t_len: int
    n_t: int
    snr: float
    beta: float
    l_0: float
    quad_points: int = 2048
    trunc_sigmas: float = 8.0

    def __post_init__(self):
        if self.t_len < 1:
            raise ValueError("t_len must be >= 1")
        if self.n_t < 2:
            raise ValueError("n_t must be >= 2")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.quad_points < 64:
            raise ValueError("quad_points must be >= 64")


@dataclass
class ExitTrajectory:
    u_values: list
    fixed_point: float | None
    converged: bool
    ber_at_fixed_point: float


def exit_zeta(l_v, params: ExitParams):
    """Mean observation-side LLR gain for an incoming LLR of l_v.

    Evaluated in an exponent-stable split: for nonnegative arguments all
    exponentials are of -l_v, so the expression saturates smoothly at its
    finite asymptote instead of overflowing near |l_v| > 350.
    """
    l = np.asarray(l_v, dtype=float)
    r = 1.0 / params.snr
    nt1 = params.n_t - 1.0
    beta = params.beta
    out = np.empty_like(l)

    neg = l < 0
    if np.any(neg):
        e = np.exp(l[neg])
        a1 = (1.0 + e) ** 2
        a2 = nt1 * e * (1.0 + e + beta)
        t1 = (-beta - a1 * r) / (a2 + a1 * (r + 1.0))
        t2 = (beta * e * e + a1 * r) / (a2 + a1 * r)
        out[neg] = 0.5 * (t1 + t2) - 0.5 * np.log1p(a1 / (a2 + a1 * r))
    if np.any(~neg):
        # same quantities divided through by exp(2 l)
        t = np.exp(-l[~neg])
        a1s = (1.0 + t) ** 2
        a2s = nt1 * (1.0 + t * (1.0 + beta))
        t1 = (-beta * t * t - a1s * r) / (a2s + a1s * (r + 1.0))
        t2 = (beta + a1s * r) / (a2s + a1s * r)
        out[~neg] = 0.5 * (t1 + t2) - 0.5 * np.log1p(a1s / (a2s + a1s * r))
    if out.ndim == 0:
        return float(out)
    return out


def exit_update(u_v, params: ExitParams):
    """One step of the scalar recursion.

    The Gaussian expectation of exit_zeta is integrated by a composite
    Simpson rule over a +-trunc_sigmas window; doubling quad_points moves
    the result by less than 1e-8 relative for the documented defaults.
    """
    if not u_v > 0:
        raise ValueError("exit_update requires u_v > 0")
    if params.t_len == 1:
        return params.l_0
    npts = params.quad_points + 1 - params.quad_points % 2  # odd for Simpson
    sigma = math.sqrt(2.0 * u_v)
    half = params.trunc_sigmas * sigma
    nodes = np.linspace(u_v - half, u_v + half, npts)
    weights = np.exp(-((nodes - u_v) ** 2) / (4.0 * u_v)) / math.sqrt(
        4.0 * math.pi * u_v
    )
    f = exit_zeta(nodes, params) * weights
    h = nodes[1] - nodes[0]
    integral = (
        h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())
    )
    return params.l_0 + (params.t_len - 1) * integral


def exit_trajectory(params: ExitParams, u_init=0.01, max_steps=500):
    """Iterate the recursion from u_init until the update stalls.

    Convergence requires the relative step to stay below 1e-8 for three
    consecutive iterations. Leaving the positive domain (the recursion
    has no meaning at u <= 0) or exhausting the step budget flags
    non-convergence, which is the closing-tunnel failure mode of the
    chart.
    """
    if not u_init > 0:
        raise ValueError("u_init must be positive")
    u = float(u_init)
    us = [u]
    quiet = 0
    converged = False
    for _ in range(max_steps):
        u_next = exit_update(u, params)
        us.append(u_next)
        if not u_next > 0:
            break
        if abs(u_next - u) < FIXED_POINT_RTOL * max(1.0, u):
            quiet += 1
        else:
            quiet = 0
        u = u_next
        if quiet >= FIXED_POINT_PATIENCE:
            converged = True
            break
    fixed_point = us[-1] if converged else None
    ber = ber_predict(fixed_point) if converged else math.nan
    return ExitTrajectory(
        u_values=us, fixed_point=fixed_point, converged=converged,
        ber_at_fixed_point=ber,
    )


def exit_fixed_points(params: ExitParams, u_min=1e-3, u_max=None, grid=256):
    """All positive fixed points of the recursion, by sign-change scan.

    Scans g(u) = exit_update(u) - u on a log-spaced grid and bisects each
    bracket. This is the chart-level notion of a fixed point (an
    intersection of the transfer curve with the diagonal), independent of
    whether plain iteration is attracted to it.
    """
    if u_max is None:
        sat = exit_zeta(700.0, params)
        u_max = max(4.0 * (params.l_0 + (params.t_len - 1) * max(sat, 0.0)),
                    4.0 * abs(params.l_0), 10.0)
    us = np.geomspace(u_min, u_max, grid)
    g = np.array([exit_update(u, params) - u for u in us])
    roots = []
    for i in range(len(us) - 1):
        if g[i] == 0.0:
            roots.append(float(us[i]))
            continue
        if g[i] * g[i + 1] < 0.0:
            lo, hi = us[i], us[i + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                gm = exit_update(mid, params) - mid
                if g[i] * gm <= 0.0:
                    hi = mid
                else:
                    lo = mid
            roots.append(0.5 * (lo + hi))
    if g[-1] == 0.0:
        roots.append(float(us[-1]))
    return roots


def ber_predict(u_v):
    """Bit-error proxy at LLR mean u_v: half the Gaussian tail mass,
    0.5 * erfc(sqrt(u_v) / 2). Equals 0.5 at u_v = 0 and decreases to 0."""
    if u_v < 0:
        raise ValueError("u_v must be nonnegative")
    return 0.5 * math.erfc(math.sqrt(u_v) / 2.0)
