"""Numpy implementation of the per-iteration message-passing kernels.

Edge matrices are dense: rows index observations (sum nodes), columns
index coefficients (variable nodes), except the variable-to-sum LLR
matrix which is stored transposed, (n_coef, n_obs). Leave-one-out sums
are computed as full row/column totals minus the own-edge term.
"""
import numpy as np

BACKEND_NAME = "numpy"


def sum_messages(y, s, s2, h_hat, v_h, p_v, noise_var, var_floor, llr_clamp,
                 v_test=None):
    """Sum-node update for every edge.

    Returns (u_s, v_s, l_s), all shaped (n_obs, n_coef):
      u_s  leave-one-out mean of the aggregate interference,
      v_s  its variance plus the channel noise floor,
      l_s  log-ratio of the two Gaussian explanations of the residual
           (coefficient active at this edge vs not), clamped.

    v_h enters the interference variance; v_test, when given, replaces it
    inside the own-edge hypothesis test only (callers use this to test
    undetected coefficients against the signal scale without inflating
    everyone else's interference).
    """
    if v_test is None:
        v_test = v_h
    pvt = p_v.T  # (n_obs, n_coef) view
    mean_c = s * (h_hat * pvt)
    var_c = s2 * (pvt * (1.0 - pvt) * (h_hat * h_hat) + pvt * v_h)
    u_s = mean_c.sum(axis=1, keepdims=True) - mean_c
    v_s = noise_var + (var_c.sum(axis=1, keepdims=True) - var_c)
    np.maximum(v_s, var_floor, out=v_s)

    resid = y[:, None] - u_s
    resid_active = resid - s * h_hat
    v_tot = v_s + s2 * v_test
    l_s = (
        -0.5 * np.log(v_tot / v_s)
        - resid_active * resid_active / (2.0 * v_tot)
        + resid * resid / (2.0 * v_s)
    )
    np.clip(l_s, -llr_clamp, llr_clamp, out=l_s)
    return u_s, v_s, l_s


def variable_messages(l_s, l_0, llr_clamp):
    """Variable-node update.

    Returns (l_v, posterior, b_soft): the extrinsic LLR matrix shaped
    (n_coef, n_obs) (column totals of l_s minus the own edge, plus the
    prior), the full-sum posterior LLR per coefficient, and its logistic.
    """
    col = l_s.sum(axis=0)
    l_v = (l_0 + col)[:, None] - l_s.T
    np.clip(l_v, -llr_clamp, llr_clamp, out=l_v)
    posterior = np.clip(l_0 + col, -llr_clamp, llr_clamp)
    b_soft = 1.0 / (1.0 + np.exp(-posterior))
    return l_v, posterior, b_soft


def em_stats(y, s, u_s, v_s, s_floor):
    """Per-coefficient pseudo-observation statistics for the sparsity EM
    step, plain-average form.

    For each coefficient, averages s^-1 (y - u_s) and s^-2 v_s over the
    rows whose |s| exceeds s_floor (tiny coefficients would amplify noise
    through the inverse). Returns (r, mu_r, kept) with kept the number of
    rows retained per column; columns with kept == 0 return zeros.
    """
    keep = np.abs(s) > s_floor
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_s = np.where(keep, 1.0, np.nan) / s
    inv_s[~keep] = 0.0
    kept = keep.sum(axis=0)
    denom = np.maximum(kept, 1)
    r = (inv_s * (y[:, None] - u_s)).sum(axis=0) / denom
    mu_r = (inv_s * inv_s * v_s).sum(axis=0) / denom
    return r, mu_r, kept


def em_stats_matched(y, s, u_s, v_s):
    """Pseudo-observation statistics combined with inverse-variance
    (matched filter) weights.

    r is the minimum-variance unbiased combination of the per-row
    unbiased estimates s^-1 (y - u_s), so mu_r = 1 / sum(s^2 / v_s) is
    finite even when some training coefficients are arbitrarily small.
    Returns (r, mu_r, kept) with kept = number of rows (all retained).
    """
    weight = s / v_s
    denom = (s * weight).sum(axis=0)
    r = (weight * (y[:, None] - u_s)).sum(axis=0) / denom
    mu_r = 1.0 / denom
    kept = np.full(s.shape[1], s.shape[0], dtype=np.int64)
    return r, mu_r, kept
