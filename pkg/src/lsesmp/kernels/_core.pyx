# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled message-passing kernels.

Single fused pass per update instead of numpy's chain of elementwise
temporaries; same totals-minus-own-edge structure as the numpy backend.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log

cnp.import_array()

BACKEND_NAME = "cython"


def sum_messages(double[::1] y, double[:, ::1] s, double[:, ::1] s2,
                 double[::1] h_hat, double[::1] v_h, double[:, ::1] p_v,
                 double noise_var, double var_floor, double llr_clamp,
                 v_test=None):
    cdef Py_ssize_t m = s.shape[0], n = s.shape[1]
    u_s_arr = np.empty((m, n))
    v_s_arr = np.empty((m, n))
    l_s_arr = np.empty((m, n))
    cdef double[:, ::1] u_s = u_s_arr
    cdef double[:, ::1] v_s = v_s_arr
    cdef double[:, ::1] l_s = l_s_arr
    cdef double[::1] v_t = v_h if v_test is None else v_test
    cdef Py_ssize_t i, j
    cdef double p, mc, vc, tot_m, tot_v, us, vs, vtot, resid, resid_a, ls

    for i in range(m):
        tot_m = 0.0
        tot_v = 0.0
        for j in range(n):
            p = p_v[j, i]
            mc = s[i, j] * h_hat[j] * p
            vc = s2[i, j] * (p * (1.0 - p) * h_hat[j] * h_hat[j] + p * v_h[j])
            u_s[i, j] = mc
            v_s[i, j] = vc
            tot_m += mc
            tot_v += vc
        for j in range(n):
            us = tot_m - u_s[i, j]
            vs = noise_var + (tot_v - v_s[i, j])
            if vs < var_floor:
                vs = var_floor
            vtot = vs + s2[i, j] * v_t[j]
            resid = y[i] - us
            resid_a = resid - s[i, j] * h_hat[j]
            ls = (-0.5 * log(vtot / vs)
                  - resid_a * resid_a / (2.0 * vtot)
                  + resid * resid / (2.0 * vs))
            if ls > llr_clamp:
                ls = llr_clamp
            elif ls < -llr_clamp:
                ls = -llr_clamp
            u_s[i, j] = us
            v_s[i, j] = vs
            l_s[i, j] = ls
    return u_s_arr, v_s_arr, l_s_arr


def variable_messages(double[:, ::1] l_s, double l_0, double llr_clamp):
    cdef Py_ssize_t m = l_s.shape[0], n = l_s.shape[1]
    l_v_arr = np.empty((n, m))
    post_arr = np.empty(n)
    b_soft_arr = np.empty(n)
    cdef double[:, ::1] l_v = l_v_arr
    cdef double[::1] post = post_arr
    cdef double[::1] b_soft = b_soft_arr
    col_arr = np.zeros(n)
    cdef double[::1] col = col_arr
    cdef Py_ssize_t i, j
    cdef double lv, p_llr

    for i in range(m):
        for j in range(n):
            col[j] += l_s[i, j]
    for j in range(n):
        for i in range(m):
            lv = l_0 + col[j] - l_s[i, j]
            if lv > llr_clamp:
                lv = llr_clamp
            elif lv < -llr_clamp:
                lv = -llr_clamp
            l_v[j, i] = lv
        p_llr = l_0 + col[j]
        if p_llr > llr_clamp:
            p_llr = llr_clamp
        elif p_llr < -llr_clamp:
            p_llr = -llr_clamp
        post[j] = p_llr
        b_soft[j] = 1.0 / (1.0 + exp(-p_llr))
    return l_v_arr, post_arr, b_soft_arr


def em_stats(double[::1] y, double[:, ::1] s, double[:, ::1] u_s,
             double[:, ::1] v_s, double s_floor):
    cdef Py_ssize_t m = s.shape[0], n = s.shape[1]
    r_arr = np.zeros(n)
    mu_arr = np.zeros(n)
    kept_arr = np.zeros(n, dtype=np.int64)
    cdef double[::1] r = r_arr
    cdef double[::1] mu = mu_arr
    cdef cnp.int64_t[::1] kept = kept_arr
    cdef Py_ssize_t i, j
    cdef double inv, denom

    for i in range(m):
        for j in range(n):
            if fabs(s[i, j]) > s_floor:
                inv = 1.0 / s[i, j]
                r[j] += inv * (y[i] - u_s[i, j])
                mu[j] += inv * inv * v_s[i, j]
                kept[j] += 1
    for j in range(n):
        denom = kept[j] if kept[j] > 0 else 1.0
        r[j] /= denom
        mu[j] /= denom
    return r_arr, mu_arr, kept_arr


def em_stats_matched(double[::1] y, double[:, ::1] s, double[:, ::1] u_s,
                     double[:, ::1] v_s):
    cdef Py_ssize_t m = s.shape[0], n = s.shape[1]
    r_arr = np.zeros(n)
    mu_arr = np.zeros(n)
    kept_arr = np.full(n, m, dtype=np.int64)
    cdef double[::1] r = r_arr
    cdef double[::1] mu = mu_arr
    cdef Py_ssize_t i, j
    cdef double w

    for i in range(m):
        for j in range(n):
            w = s[i, j] / v_s[i, j]
            r[j] += w * (y[i] - u_s[i, j])
            mu[j] += w * s[i, j]
    for j in range(n):
        r[j] /= mu[j]
        mu[j] = 1.0 / mu[j]
    return r_arr, mu_arr, kept_arr
