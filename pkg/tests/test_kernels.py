"""The vectorized kernels checked against edge-wise reference
implementations written as plain double loops (see oracles.py)."""
import math

import numpy as np
import pytest
from oracles import (
    edgewise_em_stats,
    edgewise_sum_messages,
    edgewise_variable_messages,
)

from lsesmp.kernels import available_backends
from lsesmp.numerics import RandomStream


def random_edge_problem(m, n, seed):
    rng = RandomStream(seed)
    y = rng.normals(m)
    s = rng.normal_matrix(m, n)
    h = rng.normals(n)
    v_h = 0.5 + rng.uniforms(n)
    p_v = rng.uniforms(n * m).reshape(n, m)
    return y, s, h, v_h, p_v


BACKENDS = sorted(available_backends().items())


@pytest.mark.parametrize("name,impl", BACKENDS, ids=[b[0] for b in BACKENDS])
@pytest.mark.parametrize("m,n", [(1, 1), (2, 3), (3, 4), (5, 8), (8, 12)])
class TestAgainstEdgewiseOracle:
    def test_sum_messages(self, name, impl, m, n):
        y, s, h, v_h, p_v = random_edge_problem(m, n, 100 + m * n)
        got = impl.sum_messages(y, s, s * s, h, v_h, p_v, 0.3, 1e-12, 30.0)
        want = edgewise_sum_messages(y, s, h, v_h, p_v, 0.3, 1e-12, 30.0)
        for g, w in zip(got, want):
            assert np.allclose(g, w, atol=1e-12, rtol=1e-12)

    def test_variable_messages(self, name, impl, m, n):
        rng = RandomStream(200 + m * n)
        l_s = rng.normal_matrix(m, n)
        got = impl.variable_messages(l_s, -0.4, 30.0)
        want = edgewise_variable_messages(l_s, -0.4, 30.0)
        for g, w in zip(got, want):
            assert np.allclose(g, w, atol=1e-12, rtol=1e-12)

    def test_em_stats(self, name, impl, m, n):
        y, s, h, v_h, p_v = random_edge_problem(m, n, 300 + m * n)
        u_s, v_s, _ = impl.sum_messages(y, s, s * s, h, v_h, p_v, 0.3, 1e-12, 30.0)
        floor = 1e-8 * math.sqrt(np.mean(s * s))
        got = impl.em_stats(y, s, u_s, v_s, floor)
        want = edgewise_em_stats(y, s, u_s, v_s, floor)
        for g, w in zip(got, want):
            assert np.allclose(g, w, atol=1e-12, rtol=1e-12)

    def test_em_stats_matched(self, name, impl, m, n):
        y, s, h, v_h, p_v = random_edge_problem(m, n, 400 + m * n)
        u_s, v_s, _ = impl.sum_messages(y, s, s * s, h, v_h, p_v, 0.3, 1e-12, 30.0)
        r, mu_r, kept = impl.em_stats_matched(y, s, u_s, v_s)
        # reference: explicit inverse-variance combination per column
        for j in range(n):
            w = s[:, j] / v_s[:, j]
            denom = float(w @ s[:, j])
            r_ref = float(w @ (y - u_s[:, j])) / denom
            assert r[j] == pytest.approx(r_ref, abs=1e-12, rel=1e-12)
            assert mu_r[j] == pytest.approx(1.0 / denom, abs=1e-15, rel=1e-12)
        assert np.all(kept == m)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree():
    impls = dict(BACKENDS)
    y, s, h, v_h, p_v = random_edge_problem(12, 20, 7)
    a = impls["numpy"].sum_messages(y, s, s * s, h, v_h, p_v, 0.7, 1e-12, 30.0)
    b = impls["cython"].sum_messages(y, s, s * s, h, v_h, p_v, 0.7, 1e-12, 30.0)
    for x, z in zip(a, b):
        assert np.allclose(x, z, atol=1e-12, rtol=1e-12)
    la = impls["numpy"].variable_messages(a[2], 0.3, 30.0)
    lb = impls["cython"].variable_messages(b[2], 0.3, 30.0)
    for x, z in zip(la, lb):
        assert np.allclose(x, z, atol=1e-12, rtol=1e-12)


def test_degenerate_zero_probabilities():
    y, s, h, v_h, _ = random_edge_problem(4, 6, 9)
    for _, impl in BACKENDS:
        u_s, v_s, _ = impl.sum_messages(
            y, s, s * s, h, v_h, np.zeros((6, 4)), 0.25, 1e-12, 30.0
        )
        assert np.allclose(u_s, 0.0)
        assert np.allclose(v_s, 0.25)


def test_single_coefficient_has_empty_leave_one_out():
    y, s, h, v_h, p_v = random_edge_problem(5, 1, 10)
    for _, impl in BACKENDS:
        u_s, v_s, _ = impl.sum_messages(y, s, s * s, h, v_h, p_v, 0.4, 1e-12, 30.0)
        assert np.allclose(u_s, 0.0)
        assert np.allclose(v_s, 0.4)


def test_single_observation_extrinsic_equals_prior():
    rng = RandomStream(11)
    l_s = rng.normal_matrix(1, 6)
    for _, impl in BACKENDS:
        l_v, _, _ = impl.variable_messages(l_s, -1.3, 30.0)
        assert np.allclose(l_v, -1.3, atol=1e-15)
