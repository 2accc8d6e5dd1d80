"""Built-in self checks for the `lsesmp validate` subcommand.

A fast, deterministic subset of the package's invariants; the full test
suite lives under tests/ and is run with pytest.
"""
from __future__ import annotations

import numpy as np

from .bounds import crlb_lse, crlb_lse_smp, score_identity_check
from .channel import SparseChannelSpec, SystemDims
from .estimator import EstimatorConfig, genie_ls, nmse, run_lse_smp
from .exit_chart import ExitParams, ber_predict, exit_zeta
from .harness import make_instance
from .numerics import RandomStream, kron, pseudo_inverse, stream_for_trial


def _checks():
    rng = RandomStream(2024)

    def pinv_identities():
        a = rng.normal_matrix(6, 4) @ rng.normal_matrix(4, 5)
        api = pseudo_inverse(a)
        return (
            np.linalg.norm(a @ api @ a - a) < 1e-9 * np.linalg.norm(a)
            and np.linalg.norm(api @ a @ api - api) < 1e-9 * np.linalg.norm(api)
        )

    def kron_identity():
        d = rng.normal_matrix(3, 3)
        h = rng.normal_matrix(3, 3)
        x = rng.normal_matrix(3, 3)
        lhs = (d @ h @ x).flatten(order="F")
        rhs = kron(x.T, d) @ h.flatten(order="F")
        return np.allclose(lhs, rhs, atol=1e-12)

    def stream_determinism():
        a = stream_for_trial(99, 3).normals(64)
        b = stream_for_trial(99, 3).normals(64)
        c = stream_for_trial(99, 4).normals(64)
        return np.array_equal(a, b) and not np.array_equal(a, c)

    def bound_ordering():
        inst = make_instance(
            SystemDims(4, 4, 4, 4), SparseChannelSpec(0.2, 10.0, 10.0),
            15.0, stream_for_trial(5, 0),
        )
        full = crlb_lse(inst.s_bar, inst.noise_variance).trace_mse
        masked = crlb_lse_smp(inst.s_bar, inst.b_true, inst.noise_variance).trace_mse
        return masked <= full

    def score_identity():
        inst = make_instance(
            SystemDims(3, 4, 3, 4), SparseChannelSpec(0.3, 0.0, 1.0),
            10.0, stream_for_trial(6, 1),
        )
        resid = score_identity_check(
            inst.s_bar, inst.b_true, inst.h_true * inst.b_true,
            inst.y_bar, inst.noise_variance,
        )
        return resid < 1e-8

    def noiseless_recovery():
        dims = SystemDims(8, 8, 8, 8)
        rng2 = stream_for_trial(7, 2)
        inst = make_instance(dims, SparseChannelSpec(0.05, 10.0, 10.0), 200.0, rng2)
        res = run_lse_smp(inst, EstimatorConfig(max_iters=10))
        return nmse(res.h_star, inst.h_true) < 1e-6

    def genie_matches_truth_noiseless():
        dims = SystemDims(4, 4, 4, 4)
        inst = make_instance(
            dims, SparseChannelSpec(0.2, 10.0, 10.0), 200.0,
            stream_for_trial(8, 3),
        )
        res = genie_ls(inst)
        return nmse(res.h_star, inst.h_true) < 1e-12

    def zeta_finite_extremes():
        params = ExitParams(t_len=64, n_t=32, snr=10.0, beta=10.0, l_0=1.9459)
        vals = [exit_zeta(l, params) for l in (-1e6, -700.0, 0.0, 700.0, 1e6)]
        return all(np.isfinite(vals))

    def ber_monotone():
        grid = np.linspace(0.0, 40.0, 200)
        vals = [ber_predict(u) for u in grid]
        return vals[0] == 0.5 and all(b < a for a, b in zip(vals, vals[1:]))

    return [
        ("pseudo-inverse reconstruction identities", pinv_identities),
        ("kron vectorization identity", kron_identity),
        ("trial stream determinism and disjointness", stream_determinism),
        ("bound ordering (masked <= full trace)", bound_ordering),
        ("score/information identity", score_identity),
        ("noiseless sparse recovery", noiseless_recovery),
        ("genie estimator noiseless exactness", genie_matches_truth_noiseless),
        ("transfer gain finite at extreme LLRs", zeta_finite_extremes),
        ("bit-error proxy strictly decreasing", ber_monotone),
    ]


def run_all(verbose=False):
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in _checks():
        try:
            ok = bool(fn())
        except Exception as exc:  # noqa: BLE001 - report, do not crash
            ok = False
            if verbose:
                print(f"[ERROR] {name}: {exc!r}")
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1
    if verbose:
        print("all checks passed" if failures == 0 else f"{failures} check(s) failed")
    return failures
