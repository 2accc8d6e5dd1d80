#!/usr/bin/env python3
"""Benchmark the message-passing kernel backends.

Times one full message-passing iteration (sum-node update, variable-node
update, sparsity statistics) per backend across problem sizes and prints
a comparison table. Run as `python benchmarks/bench_kernels.py`.
"""
import argparse
import time

from lsesmp.kernels import available_backends
from lsesmp.numerics import RandomStream

SIZES = [(64, 64), (128, 64), (256, 256), (512, 1024), (2048, 2048)]


def make_problem(m, n, seed=7):
    rng = RandomStream(seed)
    return {
        "y": rng.normals(m),
        "s": rng.normal_matrix(m, n),
        "h": rng.normals(n),
        "v_h": 0.5 + rng.uniforms(n),
        "p_v": rng.uniforms(n * m).reshape(n, m),
    }


def one_iteration(impl, prob, s_sq):
    u_s, v_s, l_s = impl.sum_messages(
        prob["y"], prob["s"], s_sq, prob["h"], prob["v_h"], prob["p_v"],
        0.3, 1e-12, 30.0,
    )
    impl.variable_messages(l_s, -0.5, 30.0)
    impl.em_stats_matched(prob["y"], prob["s"], u_s, v_s)


def time_backend(impl, prob, repeats):
    s_sq = prob["s"] * prob["s"]
    one_iteration(impl, prob, s_sq)  # warm up
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        one_iteration(impl, prob, s_sq)
        samples.append(time.perf_counter() - t0)
    return min(samples)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    names = list(backends)
    header = f"{'size':>12} | " + " | ".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += " | speedup"
    print(header)
    print("-" * len(header))
    for m, n in SIZES:
        prob = make_problem(m, n)
        times = [time_backend(backends[name], prob, args.repeats) for name in names]
        row = f"{f'{m}x{n}':>12} | " + " | ".join(f"{t * 1e3:>9.2f} ms" for t in times)
        if len(times) == 2:
            row += f" | {times[0] / times[1]:>6.2f}x"
        print(row)
    if len(names) < 2:
        print("\ncompiled backend unavailable; only the numpy path was timed")


if __name__ == "__main__":
    main()
