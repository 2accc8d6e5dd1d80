"""Command-line front end.

Subcommands: sweep (Monte-Carlo NMSE sweeps), exit-chart (density
evolution tabulation), crlb (bound-only table), demo-beamspace
(geometric-channel sparsity demonstration), validate (built-in property
checks). Exit codes: 0 success, 1 configuration error, 2 numeric abort.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace

import numpy as np

from . import kernels
from .channel import (
    GeometricParams,
    SystemDims,
    dft_matrix,
    effective_sparsity,
    geometric_channel,
    to_beamspace,
)
from .harness import (
    CONFIG_KEYS,
    EXIT_SWEEP_KINDS,
    ConfigError,
    NumericAbortError,
    load_config,
    run_exit,
    run_sweep,
    crlb_table,
)
from .numerics import RandomStream
from . import validate as validation

PAPER_SCALE = SystemDims(n_t=32, n_r=64, n_s=32, t_len=64)

CONFIG_HELP = (
    "config file format: UTF-8 lines of 'key = value', '#' comments; "
    "accepted keys: " + ", ".join(CONFIG_KEYS) + ". "
    "Keys: n_t/n_r/n_s/t_len system dims; eta sparsity ratio; u_h/var_h "
    "nonzero coefficient mean and variance; snr_db fixed SNR; sweep one "
    "of snr, sparsity, iterations, training_len, beta, exit; "
    "sweep_values comma list; trials Monte-Carlo trials per value; seed "
    "base seed; estimators subset of lse, lse_smp, genie_ls, omp; "
    "max_iters/eps/llr_clamp estimator loop controls; out output CSV."
)


def _add_common(parser, needs_config=True):
    parser.add_argument(
        "--config", required=needs_config, help="path to the config file"
    )
    parser.add_argument("--seed", type=int, help="override the base seed")
    parser.add_argument("--trials", type=int, help="override the trial count")
    parser.add_argument("--out", help="override the output path")
    parser.add_argument(
        "--workers", type=int, default=1,
        help="worker threads for trials (output is identical at any count)",
    )
    parser.add_argument(
        "--paper-scale", action="store_true",
        help="use the 32x64-antenna configuration instead of the config dims",
    )


def _load(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    if args.trials is not None:
        config = replace(config, trials=args.trials)
    if args.out is not None:
        config = replace(config, output_path=args.out)
    if getattr(args, "paper_scale", False):
        config = replace(config, dims=PAPER_SCALE)
    if getattr(args, "workers", 1) and args.workers > 1:
        config = replace(config, workers=args.workers)
    return config


def _cmd_sweep(args):
    config = _load(args)
    if config.sweep_kind in EXIT_SWEEP_KINDS:
        records = run_exit(config)
        print(f"wrote {len(records)} exit-chart rows to {config.output_path}")
    else:
        records = run_sweep(config)
        print(f"wrote {len(records)} sweep rows to {config.output_path}")
    return 0


def _cmd_exit_chart(args):
    config = _load(args)
    if config.sweep_kind not in EXIT_SWEEP_KINDS:
        raise ConfigError(
            "exit-chart needs a config with sweep = exit (training-length "
            "sweep) or sweep = beta"
        )
    records = run_exit(config)
    print(f"wrote {len(records)} exit-chart rows to {config.output_path}")
    return 0


def _cmd_crlb(args):
    config = _load(args)
    rows = crlb_table(config)
    out = config.output_path
    lines = ["snr_db,crlb_lse_db,crlb_lsesmp_db"]
    for snr_db, full_db, masked_db in rows:
        lines.append(f"{snr_db!r},{full_db!r},{masked_db!r}")
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(rows)} bound rows to {out}")
    return 0


def _cmd_demo_beamspace(args):
    dims = PAPER_SCALE if args.paper_scale else SystemDims(8, 8, 8, 8)
    rng = RandomStream(args.seed if args.seed is not None else 7)
    paths = args.paths
    if args.on_grid:
        # angles whose sine lands exactly on the receive/transmit DFT bins
        arr = [math.asin(2.0 * k / dims.n_r) for k in range(paths)]
        dep = [math.asin(2.0 * k / dims.n_t) for k in range(paths)]
    else:
        arr = list(2.0 * math.pi * rng.uniforms(paths))
        dep = list(2.0 * math.pi * rng.uniforms(paths))
    gains = [complex(g, 0.0) for g in rng.normals(paths)]
    params = GeometricParams(
        paths=paths,
        path_loss=1.0,
        element_spacing_over_wavelength=0.5,
        gains=tuple(gains),
        departure_angles=tuple(dep),
        arrival_angles=tuple(arr),
    )
    h = geometric_channel(dims, params)
    h_v = to_beamspace(h, dft_matrix(dims.n_r), dft_matrix(dims.n_t))
    frac = effective_sparsity(h_v)
    print(f"antenna-domain channel: {dims.n_r}x{dims.n_t}, {paths} path(s)")
    print(f"beamspace energy concentration: {frac:.4f} of entries carry 99% "
          f"of the squared norm ({'on' if args.on_grid else 'off'}-grid angles)")
    if args.out:
        np.savetxt(args.out, np.abs(h_v), delimiter=",")
        print(f"wrote beamspace magnitudes to {args.out}")
    return 0


def _cmd_validate(args):
    failures = validation.run_all(verbose=True)
    return 0 if failures == 0 else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lsesmp",
        description=(
            "Sparse beamspace channel estimation simulator: iterative "
            "LSE + message-passing estimator, baselines, covariance "
            f"bounds and EXIT analysis (kernel backend: {kernels.BACKEND})"
        ),
        epilog=CONFIG_HELP,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep",
                       epilog=CONFIG_HELP)
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("exit-chart", help="tabulate the density-evolution "
                       "transfer curve and fixed points", epilog=CONFIG_HELP)
    _add_common(p)
    p.set_defaults(func=_cmd_exit_chart)

    p = sub.add_parser("crlb", help="tabulate the covariance bounds only",
                       epilog=CONFIG_HELP)
    _add_common(p)
    p.set_defaults(func=_cmd_crlb)

    p = sub.add_parser("demo-beamspace",
                       help="show beamspace sparsity of a geometric channel")
    p.add_argument("--paths", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--on-grid", action="store_true",
                   help="place path angles exactly on the DFT grid")
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--out", help="write beamspace magnitudes as CSV")
    p.set_defaults(func=_cmd_demo_beamspace)

    p = sub.add_parser("validate", help="run the built-in property checks")
    p.set_defaults(func=_cmd_validate)
    return parser


def cli_main(argv=None):
    logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericAbortError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 2


def main():
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
