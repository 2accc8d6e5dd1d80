"""Configuration-driven Monte-Carlo experiment runner.

Sweeps run `trials` independent instances per sweep value, score the
requested estimators on shared instances, overlay the two covariance
bound traces, and emit one CSV row per (sweep value, estimator). Results
are byte-reproducible for a fixed (config, seed) regardless of worker
count: every trial owns a stream derived from (seed, trial index) and
the reduction always walks trials in index order. The trial stream does
not depend on the sweep value, so curves across sweep values are paired
comparisons sharing training and noise draws.
"""
from __future__ import annotations

import concurrent.futures
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import crlb_lse, crlb_lse_smp
from .channel import (
    ProblemInstance,
    SparseChannelSpec,
    SystemDims,
    bernoulli_gaussian_channel,
    build_training,
    observe,
)
from .estimator import (
    EstimationError,
    EstimatorConfig,
    genie_ls,
    lse_baseline,
    nmse,
    omp_baseline,
    run_lse_smp,
)
from .exit_chart import (
    ExitParams,
    ber_predict,
    exit_fixed_points,
    exit_trajectory,
    exit_update,
)
from .numerics import NumericsError, stream_for_trial

__all__ = [
    "ConfigError",
    "NumericAbortError",
    "SweepConfig",
    "SweepRecord",
    "ExitRecord",
    "nmse",
    "parse_config_text",
    "load_config",
    "make_instance",
    "noise_variance_for_snr",
    "run_sweep",
    "run_exit",
    "write_sweep_csv",
    "write_exit_csv",
]

log = logging.getLogger(__name__)

SWEEP_KINDS = ("snr", "sparsity", "iterations", "training_len", "beta", "exit")
MC_SWEEP_KINDS = ("snr", "sparsity", "iterations", "training_len")
EXIT_SWEEP_KINDS = ("exit", "beta")
ESTIMATOR_NAMES = ("lse", "lse_smp", "genie_ls", "omp")

CONFIG_KEYS = (
    "n_t", "n_r", "n_s", "t_len", "eta", "u_h", "var_h", "snr_db",
    "sweep", "sweep_values", "trials", "seed", "estimators",
    "max_iters", "eps", "llr_clamp", "out",
)

SWEEP_CSV_COLUMNS = (
    "sweep_value", "snr_db", "estimator", "nmse_db", "nmse_std_db",
    "crlb_lse_db", "crlb_lsesmp_db", "iters_mean", "trials", "seed",
)
EXIT_CSV_COLUMNS = (
    "sweep_value", "sigma2_in", "sigma2_out", "fixed_point",
    "ber_predicted", "steps",
)

MAX_FAILURE_FRACTION = 0.01
EXIT_GRID_POINTS = 64


class ConfigError(Exception):
    """Invalid configuration file or option."""


class NumericAbortError(Exception):
    """Too many per-trial numeric failures; the sweep is not trustworthy."""


@dataclass(frozen=True)
class SweepConfig:
    dims: SystemDims = SystemDims(8, 8, 8, 8)
    channel: SparseChannelSpec = SparseChannelSpec(0.125, 10.0, 10.0)
    snr_db_grid: tuple = (20.0,)
    sweep_kind: str = "snr"
    sweep_values: tuple = (20.0,)
    trials: int = 200
    base_seed: int = 20240801
    estimators: tuple = ("lse", "lse_smp")
    estimator_config: EstimatorConfig = field(default_factory=EstimatorConfig)
    output_path: str = "sweep.csv"
    signal_variance: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.sweep_kind not in SWEEP_KINDS:
            raise ConfigError(
                f"unknown sweep kind {self.sweep_kind!r}; expected one of "
                f"{', '.join(SWEEP_KINDS)}"
            )
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.sweep_values:
            raise ConfigError("sweep_values must be non-empty")
        if not self.snr_db_grid:
            raise ConfigError("snr grid must be non-empty")
        for name in self.estimators:
            if name not in ESTIMATOR_NAMES:
                raise ConfigError(
                    f"unknown estimator {name!r}; expected a subset of "
                    f"{', '.join(ESTIMATOR_NAMES)}"
                )

    @property
    def snr_db(self):
        return self.snr_db_grid[0]


@dataclass
class SweepRecord:
    sweep_value: float
    snr_db: float
    estimator: str
    nmse_db: float
    nmse_std_db: float
    crlb_lse_db: float
    crlb_lsesmp_db: float
    iters_mean: float
    trials: int
    base_seed: int


@dataclass
class ExitRecord:
    sweep_value: float
    sigma2_in: float
    sigma2_out: float
    fixed_point: float
    ber_predicted: float
    steps: int


# ---------------------------------------------------------------------------
# config file handling

def _parse_scalar(text):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_config_text(text):
    """Parse the flat `key = value` config format.

    Lines are UTF-8, `#` starts a comment, values are scalars or
    comma-separated lists. Unknown keys are rejected with the accepted
    key set spelled out.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(
                f"unknown config key {key!r}; accepted keys: "
                f"{', '.join(CONFIG_KEYS)}"
            )
        if key in raw:
            raise ConfigError(f"duplicate config key {key!r}")
        raw[key] = value

    cfg = {}
    for key, value in raw.items():
        if key in ("sweep_values", "estimators"):
            items = [v.strip() for v in value.split(",") if v.strip()]
            if not items:
                raise ConfigError(f"config key {key!r} has an empty list")
            cfg[key] = tuple(_parse_scalar(v) for v in items)
        else:
            cfg[key] = _parse_scalar(value)
    return cfg


def _config_from_mapping(cfg):
    try:
        dims = SystemDims(
            n_t=int(cfg.get("n_t", 8)),
            n_r=int(cfg.get("n_r", 8)),
            n_s=int(cfg.get("n_s", 8)),
            t_len=int(cfg.get("t_len", 8)),
        )
        channel = SparseChannelSpec(
            sparsity=float(cfg.get("eta", 0.125)),
            nonzero_mean=float(cfg.get("u_h", 10.0)),
            nonzero_variance=float(cfg.get("var_h", 10.0)),
        )
        est_cfg = EstimatorConfig(
            max_iters=int(cfg.get("max_iters", 20)),
            eps=float(cfg.get("eps", 1e-6)),
            llr_clamp=float(cfg.get("llr_clamp", 30.0)),
        )
        sweep_kind = str(cfg.get("sweep", "snr"))
        snr_db = float(cfg.get("snr_db", 20.0))
        sweep_values = cfg.get("sweep_values")
        if sweep_values is None:
            sweep_values = (snr_db,) if sweep_kind == "snr" else ()
        sweep_values = tuple(float(v) for v in sweep_values)
        estimators = cfg.get("estimators", ("lse", "lse_smp"))
        if isinstance(estimators, str):
            estimators = (estimators,)
        return SweepConfig(
            dims=dims,
            channel=channel,
            snr_db_grid=(snr_db,),
            sweep_kind=sweep_kind,
            sweep_values=sweep_values,
            trials=int(cfg.get("trials", 200)),
            base_seed=int(cfg.get("seed", 20240801)),
            estimators=tuple(str(e) for e in estimators),
            estimator_config=est_cfg,
            output_path=str(cfg.get("out", "sweep.csv")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    """Read a config file into a SweepConfig."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return _config_from_mapping(parse_config_text(text))


# ---------------------------------------------------------------------------
# instance generation

def noise_variance_for_snr(s_bar, snr_db):
    """Noise variance realizing the training-power SNR definition
    E||S||_F^2 / E||n||_F^2 for this particular training matrix."""
    s_bar = np.asarray(s_bar)
    power = float(np.sum(np.abs(s_bar) ** 2))
    return power / (s_bar.shape[0] * 10.0 ** (snr_db / 10.0))


def make_instance(dims, channel_spec, snr_db, rng, signal_variance=1.0,
                  fixed_energy=None):
    """One synthetic problem: Gaussian training, Bernoulli-Gaussian truth
    (redrawn until the support is nonempty), and noisy observations.

    fixed_energy, when given, rescales the drawn channel to that exact
    squared norm; sparsity sweeps use it so every trial carries the same
    channel energy regardless of the realized support size.
    """
    if dims.n_obs < dims.n_coef:
        raise ConfigError(
            "gaussian training needs n_s * t_len >= n_r * n_t "
            f"(got {dims.n_obs} < {dims.n_coef})"
        )
    s_bar = build_training(dims, signal_variance, "gaussian", rng)
    h, b = bernoulli_gaussian_channel(dims.n_coef, channel_spec, rng)
    redraws = 0
    while not np.any(b):
        h, b = bernoulli_gaussian_channel(dims.n_coef, channel_spec, rng)
        redraws += 1
    if redraws:
        log.debug("redrew an all-zero channel %d time(s)", redraws)
    if fixed_energy is not None:
        h = h * math.sqrt(fixed_energy / float(h @ h))
    noise_var = noise_variance_for_snr(s_bar, snr_db)
    y = observe(s_bar, h, noise_var, rng)
    return ProblemInstance(
        s_bar=s_bar, h_true=h, b_true=b, y_bar=y,
        noise_variance=noise_var, signal_variance=signal_variance,
    )


# ---------------------------------------------------------------------------
# sweeps

def _sweep_point_settings(config: SweepConfig, value):
    """Dims / channel / SNR / estimator-config for one sweep value."""
    dims = config.dims
    channel = config.channel
    snr_db = config.snr_db
    est_cfg = config.estimator_config
    kind = config.sweep_kind
    if kind == "snr":
        snr_db = float(value)
    elif kind == "sparsity":
        # hold the expected channel energy fixed across sparsity levels
        # (scaling mean and std together preserves the dispersion ratio);
        # with a fixed training SNR this is what keeps the plain-LS curve
        # flat while sparsity-aware estimators improve
        scale = config.channel.sparsity / float(value)
        channel = replace(
            channel,
            sparsity=float(value),
            nonzero_mean=channel.nonzero_mean * math.sqrt(scale),
            nonzero_variance=channel.nonzero_variance * scale,
        )
    elif kind == "iterations":
        est_cfg = replace(est_cfg, max_iters=int(value))
    elif kind == "training_len":
        dims = SystemDims(dims.n_t, dims.n_r, dims.n_s, int(value))
    else:
        raise ConfigError(f"sweep kind {kind!r} is not a Monte-Carlo sweep")
    return dims, channel, snr_db, est_cfg


def _run_trial(config, value_index, trial_index):
    """All per-trial metrics for one (sweep value, trial) cell.

    The trial stream depends on the trial index only, so the same trial
    shares its training matrix and noise draws across sweep values
    (common random numbers): sweep curves are paired comparisons rather
    than independently noisy ones.
    """
    value = config.sweep_values[value_index]
    dims, channel, snr_db, est_cfg = _sweep_point_settings(config, value)
    rng = stream_for_trial(config.base_seed, trial_index)
    fixed_energy = None
    if config.sweep_kind == "sparsity":
        # pin the exact per-trial channel energy so the sweep compares
        # support densities, not channel-norm fluctuations
        base = config.channel
        fixed_energy = (
            dims.n_coef * base.sparsity
            * (base.nonzero_mean**2 + base.nonzero_variance)
        )
    inst = make_instance(dims, channel, snr_db, rng, config.signal_variance,
                         fixed_energy=fixed_energy)
    h_norm_sq = float(inst.h_true @ inst.h_true)

    out = {}
    for name in config.estimators:
        started = time.perf_counter()
        if name == "lse":
            res = lse_baseline(inst, est_cfg)
        elif name == "lse_smp":
            res = run_lse_smp(inst, est_cfg)
        elif name == "genie_ls":
            res = genie_ls(inst, est_cfg)
        elif name == "omp":
            # tuned to the true sparsity ratio (not the per-trial count):
            # the selection budget is eta * n_coef, the same side knowledge
            # the sparsity-aware estimators start from
            k = max(1, round(channel.sparsity * dims.n_coef))
            res = omp_baseline(inst, min(k, dims.n_obs), est_cfg)
        else:  # pragma: no cover - guarded by SweepConfig validation
            raise ConfigError(f"unknown estimator {name!r}")
        runtime = time.perf_counter() - started
        out[name] = (nmse(res.h_star, inst.h_true), res.iters_used, runtime)

    crlb_full = crlb_lse(inst.s_bar, inst.noise_variance).trace_mse / h_norm_sq
    crlb_masked = (
        crlb_lse_smp(inst.s_bar, inst.b_true, inst.noise_variance).trace_mse
        / h_norm_sq
    )
    return out, crlb_full, crlb_masked


def _db(x):
    return 10.0 * math.log10(x)


def _aggregate(config, value, per_trial):
    """Reduce one sweep point's per-trial tuples into SweepRecords."""
    snr_db = (
        float(value) if config.sweep_kind == "snr" else config.snr_db
    )
    crlb_lse_db = _db(float(np.mean([t[1] for t in per_trial])))
    crlb_smp_db = _db(float(np.mean([t[2] for t in per_trial])))
    records = []
    for name in config.estimators:
        vals = np.array([t[0][name][0] for t in per_trial])
        iters = np.array([t[0][name][1] for t in per_trial], dtype=float)
        mean = float(np.mean(vals))
        # delta-method spread of the dB-scale mean
        sem = float(np.std(vals, ddof=1)) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        std_db = (10.0 / math.log(10.0)) * sem / mean if mean > 0 else 0.0
        records.append(
            SweepRecord(
                sweep_value=float(value),
                snr_db=snr_db,
                estimator=name,
                nmse_db=_db(mean),
                nmse_std_db=std_db,
                crlb_lse_db=crlb_lse_db,
                crlb_lsesmp_db=crlb_smp_db,
                iters_mean=float(np.mean(iters)),
                trials=config.trials,
                base_seed=config.base_seed,
            )
        )
    return records


def run_sweep(config: SweepConfig, workers=None):
    """Run a Monte-Carlo sweep and write its CSV.

    Trials execute independently (optionally across a thread pool) and
    are reduced in trial-index order, so the CSV is byte-identical across
    worker counts. Per-trial numeric failures are logged and tolerated up
    to 1% of the sweep's trials, beyond which the run aborts.
    """
    if config.sweep_kind not in MC_SWEEP_KINDS:
        raise ConfigError(
            f"run_sweep handles kinds {MC_SWEEP_KINDS}; "
            f"use run_exit for {EXIT_SWEEP_KINDS}"
        )
    if workers is None:
        workers = config.workers
    _check_writable(config.output_path)

    cells = [
        (vi, ti)
        for vi in range(len(config.sweep_values))
        for ti in range(config.trials)
    ]
    results = {}
    failures = []
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_trial, config, vi, ti): (vi, ti)
                for vi, ti in cells
            }
            for fut in concurrent.futures.as_completed(futures):
                vi, ti = futures[fut]
                try:
                    results[(vi, ti)] = fut.result()
                except (EstimationError, NumericsError) as exc:
                    failures.append(((vi, ti), exc))
    else:
        for vi, ti in cells:
            try:
                results[(vi, ti)] = _run_trial(config, vi, ti)
            except (EstimationError, NumericsError) as exc:
                failures.append(((vi, ti), exc))

    if failures:
        for (vi, ti), exc in failures:
            log.warning("trial %d of sweep value %r failed: %s",
                        ti, config.sweep_values[vi], exc)
        if len(failures) > MAX_FAILURE_FRACTION * len(cells):
            raise NumericAbortError(
                f"{len(failures)} of {len(cells)} trials failed numerically"
            )

    records = []
    for vi, value in enumerate(config.sweep_values):
        per_trial = [
            results[(vi, ti)]
            for ti in range(config.trials)
            if (vi, ti) in results
        ]
        if not per_trial:
            raise NumericAbortError(
                f"all trials failed for sweep value {value!r}"
            )
        records.extend(_aggregate(config, value, per_trial))
    # wall-clock summary (the CSV schema is fixed; runtimes go to the log)
    for name in config.estimators:
        runtimes = [t[0][name][2] for t in results.values()]
        log.info("estimator %s: mean runtime %.3f ms per trial",
                 name, 1e3 * float(np.mean(runtimes)))
    write_sweep_csv(config.output_path, records)
    return records


def exit_params_for(config: SweepConfig, value):
    """Density-evolution parameters for one EXIT sweep value.

    kind='exit' sweeps the training length; kind='beta' sweeps the
    nonzero-coefficient mean-to-variance ratio at fixed training length.
    The recursion's snr is the configured dB value on a linear scale, and
    the prior LLR enters by magnitude (the signed prior kills the
    recursion for any sparsity below one half).
    """
    eta = config.channel.sparsity
    l_0 = abs(math.log(eta / (1.0 - eta)))
    snr = 10.0 ** (config.snr_db / 10.0)
    if config.sweep_kind == "exit":
        t_len, beta = int(value), config.channel.beta
    elif config.sweep_kind == "beta":
        t_len, beta = config.dims.t_len, float(value)
    else:
        raise ConfigError(f"{config.sweep_kind!r} is not an EXIT sweep kind")
    return ExitParams(
        t_len=t_len, n_t=config.dims.n_t, snr=snr, beta=beta, l_0=l_0
    )


def run_exit(config: SweepConfig, u_init=0.01, max_steps=500):
    """Tabulate the EXIT transfer curve and locate fixed points.

    For each sweep value, emits (sigma2_in, sigma2_out) pairs over a
    deterministic grid (variances are twice the LLR means under the
    symmetry condition), together with the scanned fixed point, its
    bit-error prediction and the plain-iteration step count.
    """
    if config.sweep_kind not in EXIT_SWEEP_KINDS:
        raise ConfigError(
            f"run_exit handles kinds {EXIT_SWEEP_KINDS}, "
            f"got {config.sweep_kind!r}"
        )
    _check_writable(config.output_path)
    records = []
    for value in config.sweep_values:
        params = exit_params_for(config, value)
        roots = exit_fixed_points(params)
        traj = exit_trajectory(params, u_init=u_init, max_steps=max_steps)
        fp = float(roots[-1]) if roots else math.nan
        ber = traj.ber_at_fixed_point
        if math.isnan(ber) and roots:
            ber = ber_predict(fp)
        steps = len(traj.u_values) - 1
        grid_hi = max(2.0 * (fp if roots else abs(params.l_0)), 1.0) * 2.0
        for sigma2_in in np.linspace(0.02, grid_hi, EXIT_GRID_POINTS):
            sigma2_out = 2.0 * exit_update(sigma2_in / 2.0, params)
            records.append(
                ExitRecord(
                    sweep_value=float(value),
                    sigma2_in=float(sigma2_in),
                    sigma2_out=float(sigma2_out),
                    fixed_point=fp,
                    ber_predicted=ber,
                    steps=steps,
                )
            )
    write_exit_csv(config.output_path, records)
    return records


# ---------------------------------------------------------------------------
# CSV output

def _check_writable(path):
    parent = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ConfigError(f"output path {path!r} is not writable")


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest round-trip decimal
    return str(value)


def _write_csv(path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, col)) for col in columns))
    data = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)


def write_sweep_csv(path, records):
    cols = list(SWEEP_CSV_COLUMNS)
    remap = {"seed": "base_seed"}
    rows = records

    class _View:
        def __init__(self, rec):
            self._rec = rec

        def __getattr__(self, name):
            return getattr(self._rec, remap.get(name, name))

    _write_csv(path, cols, [_View(r) for r in rows])


def write_exit_csv(path, records):
    _write_csv(path, EXIT_CSV_COLUMNS, records)


def crlb_table(config: SweepConfig):
    """(snr_db, crlb_lse_db, crlb_lsesmp_db) rows over the SNR sweep
    values, averaging normalized bound traces over the config's trials."""
    rows = []
    for vi, snr_db in enumerate(config.sweep_values):
        full = []
        masked = []
        for ti in range(config.trials):
            rng = stream_for_trial(config.base_seed, ti)
            inst = make_instance(
                config.dims, config.channel, float(snr_db), rng,
                config.signal_variance,
            )
            h_norm_sq = float(inst.h_true @ inst.h_true)
            full.append(
                crlb_lse(inst.s_bar, inst.noise_variance).trace_mse / h_norm_sq
            )
            masked.append(
                crlb_lse_smp(inst.s_bar, inst.b_true, inst.noise_variance).trace_mse
                / h_norm_sq
            )
        rows.append(
            (float(snr_db), _db(float(np.mean(full))), _db(float(np.mean(masked))))
        )
    return rows
