import numpy as np
import pytest

import lsesmp.harness as harness
from lsesmp.channel import SparseChannelSpec, SystemDims
from lsesmp.estimator import EstimationError, EstimatorConfig
from lsesmp.harness import (
    EXIT_CSV_COLUMNS,
    SWEEP_CSV_COLUMNS,
    ConfigError,
    NumericAbortError,
    SweepConfig,
    crlb_table,
    exit_params_for,
    load_config,
    make_instance,
    noise_variance_for_snr,
    parse_config_text,
    run_exit,
    run_sweep,
)
from lsesmp.numerics import stream_for_trial

DESK = SystemDims(8, 8, 8, 16)
CHANNEL = SparseChannelSpec(0.05, 10.0, 10.0)


def small_config(tmp_path, **kw):
    defaults = dict(
        dims=SystemDims(4, 4, 4, 5),
        channel=SparseChannelSpec(0.2, 10.0, 10.0),
        snr_db_grid=(20.0,),
        sweep_kind="snr",
        sweep_values=(10.0, 20.0),
        trials=8,
        base_seed=99,
        estimators=("lse", "lse_smp"),
        estimator_config=EstimatorConfig(max_iters=6),
        output_path=str(tmp_path / "out.csv"),
    )
    defaults.update(kw)
    return SweepConfig(**defaults)


class TestConfigParsing:
    def test_round_trip(self, tmp_path):
        text = """
# comment line
n_t = 4
n_r = 4
n_s = 4
t_len = 5
eta = 0.2
u_h = 10.0
var_h = 10.0
snr_db = 15
sweep = snr
sweep_values = 5, 10, 15
trials = 3
seed = 7
estimators = lse, lse_smp
max_iters = 4
eps = 1e-5
llr_clamp = 25
out = result.csv
"""
        path = tmp_path / "cfg.txt"
        path.write_text(text, encoding="utf-8")
        config = load_config(str(path))
        assert config.dims == SystemDims(4, 4, 4, 5)
        assert config.channel.sparsity == 0.2
        assert config.sweep_values == (5.0, 10.0, 15.0)
        assert config.trials == 3
        assert config.base_seed == 7
        assert config.estimators == ("lse", "lse_smp")
        assert config.estimator_config.max_iters == 4
        assert config.estimator_config.llr_clamp == 25.0
        assert config.output_path == "result.csv"

    def test_unknown_key_lists_accepted_set(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("bogus_key = 1")
        msg = str(err.value)
        assert "bogus_key" in msg
        assert "n_t" in msg and "sweep_values" in msg and "out" in msg

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("n_t = 4\nn_t = 8")

    def test_missing_file(self):
        with pytest.raises(ConfigError) as err:
            load_config("/nonexistent/path.cfg")
        assert "/nonexistent/path.cfg" in str(err.value)

    def test_bad_estimator_name(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            small_config(tmp_path, estimators=("lse", "bogus"))
        assert "bogus" in str(err.value)

    def test_bad_sweep_kind(self, tmp_path):
        with pytest.raises(ConfigError):
            small_config(tmp_path, sweep_kind="bogus")

    def test_invalid_dims_surface_as_config_error(self, tmp_path):
        # domain-type validation failures must exit through ConfigError,
        # not a bare traceback
        path = tmp_path / "bad.cfg"
        path.write_text("n_t = 2\nn_r = 2\nn_s = 4\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(str(path))
        path.write_text("eta = 1.5\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestMakeInstance:
    def test_consistency(self):
        rng = stream_for_trial(1, 0)
        inst = make_instance(DESK, CHANNEL, 20.0, rng)
        assert inst.s_bar.shape == (DESK.n_obs, DESK.n_coef)
        assert np.array_equal(inst.h_true != 0, inst.b_true == 1)
        assert inst.b_true.any()
        resid = inst.y_bar - inst.s_bar @ inst.h_true
        assert abs(resid.var() / inst.noise_variance - 1.0) < 0.6

    def test_underdetermined_rejected(self):
        with pytest.raises(ConfigError):
            make_instance(
                SystemDims(8, 8, 8, 4), CHANNEL, 20.0, stream_for_trial(1, 0)
            )

    def test_noise_variance_solve(self):
        s = np.full((4, 4), 2.0)
        # total power 64 over 4 rows at 10 dB
        assert noise_variance_for_snr(s, 10.0) == pytest.approx(1.6)


class TestRunSweep:
    def test_csv_schema_and_determinism(self, tmp_path):
        config = small_config(tmp_path)
        run_sweep(config)
        first = (tmp_path / "out.csv").read_bytes()
        lines = first.decode().strip().split("\n")
        assert lines[0] == ",".join(SWEEP_CSV_COLUMNS)
        assert len(lines) == 1 + len(config.sweep_values) * len(config.estimators)
        run_sweep(config)
        assert (tmp_path / "out.csv").read_bytes() == first

    def test_thread_count_invariance(self, tmp_path):
        config = small_config(tmp_path)
        run_sweep(config, workers=1)
        serial = (tmp_path / "out.csv").read_bytes()
        run_sweep(config, workers=4)
        assert (tmp_path / "out.csv").read_bytes() == serial

    def test_noiseless_limit_lse(self, tmp_path):
        # near-noiseless square system solved exactly by least squares;
        # a dense strong channel keeps the truth energy well above the
        # backsubstitution error
        config = small_config(
            tmp_path,
            dims=SystemDims(2, 2, 2, 2),
            channel=SparseChannelSpec(0.99, 10.0, 10.0),
            sweep_values=(200.0,),
            trials=1,
            estimators=("lse",),
            base_seed=3,
        )
        records = run_sweep(config)
        assert records[0].nmse_db < -180.0

    def test_iteration_sweep_non_increasing(self, tmp_path):
        config = small_config(
            tmp_path,
            dims=DESK,
            channel=SparseChannelSpec(0.05, 10.0, 10.0),
            sweep_kind="iterations",
            sweep_values=(1.0, 2.0, 4.0, 8.0),
            snr_db_grid=(20.0,),
            trials=20,
            estimators=("lse_smp",),
            estimator_config=EstimatorConfig(max_iters=8),
        )
        records = run_sweep(config)
        vals = [r.nmse_db for r in records]
        assert vals[-1] <= vals[0] + 0.5
        assert min(vals) == pytest.approx(vals[-1], abs=1.5)

    def test_crlb_columns_ordered(self, tmp_path):
        config = small_config(tmp_path, trials=10)
        for record in run_sweep(config):
            assert record.crlb_lsesmp_db <= record.crlb_lse_db

    def test_unwritable_output_rejected_before_compute(self, tmp_path):
        config = small_config(tmp_path, output_path="/nonexistent/dir/x.csv")
        with pytest.raises(ConfigError):
            run_sweep(config)

    def test_exit_kind_rejected(self, tmp_path):
        config = small_config(tmp_path, sweep_kind="exit", sweep_values=(16.0,))
        with pytest.raises(ConfigError):
            run_sweep(config)

    def test_rare_trial_failures_tolerated(self, tmp_path, monkeypatch):
        # a failure rate under one percent is logged and excluded
        real = harness._run_trial

        def flaky(config, vi, ti):
            if vi == 0 and ti == 0:
                raise EstimationError("injected failure")
            return real(config, vi, ti)

        monkeypatch.setattr(harness, "_run_trial", flaky)
        config = small_config(tmp_path, trials=150, sweep_values=(15.0,))
        records = run_sweep(config)
        assert records and all(np.isfinite(r.nmse_db) for r in records)

    def test_excess_trial_failures_abort(self, tmp_path, monkeypatch):
        real = harness._run_trial

        def broken(config, vi, ti):
            if ti % 3 == 0:
                raise EstimationError("injected failure")
            return real(config, vi, ti)

        monkeypatch.setattr(harness, "_run_trial", broken)
        config = small_config(tmp_path, trials=30, sweep_values=(15.0,))
        with pytest.raises(NumericAbortError):
            run_sweep(config)


class TestRunExit:
    def test_csv_schema(self, tmp_path):
        config = small_config(
            tmp_path,
            dims=SystemDims(32, 64, 32, 64),
            channel=SparseChannelSpec(0.125, 10.0, 10.0),
            snr_db_grid=(10.0,),
            sweep_kind="exit",
            sweep_values=(16.0, 64.0),
        )
        records = run_exit(config)
        lines = (tmp_path / "out.csv").read_text().strip().split("\n")
        assert lines[0] == ",".join(EXIT_CSV_COLUMNS)
        assert len(records) == 2 * 64
        fps = sorted({r.fixed_point for r in records})
        assert len(fps) == 2 and fps[0] < fps[1]
        # every field round-trips as a plain decimal
        for line in lines[1:]:
            for cell in line.split(","):
                float(cell)

    def test_single_block_curve_constant(self, tmp_path):
        config = small_config(
            tmp_path,
            dims=SystemDims(32, 64, 32, 64),
            channel=SparseChannelSpec(0.125, 10.0, 10.0),
            snr_db_grid=(10.0,),
            sweep_kind="exit",
            sweep_values=(1.0,),
        )
        records = run_exit(config)
        l_0 = exit_params_for(config, 1.0).l_0
        for r in records:
            assert r.sigma2_out == pytest.approx(2.0 * l_0, abs=1e-12)

    def test_beta_kind_sweeps_dispersion(self, tmp_path):
        config = small_config(
            tmp_path,
            dims=SystemDims(32, 64, 32, 64),
            channel=SparseChannelSpec(0.125, 10.0, 10.0),
            snr_db_grid=(10.0,),
            sweep_kind="beta",
            sweep_values=(0.8, 12.8),
        )
        records = run_exit(config)
        fps = {r.sweep_value: r.fixed_point for r in records}
        assert fps[0.8] < fps[12.8]

    def test_mc_kind_rejected(self, tmp_path):
        config = small_config(tmp_path)
        with pytest.raises(ConfigError):
            run_exit(config)


def test_crlb_table_ordering(tmp_path):
    config = small_config(tmp_path, sweep_values=(0.0, 10.0, 20.0), trials=5)
    rows = crlb_table(config)
    assert len(rows) == 3
    for snr_db, full_db, masked_db in rows:
        assert masked_db <= full_db
    # bounds improve with SNR
    assert rows[2][1] < rows[0][1]


def test_sparsity_sweep_energy_normalized(tmp_path):
    # the sparsity sweep rescales the coefficient law so the expected
    # channel energy stays fixed; plain least squares is then flat
    config = small_config(
        tmp_path,
        dims=DESK,
        channel=SparseChannelSpec(0.05, 10.0, 10.0),
        sweep_kind="sparsity",
        sweep_values=(0.05, 0.5),
        snr_db_grid=(20.0,),
        trials=60,
        estimators=("lse",),
    )
    records = run_sweep(config)
    a, b = records[0], records[1]
    assert abs(a.nmse_db - b.nmse_db) < 2.0 * (a.nmse_std_db + b.nmse_std_db) + 0.5
