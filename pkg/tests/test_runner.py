import math
from pathlib import Path

import numpy as np
import pytest

from beamtrack.config import parse_config
from beamtrack.crlb import crlb
from beamtrack.runner import COLUMNS, ResultRow, SweepResult, emit_csv, format_csv, run_experiment

GOLDEN = Path(__file__).parent / "golden"

BASE = """\
geometry.cells_per_side = 4
beam.I0 = 3.0
beam.lambda_n = 0.4
beam.rho = 0.25
beam.x0 = 0.2
beam.y0 = -0.1
"""


def cfg_of(extra):
    return parse_config(BASE + extra)


class TestCsv:
    def test_header_only(self):
        assert format_csv(SweepResult([])) == ",".join(COLUMNS) + "\n"

    def test_full_precision_and_lf(self, tmp_path):
        r = SweepResult([ResultRow("rho", 0.1, 4, "MDC", "mse", 1 / 3, note="a,b")])
        text = format_csv(r)
        assert "\r" not in text
        assert "0.10000000000000001" in text and "0.33333333333333331" in text
        assert '"a,b"' in text
        p = tmp_path / "out.csv"
        emit_csv(r, p)
        first = p.read_bytes()
        emit_csv(r, p)
        assert p.read_bytes() == first == text.encode()

    def test_io_error_names_path(self, tmp_path):
        bad = tmp_path / "missing" / "x.csv"
        with pytest.raises(OSError, match="missing"):
            emit_csv(SweepResult([]), bad)


class TestKinds:
    def test_crlb_without_estimators(self):
        cfg = cfg_of("kind = crlb_sweep\n")
        res = run_experiment(cfg)
        ref = crlb(cfg.beam(cfg.geometry(4)), cfg.geometry(4))
        assert res.value(metric="var_x_lb") == ref.var_x_lb
        assert res.value(metric="total") == pytest.approx(ref.total)
        assert {r.metric for r in res.rows} >= {"var_y_lb", "high_snr_limit", "low_snr_limit"}

    def test_failed_rows_do_not_stop_the_run(self):
        cfg = cfg_of("kind = crlb_sweep\nsweep.variable = lambda_n\nsweep.values = 0, 0.5\nbeam.rho = 0.01\n"
                     "beam.x0 = 0.5\nbeam.y0 = 0.5\n")
        res = run_experiment(cfg)
        assert res.select(metric="error")[0].sweep_value == 0.0
        assert len(res.select(metric="var_x_lb")) == 1

    def test_duplicate_key_gives_warning_row(self):
        res = run_experiment(cfg_of("kind = crlb_sweep\nbeam.rho = 0.3\n"))
        (w,) = res.select(metric="warning")
        assert "duplicate key 'beam.rho'" in w.note

    def test_mse_rows(self):
        cfg = cfg_of("kind = mse_sweep\ntrials = 3000\nestimators = MDC, Centroid, AUC, ACE1, ACE2\n")
        res = run_experiment(cfg)
        for tag in ("MDC", "Centroid", "AUC"):
            mc = res.select(estimator=tag, metric="mse")[0]
            an = res.value(estimator=tag, metric="mse_analytic")
            assert mc.trials == 3000 and mc.stderr > 0
            assert abs(mc.value - an) < 4 * mc.stderr
            assert res.value(estimator=tag, metric="rmse") == pytest.approx(math.sqrt(mc.value))
        assert res.select(estimator="ACE2", metric="bias_y")[0].stderr > 0
        assert not res.select(estimator="ACE1", metric="mse_analytic")

    def test_bias_only(self):
        res = run_experiment(cfg_of("kind = bias_sweep\ntrials = 200\nestimators = Centroid\nanalytic = false\n"))
        assert {r.metric for r in res.rows} == {"bias_x", "bias_y"}

    def test_uniform_centre_and_calibrated_constants(self):
        cfg = cfg_of("kind = mse_sweep\ntrials = 300\nbeam.center = uniform\nconstants = calibrated\n"
                     "calibration.slots = 20\nestimators = AUC, MLE\nga.population = 10\nga.generations = 20\n")
        res = run_experiment(cfg)
        assert not res.select(metric="mse_analytic")
        for tag in ("AUC", "MLE"):
            assert np.isfinite(res.value(estimator=tag, metric="mse"))

    def test_ser_rows(self):
        cfg = cfg_of("kind = ser_sweep\ntrials = 2000\nestimators = Centroid, MDC\nppm.order = 4\n")
        res = run_experiment(cfg)
        perfect = res.select(estimator="Perfect", metric="ser")[0]
        assert 0 <= perfect.value <= 1 and perfect.trials == 2000
        assert 0 <= res.value(estimator="Perfect", metric="ser_gaussian") <= 1
        assert res.select(estimator="MDC", metric="mse")

    def test_calibrate_rows(self):
        cfg = cfg_of("kind = calibrate\ntrials = 4000\nsweep.variable = calibration_slots\nsweep.values = 5, 50\n")
        res = run_experiment(cfg)
        for n in (5.0, 50.0):
            est = res.select(sweep_value=n, metric="lambda_n_hat")[0]
            assert abs(est.value - 0.4) < 4 * est.stderr
        mse = [res.value(sweep_value=n, metric="lambda_n_mse") for n in (5.0, 50.0)]
        assert mse[1] < mse[0]

    def test_landscape_rows(self):
        res = run_experiment(cfg_of("kind = landscape\nlandscape.grid = 11\n"))
        pts = res.select(metric="mu_over_sigma")
        assert len(pts) == 121
        (d,) = res.select(metric="argmax_distance")
        assert d.note.startswith("grid_step=")


class TestDeterminism:
    @pytest.mark.parametrize("extra", [
        "kind = mse_sweep\ntrials = 250\nchunk_size = 60\nestimators = MDC, ACE2, NLS\n"
        "ga.population = 8\nga.generations = 5\nbeam.center = uniform\n",
        "kind = ser_sweep\ntrials = 700\nchunk_size = 100\nestimators = Centroid, AUC\nconstants = calibrated\n",
    ])
    def test_thread_count_invariance(self, extra):
        cfg = cfg_of(extra)
        one = format_csv(run_experiment(cfg, threads=1))
        assert one == format_csv(run_experiment(cfg, threads=4))
        assert one == format_csv(run_experiment(cfg, threads=1))

    def test_seed_changes_output(self):
        a = cfg_of("kind = mse_sweep\ntrials = 100\nestimators = Centroid\nseed = 1\n")
        b = cfg_of("kind = mse_sweep\ntrials = 100\nestimators = Centroid\nseed = 2\n")
        assert format_csv(run_experiment(a)) != format_csv(run_experiment(b))

    def test_golden(self):
        cfg = parse_config((GOLDEN / "small.cfg").read_text())
        got = format_csv(run_experiment(cfg, threads=2)).encode()
        assert got == (GOLDEN / "small.csv").read_bytes()
