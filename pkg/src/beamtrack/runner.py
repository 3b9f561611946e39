"""Sweep execution and CSV output.

Monte Carlo trials are cut into fixed-size chunks. Chunk ``c`` of sweep row
``(i, j)`` draws all of its randomness from ``substream(seed, i, j, c, tag)``,
so the numbers never depend on how chunks are scheduled. Chunks may run on a
thread pool; their outputs are concatenated in chunk order before any
statistic is computed, so every thread count gives the same bytes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields, replace

import numpy as np

from . import __version__
from .analytic import auc_mse_bias, centroid_mse_bias, mdc_mse_bias
from .calibration import calibrate_from_totals
from .config import ExperimentConfig
from .crlb import SingularModelError, crlb, high_snr_limit, low_snr_limit
from .detection import gaussian_ser, snr_ratio_landscape, v_moments_batch, weights_for, decide_batch
from .estimators import Tag, ace1_batch, ace2_batch, auc_batch, centroid_batch, mdc_batch
from .model import TWO_PI, ArrayGeometry, BeamParams, array_fraction, signal_fractions
from .optimize import ObjectiveKind, estimate_batch
from .sim import substream

PERFECT = "Perfect"
_NOISE_FLOOR = 1e-12  # per-cell noise used for receiver weights when lambda_n_hat = 0


@dataclass(frozen=True)
class ResultRow:
    sweep_variable: str
    sweep_value: float
    cells_per_side: int
    estimator: str
    metric: str
    value: float
    stderr: float = 0.0
    trials: int = 0
    degenerate: int = 0
    point_x: float = math.nan
    point_y: float = math.nan
    note: str = ""


COLUMNS = tuple(f.name for f in fields(ResultRow))


@dataclass
class SweepResult:
    rows: list
    warnings: tuple = ()

    def select(self, **match) -> list:
        out = []
        for r in self.rows:
            if all((getattr(r, k) == v) or (isinstance(v, float) and math.isnan(v) and math.isnan(getattr(r, k)))
                   for k, v in match.items()):
                out.append(r)
        return out

    def value(self, **match) -> float:
        rows = self.select(**match)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {match}")
        return rows[0].value


# ---------------------------------------------------------------------------
# per-trial constants and estimators

@dataclass
class _Constants:
    """Receiver-side knowledge of (I0, lambda_n) for a batch of trials."""
    I0: np.ndarray
    lambda_n: np.ndarray
    K: np.ndarray          # AUC scale per trial
    unusable: np.ndarray   # calibration clamped I0 to 0


def _constants(cfg: ExperimentConfig, geom: ArrayGeometry, beam: BeamParams, centers, n_slots: int, rng) -> _Constants:
    n = centers.shape[0]
    if cfg.constants == "oracle":
        I0 = np.full(n, beam.I0)
        lam = np.full(n, beam.lambda_n)
        lam_s = TWO_PI * beam.I0 * array_fraction(geom, beam.rho, centers[:, 0], centers[:, 1]) + beam.lambda_n * geom.area
        return _Constants(I0, lam, lam_s / (TWO_PI * beam.I0), np.zeros(n, bool))
    # method-of-moments calibration: the estimates only depend on slot totals
    lam_s = TWO_PI * beam.I0 * array_fraction(geom, beam.rho, centers[:, 0], centers[:, 1]) + beam.lambda_n * geom.area
    sig = rng.poisson(n_slots * lam_s)
    noise = rng.poisson(n_slots * beam.lambda_n * geom.area, size=n)
    I0, lam, clamped = calibrate_from_totals(sig, noise, n_slots, geom)
    # the receiver does not know the centre; K is evaluated at the array centre
    frac0 = float(array_fraction(geom, beam.rho, 0.0, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(clamped, 1.0, (TWO_PI * I0 * frac0 + lam * geom.area) / (TWO_PI * np.where(clamped, 1.0, I0)))
    return _Constants(I0, lam, K, clamped)


def _estimate(tag: str, z, geom: ArrayGeometry, beam: BeamParams, consts: _Constants, cfg: ExperimentConfig, rng):
    if tag == Tag.MDC:
        return mdc_batch(z, geom, rng)
    if tag == Tag.CENTROID:
        return centroid_batch(z, geom)
    if tag == Tag.AUC:
        xy, deg = auc_batch(z, geom, consts.K)
        return xy, deg | consts.unusable
    if tag == Tag.ACE1:
        return ace1_batch(z, geom, cfg.ace1_params())
    if tag == Tag.ACE2:
        return ace2_batch(z, geom, cfg.ace2_params())
    if tag in (Tag.NLS, Tag.MLE):
        xy, deg = estimate_batch(ObjectiveKind(tag), z, geom, beam, cfg.ga_config(), rng,
                                 I0=consts.I0, lambda_n=consts.lambda_n)
        return xy, deg | consts.unusable
    raise ValueError(f"unknown estimator {tag!r}")


def _draw_centers(cfg: ExperimentConfig, beam: BeamParams, n: int, rng) -> np.ndarray:
    if cfg.center == "uniform":
        return rng.uniform(-cfg.a, cfg.a, size=(n, 2))
    return np.tile([beam.x0, beam.y0], (n, 1))


def _signal_means(geom: ArrayGeometry, beam: BeamParams, centers) -> np.ndarray:
    return TWO_PI * beam.I0 * signal_fractions(geom, beam.rho, centers[:, 0], centers[:, 1])


# ---------------------------------------------------------------------------
# chunk workers: return dicts of per-trial arrays

def _tracking_chunk(cfg, geom, beam, key, n):
    seed = cfg.seed
    centers = _draw_centers(cfg, beam, n, substream(seed, *key, "centers"))
    consts = _constants(cfg, geom, beam, centers, cfg.calibration_slots, substream(seed, *key, "calibration"))
    lam = _signal_means(geom, beam, centers) + beam.lambda_n * geom.cell_area_A
    z = substream(seed, *key, "frames").poisson(lam)
    out = {"centers": centers}
    for tag in cfg.estimators:
        xy, deg = _estimate(tag, z, geom, beam, consts, cfg, substream(seed, *key, "estimator", tag))
        out[tag] = (xy - centers, deg)
    return out


def _ser_chunk(cfg, geom, beam, key, n):
    seed = cfg.seed
    # the position estimate comes from `tracking_slots` accumulated signal slots
    k = cfg.tracking_slots
    track = replace(beam, I0=k * beam.I0, lambda_n=k * beam.lambda_n)
    out = _tracking_chunk(cfg, geom, track, key, n)
    centers = out["centers"]
    # receiver weights depend on I0 / lambda_n only, so the tracking-slot constants serve directly
    consts = _constants(cfg, geom, track, centers, cfg.calibration_slots, substream(seed, *key, "calibration"))
    signal = _signal_means(geom, beam, centers)
    noise = beam.lambda_n * geom.cell_area_A
    # one PPM symbol per trial with the pulse in slot 0; all receivers see the same counts
    rng = substream(seed, *key, "symbols")
    counts = np.empty((n, cfg.ppm_order, geom.M))
    counts[:, 0] = rng.poisson(signal + noise)
    counts[:, 1:] = rng.poisson(noise, size=(n, cfg.ppm_order - 1, geom.M))
    lam_rx = np.maximum(consts.lambda_n, _NOISE_FLOOR / geom.cell_area_A)
    assumed = {PERFECT: (centers, np.zeros(n, bool))}
    for tag in cfg.estimators:
        err, deg = out[tag]
        assumed[tag] = (np.clip(err + centers, -cfg.a, cfg.a), deg)
    for tag, (c, deg) in assumed.items():
        alpha = weights_for(c[:, 0], c[:, 1], consts.I0, beam.rho, lam_rx, geom)
        ok = decide_batch(counts, alpha, substream(seed, *key, "decide", tag)) == 0
        mu, sigma = v_moments_batch(signal, noise, alpha)
        out[("ser", tag)] = (~ok, gaussian_ser(mu, sigma, cfg.ppm_order), mu, sigma)
    return out


def _calibrate_chunk(cfg, geom, beam, key, n, n_slots):
    rng = substream(cfg.seed, *key, "calibration")
    lam_s = TWO_PI * beam.I0 * float(array_fraction(geom, beam.rho, beam.x0, beam.y0)) + beam.lambda_n * geom.area
    sig = rng.poisson(n_slots * lam_s, size=n)
    noise = rng.poisson(n_slots * beam.lambda_n * geom.area, size=n)
    I0, lam, clamped = calibrate_from_totals(sig, noise, n_slots, geom)
    return {"I0": I0, "lambda_n": lam, "clamped": clamped}


# ---------------------------------------------------------------------------
# statistics

def _mean_row(values, base: dict, estimator: str, metric: str, degenerate: int = 0) -> ResultRow:
    v = np.asarray(values, dtype=float)
    T = v.size
    se = float(v.std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
    return ResultRow(**base, estimator=estimator, metric=metric, value=float(v.mean()), stderr=se,
                     trials=T, degenerate=degenerate)


def _error_rows(err, deg, base, tag, metrics) -> list:
    sq = (err ** 2).sum(axis=1)
    nd = int(deg.sum())
    rows = []
    if "mse" in metrics:
        mse = _mean_row(sq, base, tag, "mse", nd)
        rmse = math.sqrt(mse.value)
        rows += [mse, ResultRow(**base, estimator=tag, metric="rmse", value=rmse,
                                stderr=mse.stderr / (2 * rmse) if rmse > 0 else 0.0,
                                trials=mse.trials, degenerate=nd)]
    if "bias" in metrics:
        rows += [_mean_row(err[:, 0], base, tag, "bias_x", nd), _mean_row(err[:, 1], base, tag, "bias_y", nd)]
    return rows


def _analytic_rows(cfg, geom, beam, base) -> list:
    fns = {Tag.MDC: mdc_mse_bias, Tag.CENTROID: centroid_mse_bias, Tag.AUC: auc_mse_bias}
    rows = []
    for tag in cfg.estimators:
        if tag not in fns:
            continue
        try:
            r = fns[tag](beam, geom, cfg.truncation())
        except (ValueError, ArithmeticError) as exc:
            rows.append(ResultRow(**base, estimator=tag, metric="error", value=math.nan, note=str(exc)))
            continue
        note = f"tail={r.tail_bound:.3g}"
        if cfg.kind == "mse_sweep":
            rows += [ResultRow(**base, estimator=tag, metric="mse_analytic", value=r.mse, note=note),
                     ResultRow(**base, estimator=tag, metric="rmse_analytic", value=r.rmse, note=note)]
        rows += [ResultRow(**base, estimator=tag, metric="bias_x_analytic", value=r.bias_x, note=note),
                 ResultRow(**base, estimator=tag, metric="bias_y_analytic", value=r.bias_y, note=note)]
    return rows


def _crlb_rows(geom, beam, base) -> list:
    try:
        r = crlb(beam, geom)
    except (SingularModelError, ValueError) as exc:
        return [ResultRow(**base, estimator="CRLB", metric="error", value=math.nan, note=str(exc))]
    rows = [ResultRow(**base, estimator="CRLB", metric="var_x_lb", value=r.var_x_lb),
            ResultRow(**base, estimator="CRLB", metric="var_y_lb", value=r.var_y_lb),
            ResultRow(**base, estimator="CRLB", metric="total", value=r.total),
            ResultRow(**base, estimator="CRLB", metric="high_snr_limit", value=high_snr_limit(beam))]
    if beam.lambda_n > 0:
        rows.append(ResultRow(**base, estimator="CRLB", metric="low_snr_limit", value=low_snr_limit(beam)))
    return rows


def _landscape_rows(cfg, geom, beam, base) -> list:
    land = snr_ratio_landscape(beam, geom, cfg.landscape_grid)
    rows = []
    for iy, y in enumerate(land.ys):
        for ix, x in enumerate(land.xs):
            rows.append(ResultRow(**base, estimator=PERFECT, metric="mu_over_sigma",
                                  value=float(land.ratio[iy, ix]), point_x=float(x), point_y=float(y)))
    ax, ay = land.argmax
    step = float(land.xs[1] - land.xs[0])
    rows.append(ResultRow(**base, estimator=PERFECT, metric="argmax_distance",
                          value=math.hypot(ax - beam.x0, ay - beam.y0), point_x=ax, point_y=ay,
                          note=f"grid_step={step:.17g}"))
    return rows


# ---------------------------------------------------------------------------
# driver

def _chunks(cfg: ExperimentConfig):
    n_chunks = -(-cfg.trials // cfg.chunk_size)
    return [(c, min(cfg.chunk_size, cfg.trials - c * cfg.chunk_size)) for c in range(n_chunks)]


def _merge(parts: list) -> dict:
    out = {}
    for k in parts[0]:
        first = parts[0][k]
        if isinstance(first, tuple):
            out[k] = tuple(np.concatenate([p[k][i] for p in parts]) for i in range(len(first)))
        else:
            out[k] = np.concatenate([p[k] for p in parts])
    return out


def _mc_rows(cfg, geom, beam, base, merged, sweep_value) -> list:
    rows = []
    if cfg.kind in ("mse_sweep", "bias_sweep"):
        metrics = ("mse", "bias") if cfg.kind == "mse_sweep" else ("bias",)
        for tag in cfg.estimators:
            rows += _error_rows(*merged[tag], base, tag, metrics)
    elif cfg.kind == "ser_sweep":
        for tag in (PERFECT, *cfg.estimators):
            err_flags, g_ser, mu, sigma = merged[("ser", tag)]
            rows.append(_mean_row(err_flags, base, tag, "ser"))
            rows.append(_mean_row(g_ser, base, tag, "ser_gaussian"))
            if tag != PERFECT:
                rows += _error_rows(*merged[tag], base, tag, ("mse",))
    elif cfg.kind == "calibrate":
        nd = int(merged["clamped"].sum())
        rows += [_mean_row(merged["I0"], base, "MoM", "I0_hat", nd),
                 _mean_row((merged["I0"] - beam.I0) ** 2, base, "MoM", "I0_mse", nd),
                 ResultRow(**base, estimator="MoM", metric="I0_true", value=beam.I0),
                 _mean_row(merged["lambda_n"], base, "MoM", "lambda_n_hat", nd),
                 _mean_row((merged["lambda_n"] - beam.lambda_n) ** 2, base, "MoM", "lambda_n_mse", nd),
                 ResultRow(**base, estimator="MoM", metric="lambda_n_true", value=beam.lambda_n)]
    return rows


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Run the configured sweep; failures are recorded as ``error`` rows."""
    threads = max(1, int(threads))
    grid = []
    for i, cells in enumerate(cfg.cells_per_side):
        for j, v in enumerate(cfg.sweep_points()):
            base = dict(sweep_variable=cfg.sweep_variable, sweep_value=float(v), cells_per_side=int(cells))
            try:
                geom = cfg.geometry(cells)
                beam = cfg.beam(geom, v)
            except ValueError as exc:
                grid.append((i, j, base, None, None, str(exc)))
                continue
            grid.append((i, j, base, geom, beam, ""))

    mc = cfg.kind in ("mse_sweep", "bias_sweep", "ser_sweep", "calibrate")
    jobs = {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        if mc:
            for i, j, base, geom, beam, err in grid:
                if err:
                    continue
                for c, n in _chunks(cfg):
                    key = (i, j, c)
                    if cfg.kind == "ser_sweep":
                        jobs[key] = pool.submit(_ser_chunk, cfg, geom, beam, key, n)
                    elif cfg.kind == "calibrate":
                        jobs[key] = pool.submit(_calibrate_chunk, cfg, geom, beam, key, n,
                                                cfg.row_calibration_slots(base["sweep_value"]))
                    else:
                        jobs[key] = pool.submit(_tracking_chunk, cfg, geom, beam, key, n)

        rows = [ResultRow(sweep_variable=cfg.sweep_variable, sweep_value=math.nan, cells_per_side=0,
                          estimator="", metric="warning", value=math.nan, note=w) for w in cfg.warnings]
        for i, j, base, geom, beam, err in grid:
            if err:
                rows.append(ResultRow(**base, estimator="", metric="error", value=math.nan, note=err))
                continue
            try:
                if cfg.kind == "crlb_sweep":
                    rows += _crlb_rows(geom, beam, base)
                elif cfg.kind == "landscape":
                    rows += _landscape_rows(cfg, geom, beam, base)
                else:
                    merged = _merge([jobs[(i, j, c)].result() for c, _ in _chunks(cfg)])
                    if cfg.analytic and cfg.center == "fixed" and cfg.kind in ("mse_sweep", "bias_sweep"):
                        rows += _analytic_rows(cfg, geom, beam, base)
                    rows += _mc_rows(cfg, geom, beam, base, merged, base["sweep_value"])
            except (ValueError, ArithmeticError) as exc:
                rows.append(ResultRow(**base, estimator="", metric="error", value=math.nan, note=str(exc)))
    return SweepResult(rows, cfg.warnings)


# ---------------------------------------------------------------------------
# output

def _cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def format_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in result.rows:
        w.writerow([_cell(v) for v in astuple(r)])
    return buf.getvalue()


def emit_csv(result: SweepResult, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(result))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc


def manifest_text(config_text: str, seed: int, wall_time_s: float, threads: int, n_rows: int) -> str:
    digest = hashlib.sha256(config_text.encode("utf-8")).hexdigest()
    return (f"config_sha256 = {digest}\nseed = {seed}\nversion = {__version__}\n"
            f"threads = {threads}\nrows = {n_rows}\nwall_time_s = {wall_time_s:.3f}\n")


def run_and_write(cfg: ExperimentConfig, config_text: str, out_path, threads: int = 1) -> SweepResult:
    """Run, write the CSV and a ``<out>.manifest`` sidecar."""
    t0 = time.perf_counter()
    result = run_experiment(cfg, threads)
    emit_csv(result, out_path)
    with open(f"{out_path}.manifest", "w", encoding="utf-8", newline="") as fh:
        fh.write(manifest_text(config_text, cfg.seed, time.perf_counter() - t0, threads, len(result.rows)))
    return result
