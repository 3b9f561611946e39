"""M-PPM maximum-likelihood detection with an array receiver.

The receiver scores each slot by sum_m alpha_m Z_m with alpha_m = ln(1 + SNR_m)
evaluated at an *assumed* beam centre, and picks the highest-scoring slot.
Both statistics Y1 (pulse slot) and Y0 (empty slot) use the weights.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import TWO_PI, ArrayGeometry, BeamParams, cell_signal_counts, normal_mass, signal_fractions
from .sim import PpmFrame


class Method(str, enum.Enum):
    GAUSSIAN_APPROX = "gaussian_approx"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class ReceiverWeights:
    alpha: np.ndarray
    center: tuple[float, float]


@dataclass(frozen=True)
class ErrorProbResult:
    p_symbol_error: float
    mu_v: float
    sigma_v: float
    method: Method
    stderr: float = 0.0
    trials: int = 0


def weights_for(centers_x, centers_y, I0, rho: float, lambda_n, geom: ArrayGeometry) -> np.ndarray:
    """alpha for assumed centres with per-row constants; I0 and lambda_n broadcast against the centres."""
    noise = np.asarray(lambda_n, dtype=float) * geom.cell_area_A
    if not np.all(noise > 0):
        raise ValueError("receiver weights need lambda_n > 0")
    frac = signal_fractions(geom, rho, centers_x, centers_y)
    return np.log1p(TWO_PI * np.asarray(I0, dtype=float)[..., None] * frac / noise[..., None])


def weights_at(centers_x, centers_y, beam: BeamParams, geom: ArrayGeometry) -> np.ndarray:
    """alpha for many assumed centres at once; trailing axis has length M."""
    return weights_for(centers_x, centers_y, beam.I0, beam.rho, beam.lambda_n, geom)


def build_weights(assumed_center, beam: BeamParams, geom: ArrayGeometry) -> ReceiverWeights:
    """Weights from beam constants (I0, rho, lambda_n) at ``assumed_center``."""
    x, y = map(float, assumed_center)
    return ReceiverWeights(weights_at(x, y, beam, geom), (x, y))


def decide_batch(slot_counts, alpha, rng: np.random.Generator) -> np.ndarray:
    """Slot decisions for counts of shape (T, order, M); ties broken uniformly."""
    z = np.asarray(slot_counts, dtype=float)
    a = np.asarray(alpha, dtype=float)
    score = np.einsum("tsm,tm->ts", z, a) if a.ndim == 2 else z @ a
    best = score.max(axis=1, keepdims=True)
    keys = rng.random(score.shape)
    keys[score < best] = -1.0
    return keys.argmax(axis=1)


def ml_decide(frame, weights: ReceiverWeights, rng: np.random.Generator) -> int:
    counts = frame.counts() if isinstance(frame, PpmFrame) else np.asarray(frame)
    return int(decide_batch(counts[None], weights.alpha, rng)[0])


def v_moments_batch(signal, noise_mean: float, alpha):
    """mu_v and sigma_v for rows of per-cell signal means and weights (trailing axis M)."""
    s = np.asarray(signal, dtype=float)
    a2 = np.asarray(alpha, dtype=float) ** 2
    mu = (np.asarray(alpha, dtype=float) * s).sum(axis=-1)
    var = (a2 * s).sum(axis=-1) + 2.0 * noise_mean * a2.sum(axis=-1)
    return mu, np.sqrt(var)


def gaussian_ser(mu, sigma, order: int):
    """1 - P(V > 0)^(order - 1) with V ~ N(mu, sigma^2)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_pair = normal_mass(-mu / sigma, np.inf)
    return 1.0 - p_pair ** (order - 1)


def v_moments(beam_true: BeamParams, alpha, geom: ArrayGeometry) -> tuple[float, float]:
    """Mean and standard deviation of V = Y1 - Y0 under the true beam."""
    mu, sigma = v_moments_batch(cell_signal_counts(beam_true, geom), beam_true.lambda_n * geom.cell_area_A, alpha)
    return float(mu), float(sigma)


def symbol_error_gaussian(beam_true: BeamParams, assumed_center, geom: ArrayGeometry, order: int) -> ErrorProbResult:
    w = build_weights(assumed_center, beam_true, geom)
    mu, sigma = v_moments(beam_true, w.alpha, geom)
    if not sigma > 0:
        raise ZeroDivisionError("sigma_v = 0: decision statistic is degenerate")
    return ErrorProbResult(float(gaussian_ser(mu, sigma, order)), mu, sigma, Method.GAUSSIAN_APPROX)


def simulate_symbols(means_signal, noise_mean: float, alpha, order: int, rng: np.random.Generator) -> np.ndarray:
    """Correct-decision flags for T symbols; row t of ``means_signal`` is its pulse-slot means.

    The pulse is placed in slot 0: decisions are permutation-invariant across
    slots, and ties are resolved uniformly.
    """
    lam = np.asarray(means_signal, dtype=float)
    T, M = lam.shape
    counts = np.empty((T, order, M))
    counts[:, 0] = rng.poisson(lam)
    counts[:, 1:] = rng.poisson(noise_mean, size=(T, order - 1, M))
    return decide_batch(counts, alpha, rng) == 0


def symbol_error_mc(beam_true: BeamParams, assumed_center, geom: ArrayGeometry, order: int,
                    trials: int, rng: np.random.Generator) -> ErrorProbResult:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    w = build_weights(assumed_center, beam_true, geom)
    mu, sigma = v_moments(beam_true, w.alpha, geom)
    lam = cell_signal_counts(beam_true, geom) + beam_true.lambda_n * geom.cell_area_A
    ok = simulate_symbols(np.broadcast_to(lam, (trials, geom.M)), beam_true.lambda_n * geom.cell_area_A,
                          w.alpha, order, rng)
    p = 1.0 - ok.mean()
    return ErrorProbResult(float(p), mu, sigma, Method.MONTE_CARLO, float(np.sqrt(p * (1 - p) / trials)), trials)


@dataclass(frozen=True)
class Landscape:
    xs: np.ndarray
    ys: np.ndarray
    ratio: np.ndarray  # (len(ys), len(xs)) values of mu_v / sigma_v

    @property
    def argmax(self) -> tuple[float, float]:
        iy, ix = np.unravel_index(np.argmax(self.ratio), self.ratio.shape)
        return float(self.xs[ix]), float(self.ys[iy])


def snr_ratio_landscape(beam_true: BeamParams, geom: ArrayGeometry, grid: int = 41) -> Landscape:
    """mu_v / sigma_v over a grid x grid lattice of assumed centres spanning the array."""
    a = geom.half_width_a
    xs = np.linspace(-a, a, grid)
    ys = np.linspace(-a, a, grid)
    X, Y = np.meshgrid(xs, ys)
    alpha = weights_at(X, Y, beam_true, geom)
    mu, sigma = v_moments_batch(cell_signal_counts(beam_true, geom), beam_true.lambda_n * geom.cell_area_A, alpha)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(sigma > 0, mu / sigma, 0.0)
    return Landscape(xs, ys, ratio)
