"""Method-of-moments estimates of I0 and lambda_n from dedicated calibration slots."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TWO_PI, ArrayGeometry


@dataclass(frozen=True)
class CalibrationEstimate:
    I0_hat: float
    lambda_n_hat: float
    N_used: int
    clamped: bool = False


def _as_matrix(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        arr = frames
    else:
        arr = np.array([getattr(f, "counts", f) for f in frames])
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def estimate_lambda_n(noise_frames, geom: ArrayGeometry) -> float:
    z = _as_matrix(noise_frames)
    if z.shape[0] == 0 or z.size == 0:
        raise ValueError("need at least one noise-only frame")
    return float(z.sum()) / (geom.area * z.shape[0])


def estimate_I0(signal_frames, noise_frames, geom: ArrayGeometry, Lambda0: float = TWO_PI) -> float:
    """Unclamped moment estimate; can go negative for tiny N at high noise.

    Each signal-slot count already holds signal plus background photons; the
    background is removed using lambda_n estimated from the paired noise slots.
    """
    zs = _as_matrix(signal_frames)
    zn = _as_matrix(noise_frames)
    if zs.shape[0] != zn.shape[0]:
        raise ValueError(f"got {zs.shape[0]} signal frames but {zn.shape[0]} noise frames")
    if zs.shape[0] == 0:
        raise ValueError("need at least one frame of each kind")
    if not Lambda0 > 0:
        raise ValueError("Lambda0 must be > 0")
    n = zs.shape[0]
    lam_n = estimate_lambda_n(zn, geom)
    return float(zs.sum()) / (Lambda0 * n) - lam_n * geom.area / Lambda0


def calibrate(signal_frames, noise_frames, geom: ArrayGeometry, Lambda0: float = TWO_PI) -> CalibrationEstimate:
    zs = _as_matrix(signal_frames)
    i0 = estimate_I0(zs, noise_frames, geom, Lambda0)
    lam = estimate_lambda_n(noise_frames, geom)
    clamped = i0 < 0 or not math.isfinite(i0)
    return CalibrationEstimate(max(i0, 0.0), lam, zs.shape[0], clamped)


def calibrate_from_totals(signal_total, noise_total, n_slots: int, geom: ArrayGeometry,
                          Lambda0: float = TWO_PI):
    """Vectorised form of :func:`calibrate` taking summed counts over ``n_slots`` slot pairs.

    The moment estimates depend on the frames only through these totals.
    Returns ``(I0_hat, lambda_n_hat, clamped)`` arrays.
    """
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    s = np.asarray(signal_total, dtype=float)
    lam = np.asarray(noise_total, dtype=float) / (geom.area * n_slots)
    i0 = s / (Lambda0 * n_slots) - lam * geom.area / Lambda0
    clamped = i0 < 0
    return np.where(clamped, 0.0, i0), lam, clamped
