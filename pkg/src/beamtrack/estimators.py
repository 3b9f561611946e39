"""Closed-form beam-position estimators: MDC, centroid, AUC, ACE1 and ACE2.

Each estimator comes in two forms. The ``*_batch`` functions take an (T, M)
count matrix and return ``(xy, degenerate)`` with ``xy`` of shape (T, 2);
the single-frame functions wrap them and return a :class:`PositionEstimate`.
A frame whose weights are all zero yields the array centre with
``degenerate=True`` instead of raising, so Monte Carlo loops never abort.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import TWO_PI, ArrayGeometry, BeamParams, total_mean_count


class Tag(str, enum.Enum):
    MDC = "MDC"
    CENTROID = "Centroid"
    AUC = "AUC"
    ACE1 = "ACE1"
    ACE2 = "ACE2"
    NLS = "NLS"
    MLE = "MLE"


@dataclass(frozen=True)
class PositionEstimate:
    x_hat: float
    y_hat: float
    estimator_tag: Tag
    degenerate: bool = False


@dataclass(frozen=True)
class AceParams:
    n_power: float = 2.0
    N_top: int = 3

    def __post_init__(self):
        if not self.n_power >= 1:
            raise ValueError(f"n_power must be >= 1, got {self.n_power}")
        if int(self.N_top) != self.N_top or self.N_top < 1:
            raise ValueError(f"N_top must be a positive integer, got {self.N_top}")


def _counts(frame) -> np.ndarray:
    return np.asarray(getattr(frame, "counts", frame))


def _single(batch_result, tag: Tag) -> PositionEstimate:
    xy, deg = batch_result
    return PositionEstimate(float(xy[0, 0]), float(xy[0, 1]), tag, bool(deg[0]))


def _weighted_mean(w: np.ndarray, geom: ArrayGeometry):
    xs, ys = geom.centers
    tot = w.sum(axis=1)
    deg = tot <= 0
    safe = np.where(deg, 1.0, tot)
    xy = np.stack([w @ xs / safe, w @ ys / safe], axis=1)
    xy[deg] = 0.0
    return xy, deg


def mdc_batch(counts, geom: ArrayGeometry, rng: np.random.Generator):
    z = np.asarray(counts)
    zmax = z.max(axis=1, keepdims=True)
    # uniform tie-breaking: random priority among the cells holding the max
    keys = rng.random(z.shape)
    keys[z != zmax] = -1.0
    idx = keys.argmax(axis=1)
    xs, ys = geom.centers
    xy = np.stack([xs[idx], ys[idx]], axis=1)
    deg = zmax[:, 0] <= 0
    xy[deg] = 0.0
    return xy, deg


def centroid_batch(counts, geom: ArrayGeometry):
    return _weighted_mean(np.asarray(counts, dtype=float), geom)


def auc_scale(beam: BeamParams, geom: ArrayGeometry) -> float:
    """K = Lambda_s / (2 pi I0) for the supplied beam constants."""
    if not beam.I0 > 0:
        raise ValueError("AUC needs I0 > 0")
    return total_mean_count(beam, geom) / (TWO_PI * beam.I0)


def auc_batch(counts, geom: ArrayGeometry, K):
    xy, deg = centroid_batch(counts, geom)
    K = np.asarray(K, dtype=float)
    xy = xy * (K[:, None] if K.ndim else K)
    xy[deg] = 0.0
    return xy, deg


def _power_weights(z: np.ndarray, n: float) -> np.ndarray:
    if n == 1:
        return z
    # rescale by the row max before raising to n; the normaliser cancels
    zmax = z.max(axis=1, keepdims=True)
    return (z / np.where(zmax > 0, zmax, 1.0)) ** n


def ace1_batch(counts, geom: ArrayGeometry, params: AceParams = AceParams()):
    z = np.asarray(counts, dtype=float)
    return _weighted_mean(_power_weights(z, params.n_power), geom)


def ace2_batch(counts, geom: ArrayGeometry, params: AceParams = AceParams()):
    z = np.asarray(counts, dtype=float)
    if params.N_top > geom.M:
        raise ValueError(f"N_top={params.N_top} exceeds M={geom.M}")
    order = np.argsort(-z, axis=1, kind="stable")[:, : params.N_top]
    keep = np.zeros_like(z)
    np.put_along_axis(keep, order, np.take_along_axis(z, order, axis=1), axis=1)
    return _weighted_mean(_power_weights(keep, params.n_power), geom)


def estimate_mdc(frame, geom: ArrayGeometry, rng: np.random.Generator) -> PositionEstimate:
    return _single(mdc_batch(_counts(frame)[None, :], geom, rng), Tag.MDC)


def estimate_centroid(frame, geom: ArrayGeometry) -> PositionEstimate:
    return _single(centroid_batch(_counts(frame)[None, :], geom), Tag.CENTROID)


def estimate_auc(frame, geom: ArrayGeometry, beam: BeamParams) -> PositionEstimate:
    """Centroid scaled by K, with Lambda_s computed from ``beam``."""
    K = auc_scale(beam, geom)
    return _single(auc_batch(_counts(frame)[None, :], geom, K), Tag.AUC)


def estimate_ace1(frame, geom: ArrayGeometry, params: AceParams = AceParams()) -> PositionEstimate:
    return _single(ace1_batch(_counts(frame)[None, :], geom, params), Tag.ACE1)


def estimate_ace2(frame, geom: ArrayGeometry, params: AceParams = AceParams()) -> PositionEstimate:
    return _single(ace2_batch(_counts(frame)[None, :], geom, params), Tag.ACE2)
