"""Exact series for the MSE and bias of the MDC and centroid/AUC estimators.

Infinite Poisson sums are cut to finite windows. Every result carries the
realised tail mass that was dropped (``tail_bound``), so callers can audit the
truncation. Conventions match :mod:`beamtrack.estimators`: an all-zero frame
(Z_s = 0) maps to the array centre (0, 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammaln, pdtr, pdtrc
from scipy.stats import poisson

from .model import TWO_PI, ArrayGeometry, BeamParams, cell_means

_MIN_BUDGET = 1e-300


@dataclass(frozen=True)
class TruncationPolicy:
    epsilon0: float = 1e-5
    K_max: int | None = None  # None: every tie multiplicity up to M

    def __post_init__(self):
        if not 0 < self.epsilon0 < 1:
            raise ValueError("epsilon0 must lie in (0, 1)")
        if self.K_max is not None and self.K_max < 1:
            raise ValueError("K_max must be >= 1")


@dataclass(frozen=True)
class MseBias:
    mse: float
    bias_x: float
    bias_y: float
    tail_bound: float = 0.0
    completeness_gap: float = 0.0

    @property
    def rmse(self) -> float:
        return math.sqrt(self.mse)


def upper_limit(lam: float, budget: float) -> int:
    """Smallest eta with P(Poisson(lam) >= eta) < budget."""
    budget = max(budget, _MIN_BUDGET)
    lo, hi = int(lam), int(lam + 10 * math.sqrt(lam) + 20)
    while pdtrc(hi - 1, lam) >= budget:
        hi = 2 * hi + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if pdtrc(mid - 1, lam) < budget:
            hi = mid
        else:
            lo = mid + 1
    return max(lo, 1)


def lower_limit(lam: float, budget: float) -> int:
    """Largest L with P(Poisson(lam) < L) < budget (0 when none helps)."""
    budget = max(budget, _MIN_BUDGET)
    lo, hi = 0, int(lam)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if pdtr(mid - 1, lam) < budget:
            lo = mid
        else:
            hi = mid - 1
    return lo


def _mdc_budget(policy: TruncationPolicy, M: int) -> float:
    # eps0 / M!, computed in logs so large arrays clamp instead of underflowing
    return math.exp(max(math.log(policy.epsilon0) - gammaln(M + 1), math.log(_MIN_BUDGET)))


@dataclass(frozen=True)
class MdcProbabilities:
    P: np.ndarray           # (K, M): P[k-1, m] = P_{k,m}
    p_all_zero: float
    tail_bound: float

    @property
    def cell(self) -> np.ndarray:
        return self.P.sum(axis=0)

    @property
    def completeness_gap(self) -> float:
        return 1.0 - float(self.cell.sum()) - self.p_all_zero


def mdc_probabilities_from_rates(lam, policy: TruncationPolicy = TruncationPolicy()) -> MdcProbabilities:
    """P_{k,m} for independent Poisson counts with means ``lam``.

    P_{k,m} is the probability that cell m holds the maximum count, tied with
    exactly k-1 other cells, and is then picked by the uniform tie-break
    (weight 1/k). Ties are summed over unordered sets of tied cells with the
    generating polynomial prod_i (Q(z, L_i) + t p_i(z)), so multiplicity k
    costs O(M k) per count level instead of enumerating O(M^k) tuples.
    """
    lam = np.asarray(lam, dtype=float)
    M = lam.size
    K = M if policy.K_max is None else min(policy.K_max, M)
    budget = _mdc_budget(policy, M)
    lam_u = float(lam.max())
    top = upper_limit(lam_u, budget)
    P = np.zeros((K, M))
    tail = 0.0
    for m in range(M):
        first = max(1, lower_limit(float(lam[m]), budget))
        tail += float(pdtrc(top - 1, lam_u)) + (float(pdtr(first - 1, lam[m])) if first > 1 else 0.0)
        z = np.arange(first, top, dtype=float)
        if z.size == 0:
            continue
        coef = np.zeros((K, z.size))
        coef[0] = 1.0
        for i in range(M):
            if i == m:
                continue
            below = gammaincc(z, lam[i])          # P(Z_i < z)
            level = poisson.pmf(z, lam[i])       # P(Z_i = z)
            coef[1:] = coef[1:] * below + coef[:-1] * level
            coef[0] *= below
        own = poisson.pmf(z, lam[m])
        P[:, m] = (coef * own).sum(axis=1) / np.arange(1, K + 1)
    return MdcProbabilities(P, math.exp(-float(lam.sum())), tail)


def mdc_probabilities(beam: BeamParams, geom: ArrayGeometry,
                      policy: TruncationPolicy = TruncationPolicy()) -> MdcProbabilities:
    return mdc_probabilities_from_rates(cell_means(beam, geom), policy)


def mdc_cell_probability(beam: BeamParams, geom: ArrayGeometry, m: int,
                         policy: TruncationPolicy = TruncationPolicy()) -> float:
    geom._check(m)
    return float(mdc_probabilities(beam, geom, policy).cell[m])


def mdc_mse_bias(beam: BeamParams, geom: ArrayGeometry,
                 policy: TruncationPolicy = TruncationPolicy()) -> MseBias:
    probs = mdc_probabilities(beam, geom, policy)
    w = probs.cell
    xs, ys = geom.centers
    x0, y0 = beam.x0, beam.y0
    p0 = probs.p_all_zero
    mse = float(np.sum(((xs - x0) ** 2 + (ys - y0) ** 2) * w)) + p0 * (x0 ** 2 + y0 ** 2)
    bx = float(np.sum((xs - x0) * w)) - p0 * x0
    by = float(np.sum((ys - y0) * w)) - p0 * y0
    return MseBias(mse, bx, by, probs.tail_bound, probs.completeness_gap)


@dataclass(frozen=True)
class ConditionalMoments:
    mean: np.ndarray    # E[Z_m | z_s]
    second: np.ndarray  # E[Z_m Z_n | z_s], diagonal holds E[Z_m^2 | z_s]


def multinomial_moments(p, zs: int) -> ConditionalMoments:
    """First and second moments of a multinomial split of ``zs`` photons with cell probabilities ``p``."""
    p = np.asarray(p, dtype=float)
    mean = zs * p
    second = zs * (zs - 1) * np.outer(p, p)
    second[np.diag_indices_from(second)] = zs * p * (1 - p) + (zs * p) ** 2
    return ConditionalMoments(mean, second)


def centroid_moments(beam: BeamParams, geom: ArrayGeometry, zs: int) -> ConditionalMoments:
    """Conditional count moments given the frame total z_s."""
    lam = cell_means(beam, geom)
    return multinomial_moments(lam / lam.sum(), zs)


def conditional_centroid_mse(beam: BeamParams, geom: ArrayGeometry, zs: int, scale: float = 1.0) -> float:
    """E[(x_hat - x0)^2 + (y_hat - y0)^2 | Z_s = zs] assembled from the count moments."""
    if zs == 0:
        return beam.x0 ** 2 + beam.y0 ** 2
    mom = centroid_moments(beam, geom, zs)
    out = 0.0
    for c, c0 in zip(geom.centers, (beam.x0, beam.y0)):
        second = scale ** 2 * float(c @ mom.second @ c) / zs ** 2
        first = scale * float(c @ mom.mean) / zs
        out += second - 2 * c0 * first + c0 ** 2
    return out


def centroid_mse_bias(beam: BeamParams, geom: ArrayGeometry,
                      policy: TruncationPolicy = TruncationPolicy(),
                      scaled_by_K: bool = False, K: float | None = None) -> MseBias:
    """MSE and bias of the centroid, or of the AUC estimator K * centroid.

    Given Z_s = z the centroid has mean mu = sum x_m p_m and variance
    (sum x_m^2 p_m - mu^2) / z; the outer Poisson(Lambda_s) sum is truncated
    so that the dropped mass is below epsilon0.
    """
    lam = cell_means(beam, geom)
    lam_s = float(lam.sum())
    if not lam_s > 0:
        raise ValueError("Lambda_s must be > 0")
    if scaled_by_K and K is None:
        K = lam_s / (TWO_PI * beam.I0)
    scale = K if scaled_by_K else 1.0
    p = lam / lam_s
    xs, ys = geom.centers
    mu_x, mu_y = float(xs @ p), float(ys @ p)
    var1 = float((xs ** 2) @ p) - mu_x ** 2 + float((ys ** 2) @ p) - mu_y ** 2

    first = max(1, lower_limit(lam_s, policy.epsilon0 / 2))
    eta = upper_limit(lam_s, policy.epsilon0 / 2)
    z = np.arange(first, eta, dtype=float)
    pz = poisson.pmf(z, lam_s)
    mass = float(pz.sum())
    inv = float((pz / z).sum())
    p0 = math.exp(-lam_s)
    tail = float(pdtrc(eta - 1, lam_s)) + (float(pdtr(first - 1, lam_s)) if first > 1 else 0.0)

    x0, y0 = beam.x0, beam.y0
    ex, ey = scale * mu_x, scale * mu_y
    mse = (mass * ((ex - x0) ** 2 + (ey - y0) ** 2) + scale ** 2 * var1 * inv
           + p0 * (x0 ** 2 + y0 ** 2))
    bias_x = mass * ex - x0
    bias_y = mass * ey - y0
    return MseBias(float(mse), float(bias_x), float(bias_y), tail)


def auc_mse_bias(beam: BeamParams, geom: ArrayGeometry,
                 policy: TruncationPolicy = TruncationPolicy(), K: float | None = None) -> MseBias:
    return centroid_mse_bias(beam, geom, policy, scaled_by_K=True, K=K)
