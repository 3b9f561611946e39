"""Detector-array geometry, Gaussian beam intensities and the special functions
used throughout the package.

Cells are indexed 0..M-1, row-major from the bottom-left cell: cell ``m`` sits
in row ``m // N`` (y) and column ``m % N`` (x), so cell 0 touches (-a, -a).

I0 and lambda_n are always stored in scaled units (expected photon counts per
slot), so the Poisson means need no further physical constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr

PLANCK = 6.62607004e-34
LIGHT_SPEED = 3e8
TWO_PI = 2.0 * math.pi


class InvalidParameter(ValueError):
    pass


@dataclass(frozen=True)
class ArrayGeometry:
    """Square array spanning [-a, a]^2, split into N x N equal square cells."""

    half_width_a: float
    cells_per_side: int

    def __post_init__(self):
        if not self.half_width_a > 0:
            raise InvalidParameter(f"half_width_a must be > 0, got {self.half_width_a}")
        if int(self.cells_per_side) != self.cells_per_side or self.cells_per_side < 1:
            raise InvalidParameter(f"cells_per_side must be a positive integer, got {self.cells_per_side}")

    @property
    def M(self) -> int:
        return self.cells_per_side ** 2

    @property
    def side(self) -> float:
        return 2.0 * self.half_width_a / self.cells_per_side

    @property
    def cell_area_A(self) -> float:
        return self.side ** 2

    @property
    def area(self) -> float:
        return (2.0 * self.half_width_a) ** 2

    @cached_property
    def edges(self) -> np.ndarray:
        """Cell boundaries along either axis, length N + 1."""
        a = self.half_width_a
        e = np.linspace(-a, a, self.cells_per_side + 1)
        e[0], e[-1] = -a, a
        return e

    @cached_property
    def centers_1d(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @cached_property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x_m, y_m) for every cell, each of length M."""
        c = self.centers_1d
        xs = np.tile(c, self.cells_per_side)
        ys = np.repeat(c, self.cells_per_side)
        xs.setflags(write=False)
        ys.setflags(write=False)
        return xs, ys

    def _check(self, m: int) -> None:
        if not 0 <= m < self.M:
            raise IndexError(f"cell index {m} out of range 0..{self.M - 1}")

    def cell_center(self, m: int) -> tuple[float, float]:
        self._check(m)
        xs, ys = self.centers
        return float(xs[m]), float(ys[m])

    def cell_bounds(self, m: int) -> tuple[float, float, float, float]:
        """(x1, x2, y1, y2) of cell m with x2 > x1 and y2 > y1."""
        self._check(m)
        row, col = divmod(m, self.cells_per_side)
        e = self.edges
        return float(e[col]), float(e[col + 1]), float(e[row]), float(e[row + 1])


@dataclass(frozen=True)
class BeamParams:
    I0: float
    rho: float
    x0: float = 0.0
    y0: float = 0.0
    lambda_n: float = 0.0

    def __post_init__(self):
        if not self.I0 >= 0:
            raise InvalidParameter(f"I0 must be >= 0, got {self.I0}")
        if not self.rho > 0:
            raise InvalidParameter(f"rho must be > 0, got {self.rho}")
        if not self.lambda_n >= 0:
            raise InvalidParameter(f"lambda_n must be >= 0, got {self.lambda_n}")

    def moved(self, x0: float, y0: float) -> "BeamParams":
        return BeamParams(self.I0, self.rho, x0, y0, self.lambda_n)


@dataclass(frozen=True)
class LinkBudget:
    rho0: float
    wavelength: float
    distance_d: float
    Ts: float
    eta: float = 1.0
    power_watts: float = 0.0

    def __post_init__(self):
        for name in ("rho0", "wavelength", "Ts"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be > 0")
        if not self.distance_d >= 0:
            raise InvalidParameter("distance_d must be >= 0")
        if not 0 < self.eta <= 1:
            raise InvalidParameter("eta must lie in (0, 1]")
        if not self.power_watts >= 0:
            raise InvalidParameter("power_watts must be >= 0")

    @property
    def rho(self) -> float:
        return spot_size(self.rho0, self.wavelength, self.distance_d)

    @property
    def photons_per_joule(self) -> float:
        return self.eta * self.Ts / (PLANCK * LIGHT_SPEED / self.wavelength)


def std_normal_cdf(x):
    return ndtr(x)


def normal_mass(lo, hi):
    """Phi(hi) - Phi(lo), evaluated on the tail that avoids cancellation."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper = lo > 0
    return np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


def bin_masses(u) -> np.ndarray:
    """Standard normal mass between consecutive ascending edges along the last axis.

    One CDF pass: t = Phi(-|u|) is the accurate small tail on either side, and
    bins are differenced on the side they lie on, as in :func:`normal_mass`.
    """
    u = np.asarray(u, dtype=float)
    t = ndtr(-np.abs(u))
    lo, hi = u[..., :-1], u[..., 1:]
    t_lo, t_hi = t[..., :-1], t[..., 1:]
    return np.where(lo > 0, t_lo - t_hi, np.where(hi <= 0, t_hi - t_lo, 1.0 - t_hi - t_lo))


def spot_size(rho0: float, wavelength: float, d: float) -> float:
    """Beam radius rho(d) grown from waist rho0 by diffraction."""
    if not (rho0 > 0 and wavelength > 0 and d >= 0):
        raise InvalidParameter("spot_size needs rho0 > 0, wavelength > 0, d >= 0")
    return rho0 * math.sqrt(1.0 + (wavelength * d / (math.pi * rho0 ** 2)) ** 2)


def scaled_intensity_from_power(link: LinkBudget, power_watts: float) -> float:
    """Expected photodetections per slot for a received optical power."""
    if not power_watts >= 0:
        raise InvalidParameter(f"power must be >= 0, got {power_watts}")
    return power_watts * link.photons_per_joule


def intensity_at(beam: BeamParams, x, y):
    r2 = (np.asarray(x) - beam.x0) ** 2 + (np.asarray(y) - beam.y0) ** 2
    return beam.I0 / beam.rho ** 2 * np.exp(-r2 / (2.0 * beam.rho ** 2))


def signal_fractions(geom: ArrayGeometry, rho, x0, y0) -> np.ndarray:
    """Gaussian probability mass in each cell for centres (x0, y0).

    Broadcasts over the shapes of rho, x0 and y0; the result has a trailing
    axis of length M. Multiply by 2*pi*I0 to get the signal counts.
    """
    rho = np.asarray(rho, dtype=float)[..., None]
    e = geom.edges
    x0 = np.asarray(x0, dtype=float)[..., None]
    y0 = np.asarray(y0, dtype=float)[..., None]
    px = bin_masses((e - x0) / rho)
    py = bin_masses((e - y0) / rho)
    out = py[..., :, None] * px[..., None, :]
    return out.reshape(out.shape[:-2] + (geom.M,))


def array_fraction(geom: ArrayGeometry, rho, x0, y0):
    """Gaussian mass captured by the whole array [-a, a]^2."""
    a = geom.half_width_a
    rho = np.asarray(rho, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    return normal_mass((-a - x0) / rho, (a - x0) / rho) * normal_mass((-a - y0) / rho, (a - y0) / rho)


def cell_signal_counts(beam: BeamParams, geom: ArrayGeometry) -> np.ndarray:
    return TWO_PI * beam.I0 * signal_fractions(geom, beam.rho, beam.x0, beam.y0)


def cell_means(beam: BeamParams, geom: ArrayGeometry) -> np.ndarray:
    """Lambda_m for all cells."""
    return cell_signal_counts(beam, geom) + beam.lambda_n * geom.cell_area_A


def cell_mean_count(beam: BeamParams, geom: ArrayGeometry, m: int) -> float:
    geom._check(m)
    return float(cell_means(beam, geom)[m])


def total_mean_count(beam: BeamParams, geom: ArrayGeometry) -> float:
    """Lambda_s from the single-rectangle closed form over the whole array."""
    captured = TWO_PI * beam.I0 * float(array_fraction(geom, beam.rho, beam.x0, beam.y0))
    return captured + beam.lambda_n * geom.area


def cell_snr(beam: BeamParams, geom: ArrayGeometry, m: int | None = None):
    """Signal-to-noise ratio of one cell, or of every cell when m is None."""
    noise = beam.lambda_n * geom.cell_area_A
    if noise == 0:
        raise ZeroDivisionError("cell_snr is undefined for lambda_n = 0")
    snr = cell_signal_counts(beam, geom) / noise
    if m is None:
        return snr
    geom._check(m)
    return float(snr[m])
