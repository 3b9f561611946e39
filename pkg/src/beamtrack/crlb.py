"""Fisher information and Cramer-Rao bounds for the beam centre (x0, y0)."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ArrayGeometry, BeamParams, cell_means, normal_mass

SQRT_2PI = math.sqrt(2.0 * math.pi)


class SingularModelError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FisherMatrix:
    I_xx: float
    I_yy: float
    I_xy: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.I_xx, self.I_xy], [self.I_xy, self.I_yy]])

    @property
    def det(self) -> float:
        return self.I_xx * self.I_yy - self.I_xy ** 2

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.as_array())


@dataclass(frozen=True)
class CrlbResult:
    var_x_lb: float
    var_y_lb: float

    @property
    def total(self) -> float:
        return self.var_x_lb + self.var_y_lb


def _axis_terms(edges, c, rho):
    """Per-bin Gaussian mass and first-moment factor along one axis.

    mass[k]  = Phi((e[k+1]-c)/rho) - Phi((e[k]-c)/rho)
    slope[k] = exp(-(e[k]-c)^2/2rho^2) - exp(-(e[k+1]-c)^2/2rho^2)
    The integral of (t-c) exp(-(t-c)^2/2rho^2) over bin k is rho^2 * slope[k].
    """
    u = (np.asarray(edges) - c) / rho
    g = np.exp(-0.5 * u * u)
    return normal_mass(u[:-1], u[1:]), g[:-1] - g[1:]


def cell_gradient_integrals(beam: BeamParams, geom: ArrayGeometry, m: int | None = None):
    """(G_x, G_y): cell integrals of (I0/rho^4)(x-x0) and (I0/rho^4)(y-y0) times the Gaussian.

    These are the derivatives of Lambda_m with respect to x0 and y0. Returns
    scalars for a single cell or length-M arrays when ``m`` is None.
    """
    e = geom.edges
    mx, sx = _axis_terms(e, beam.x0, beam.rho)
    my, sy = _axis_terms(e, beam.y0, beam.rho)
    scale = beam.I0 * SQRT_2PI / beam.rho
    gx = scale * (my[:, None] * sx[None, :]).ravel()
    gy = scale * (sy[:, None] * mx[None, :]).ravel()
    if m is None:
        return gx, gy
    geom._check(m)
    return float(gx[m]), float(gy[m])


def fisher_matrix(beam: BeamParams, geom: ArrayGeometry) -> FisherMatrix:
    lam = cell_means(beam, geom)
    if not (lam > 0).all():
        bad = int(np.argmin(lam))
        raise SingularModelError(
            f"Lambda_m = 0 in cell {bad}; use lambda_n > 0 or a beam that overlaps every cell")
    gx, gy = cell_gradient_integrals(beam, geom)
    return FisherMatrix(float(np.sum(gx * gx / lam)), float(np.sum(gy * gy / lam)),
                        float(np.sum(gx * gy / lam)))


def crlb(beam: BeamParams, geom: ArrayGeometry) -> CrlbResult:
    """Diagonal of the inverse Fisher matrix."""
    F = fisher_matrix(beam, geom)
    det = F.det
    if not det > 1e-14 * max(F.I_xx * F.I_yy, np.finfo(float).tiny):
        raise SingularModelError(
            f"singular Fisher matrix at centre ({beam.x0}, {beam.y0}), rho={beam.rho}, "
            f"M={geom.M}: I_xx={F.I_xx:.3g}, I_yy={F.I_yy:.3g}, I_xy={F.I_xy:.3g}")
    return CrlbResult(F.I_yy / det, F.I_xx / det)


def high_snr_limit(beam: BeamParams) -> float:
    """Continuous-array, noiseless bound on Var[x0_hat]: rho^2 / (2 pi I0)."""
    return beam.rho ** 2 / (2.0 * math.pi * beam.I0)


def low_snr_limit(beam: BeamParams) -> float:
    """Continuous-array, noise-dominated bound: 2 rho^4 / (pi I0^2 / lambda_n)."""
    return 2.0 * beam.rho ** 4 / (math.pi * beam.I0 ** 2 / beam.lambda_n)


@dataclass(frozen=True)
class CrlbRow:
    variable: str
    value: float
    cells_per_side: int
    result: CrlbResult | None
    error: str = ""


SWEEPABLE = ("lambda_n", "rho", "I0", "cells_per_side")


def crlb_sweep(beam: BeamParams, geom: ArrayGeometry, variable: str, values) -> list[CrlbRow]:
    """One row per grid value of ``variable``; failures are recorded, not raised."""
    if variable not in SWEEPABLE:
        raise ValueError(f"cannot sweep {variable!r}; choose from {SWEEPABLE}")
    rows = []
    for v in values:
        b, g = beam, geom
        try:
            if variable == "cells_per_side":
                g = ArrayGeometry(geom.half_width_a, int(v))
            else:
                b = replace(beam, **{variable: float(v)})
            rows.append(CrlbRow(variable, float(v), g.cells_per_side, crlb(b, g)))
        except (SingularModelError, ValueError) as exc:
            rows.append(CrlbRow(variable, float(v), g.cells_per_side, None, str(exc)))
    return rows
