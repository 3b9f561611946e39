"""NLS and ML beam-position estimators driven by a real-coded genetic algorithm.

The GA is vectorised over independent problems: a population tensor of shape
(B, Nc, 2) evolves B searches at once, which is what makes Monte Carlo runs
over thousands of frames affordable. Objectives therefore take points of shape
(B, P, 2) and return values of shape (B, P).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .estimators import PositionEstimate, Tag
from .model import TWO_PI, ArrayGeometry, BeamParams, array_fraction, signal_fractions

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class GaConfig:
    population_Nc: int = 50
    generations_Ng: int = 400
    search_box: tuple[float, float] | None = None
    mutation_sigma: float | None = None
    mutation_prob: float = 0.1
    crossover_alpha: float = 0.5
    elitism_count: int = 2
    tournament_size: int = 2

    def __post_init__(self):
        if self.population_Nc < 4:
            raise ValueError("population_Nc must be >= 4")
        if self.generations_Ng < 1:
            raise ValueError("generations_Ng must be >= 1")
        if not 0 <= self.elitism_count < self.population_Nc:
            raise ValueError("elitism_count must lie in [0, population_Nc)")
        if not 0 <= self.mutation_prob <= 1:
            raise ValueError("mutation_prob must be a probability")
        if self.search_box is not None and not self.search_box[1] > self.search_box[0]:
            raise ValueError("search_box must be non-degenerate")

    def for_geometry(self, geom: ArrayGeometry) -> "GaConfig":
        """Fill the unset box and mutation scale from the array."""
        box = self.search_box or (-geom.half_width_a, geom.half_width_a)
        sigma = self.mutation_sigma if self.mutation_sigma is not None else geom.side / 2
        return replace(self, search_box=box, mutation_sigma=sigma)


@dataclass
class GaResult:
    points: np.ndarray          # (B, D) best point per problem
    values: np.ndarray          # (B,) objective at those points
    history: np.ndarray = field(repr=False)  # (Ng + 1, B) best-so-far values


def ga_minimize(func: Callable[[np.ndarray], np.ndarray], n_problems: int, config: GaConfig,
                rng: np.random.Generator, dim: int = 2) -> GaResult:
    """Minimise ``func`` independently for ``n_problems`` problems.

    Tournament selection, blend (BLX-alpha) crossover, per-gene Gaussian
    mutation and elitism. Children are clipped to the search box.
    """
    if config.search_box is None:
        raise ValueError("search_box must be set")
    lo, hi = map(float, config.search_box)
    sigma = config.mutation_sigma if config.mutation_sigma is not None else 0.05 * (hi - lo)
    B, P, E = n_problems, config.population_Nc, config.elitism_count
    C = P - E
    rows = np.arange(B)[:, None]

    pop = rng.uniform(lo, hi, size=(B, P, dim))
    fit = np.asarray(func(pop), dtype=float)
    fit = np.where(np.isnan(fit), np.inf, fit)
    history = np.empty((config.generations_Ng + 1, B))
    history[0] = fit.min(axis=1)

    for g in range(config.generations_Ng):
        order = np.argsort(fit, axis=1, kind="stable")
        elite = order[:, :E]

        def tournament():
            cand = rng.integers(0, P, size=(B, C, config.tournament_size))
            cf = fit[rows[:, :, None], cand]
            return np.take_along_axis(cand, cf.argmin(axis=2)[..., None], axis=2)[..., 0]

        p1 = pop[rows, tournament()]
        p2 = pop[rows, tournament()]
        a = config.crossover_alpha
        u = rng.uniform(-a, 1 + a, size=(B, C, dim))
        kids = p1 + u * (p2 - p1)
        mutate = rng.random((B, C, dim)) < config.mutation_prob
        kids = kids + mutate * rng.normal(0.0, sigma, size=(B, C, dim))
        np.clip(kids, lo, hi, out=kids)

        kid_fit = np.asarray(func(kids), dtype=float)
        kid_fit = np.where(np.isnan(kid_fit), np.inf, kid_fit)
        pop = np.concatenate([pop[rows, elite], kids], axis=1)
        fit = np.concatenate([fit[rows, elite], kid_fit], axis=1)
        history[g + 1] = fit.min(axis=1)

    best = fit.argmin(axis=1)
    return GaResult(pop[np.arange(B), best], fit[np.arange(B), best], history)


def ga_optimize(objective: Callable[[np.ndarray], np.ndarray], config: GaConfig,
                rng: np.random.Generator, maximize: bool = False):
    """Optimise a single 2-D objective; returns ``(point, value)``.

    ``objective`` maps an (..., 2) array of points to values of shape (...).
    """
    sign = -1.0 if maximize else 1.0
    res = ga_minimize(lambda pts: sign * objective(pts), 1, config, rng)
    return res.points[0], float(sign * res.values[0])


class ObjectiveKind(str, enum.Enum):
    NLS = "NLS"
    MLE = "MLE"


@dataclass(frozen=True)
class Objective:
    """NLS or ML objective for a batch of frames with known beam constants.

    ``frames`` has shape (B, M); calling the objective on points of shape
    (B, P, 2) gives (B, P) values. ``I0`` and ``lambda_n`` are scalars or
    length-B arrays (one calibration per frame). NLS is minimised, MLE
    maximised.
    """

    kind: ObjectiveKind
    frames: np.ndarray
    geom: ArrayGeometry
    I0: float | np.ndarray
    rho: float
    lambda_n: float | np.ndarray

    @property
    def maximize(self) -> bool:
        return self.kind is ObjectiveKind.MLE

    def _per_problem(self, v, ndim: int):
        v = np.asarray(v, dtype=float)
        return v.reshape(v.shape + (1,) * (ndim - v.ndim)) if v.ndim else v

    def cell_means(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        frac = signal_fractions(self.geom, self.rho, pts[..., 0], pts[..., 1])
        I0 = self._per_problem(self.I0, frac.ndim)
        lam_n = self._per_problem(self.lambda_n, frac.ndim)
        return TWO_PI * I0 * frac + lam_n * self.geom.cell_area_A

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        lam = self.cell_means(pts)
        z = np.asarray(self.frames, dtype=float)
        z = z.reshape(z.shape[:-1] + (1,) * (lam.ndim - z.ndim) + z.shape[-1:])
        if self.kind is ObjectiveKind.NLS:
            return ((z - lam) ** 2).sum(axis=-1)
        frac = array_fraction(self.geom, self.rho, pts[..., 0], pts[..., 1])
        I0 = self._per_problem(self.I0, frac.ndim)
        lam_n = self._per_problem(self.lambda_n, frac.ndim)
        # floor keeps the log finite where lambda_n = 0 and the beam is far away
        loglik = (z * np.log(np.maximum(lam, _TINY))).sum(axis=-1)
        return loglik - (TWO_PI * I0 * frac + lam_n * self.geom.area)


def nls_objective(point, frame, geom: ArrayGeometry, beam: BeamParams) -> float:
    obj = Objective(ObjectiveKind.NLS, np.asarray(getattr(frame, "counts", frame))[None, :], geom,
                    beam.I0, beam.rho, beam.lambda_n)
    return float(obj(np.asarray(point, dtype=float)[None, None, :])[0, 0])


def mle_objective(point, frame, geom: ArrayGeometry, beam: BeamParams) -> float:
    obj = Objective(ObjectiveKind.MLE, np.asarray(getattr(frame, "counts", frame))[None, :], geom,
                    beam.I0, beam.rho, beam.lambda_n)
    return float(obj(np.asarray(point, dtype=float)[None, None, :])[0, 0])


def estimate_batch(kind: ObjectiveKind, frames, geom: ArrayGeometry, beam: BeamParams,
                   config: GaConfig, rng: np.random.Generator, I0=None, lambda_n=None):
    """GA estimates for a batch of frames; returns ``(xy, degenerate)``.

    ``beam`` supplies I0, rho and lambda_n (from truth or calibration); pass
    ``I0``/``lambda_n`` arrays to override them per frame.
    """
    frames = np.asarray(frames)
    I0 = beam.I0 if I0 is None else I0
    lambda_n = beam.lambda_n if lambda_n is None else lambda_n
    obj = Objective(ObjectiveKind(kind), frames, geom, I0, beam.rho, lambda_n)
    sign = -1.0 if obj.maximize else 1.0
    res = ga_minimize(lambda pts: sign * obj(pts), frames.shape[0], config.for_geometry(geom), rng)
    return res.points, frames.sum(axis=1) == 0


def estimate_nls(frame, geom: ArrayGeometry, beam: BeamParams, config: GaConfig,
                 rng: np.random.Generator) -> PositionEstimate:
    xy, deg = estimate_batch(ObjectiveKind.NLS, np.asarray(getattr(frame, "counts", frame))[None, :],
                             geom, beam, config, rng)
    return PositionEstimate(float(xy[0, 0]), float(xy[0, 1]), Tag.NLS, bool(deg[0]))


def estimate_mle(frame, geom: ArrayGeometry, beam: BeamParams, config: GaConfig,
                 rng: np.random.Generator) -> PositionEstimate:
    xy, deg = estimate_batch(ObjectiveKind.MLE, np.asarray(getattr(frame, "counts", frame))[None, :],
                             geom, beam, config, rng)
    return PositionEstimate(float(xy[0, 0]), float(xy[0, 1]), Tag.MLE, bool(deg[0]))
