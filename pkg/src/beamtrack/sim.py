"""Seeded photon-count generation.

Every random draw goes through :func:`substream`, which derives an independent
generator from ``(seed, *path)``. Paths name what the numbers are for (row,
trial block, purpose tag), so a sweep produces the same frames regardless of
execution order or thread count.
"""
from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass

import numpy as np

from .model import ArrayGeometry, BeamParams, cell_means


class SlotKind(enum.Enum):
    SIGNAL_PLUS_NOISE = "signal_plus_noise"
    NOISE_ONLY = "noise_only"


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError("stream path entries must be non-negative")
    return part


def substream(seed: int, *path) -> np.random.Generator:
    """Generator for the stream named by ``path`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class CountFrame:
    counts: np.ndarray
    slot_kind: SlotKind = SlotKind.SIGNAL_PLUS_NOISE

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or (c < 0).any():
            raise ValueError("counts must be a 1-D vector of non-negative integers")

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))


@dataclass(frozen=True)
class PpmFrame:
    order: int
    true_slot: int
    slots: tuple[CountFrame, ...]

    def counts(self) -> np.ndarray:
        """(order, M) count matrix."""
        return np.stack([s.counts for s in self.slots])


def slot_means(beam: BeamParams, geom: ArrayGeometry, kind: SlotKind) -> np.ndarray:
    if kind is SlotKind.SIGNAL_PLUS_NOISE:
        return cell_means(beam, geom)
    return np.full(geom.M, beam.lambda_n * geom.cell_area_A)


def sample_frame(beam: BeamParams, geom: ArrayGeometry, kind: SlotKind, rng: np.random.Generator) -> CountFrame:
    lam = slot_means(beam, geom, kind)
    return CountFrame(rng.poisson(lam), kind)


def sample_frames(beam: BeamParams, geom: ArrayGeometry, kind: SlotKind, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent frames as an (n, M) integer array."""
    lam = slot_means(beam, geom, kind)
    return rng.poisson(lam, size=(n, geom.M))


def sample_ppm_frame(beam: BeamParams, geom: ArrayGeometry, order: int, j: int, rng: np.random.Generator) -> PpmFrame:
    """One PPM symbol with the pulse in slot ``j`` (0-based)."""
    if order < 2:
        raise ValueError(f"PPM order must be >= 2, got {order}")
    if not 0 <= j < order:
        raise ValueError(f"slot {j} outside 0..{order - 1}")
    slots = tuple(
        sample_frame(beam, geom, SlotKind.SIGNAL_PLUS_NOISE if k == j else SlotKind.NOISE_ONLY, rng)
        for k in range(order)
    )
    return PpmFrame(order, j, slots)


def sample_calibration_run(beam: BeamParams, geom: ArrayGeometry, n_slots: int, rng: np.random.Generator):
    """(signal_frames, noise_frames), each an (n_slots, M) array."""
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    signal = sample_frames(beam, geom, SlotKind.SIGNAL_PLUS_NOISE, n_slots, rng)
    noise = sample_frames(beam, geom, SlotKind.NOISE_ONLY, n_slots, rng)
    return signal, noise
