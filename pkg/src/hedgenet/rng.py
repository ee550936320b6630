"""Counter-based random numbers for reproducible parallel Monte Carlo.

Every standard normal draw is a pure function of the tuple
(master_seed, path_index, step_index, coordinate): a chained SplitMix64
finalizer turns the tuple into a 64-bit word, the top 53 bits become a
uniform in (0, 1), and the inverse normal CDF maps it to a Gaussian.
Draws are therefore independent of batch size, evaluation order and worker
count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = ["SeedSpec", "normals", "uniforms"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0**-53


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one reproducible path stream."""

    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if self.master_seed < 0 or self.path_index < 0:
            raise ValueError("seed components must be non-negative")


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _counter_words(master_seed, path_index, step_index, coord) -> np.ndarray:
    """Chained SplitMix64 over the four key components (broadcasting)."""
    with np.errstate(over="ignore"):
        z = _mix(np.uint64(master_seed) + _GOLDEN)
        z = _mix(z + _GOLDEN * (np.asarray(path_index, dtype=np.uint64) + np.uint64(1)))
        z = _mix(z + _GOLDEN * (np.asarray(step_index, dtype=np.uint64) + np.uint64(1)))
        z = _mix(z + _GOLDEN * (np.asarray(coord, dtype=np.uint64) + np.uint64(1)))
    return z


def uniforms(master_seed, path_index, step_index, coord) -> np.ndarray:
    """Uniforms on the open interval (0, 1), one per broadcast key tuple."""
    w = _counter_words(master_seed, path_index, step_index, coord)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def normals(master_seed, path_index, step_index, d: int) -> np.ndarray:
    """Standard normal block of shape broadcast(path_index, step_index) x d.

    ``path_index`` and ``step_index`` may be scalars or arrays; the coordinate
    axis is appended last.
    """
    path_index = np.asarray(path_index, dtype=np.uint64)
    step_index = np.asarray(step_index, dtype=np.uint64)
    shape = np.broadcast_shapes(path_index.shape, step_index.shape) + (d,)
    coords = np.arange(d, dtype=np.uint64)
    u = uniforms(
        master_seed,
        path_index[..., None],
        step_index[..., None],
        coords,
    )
    return ndtri(np.broadcast_to(u, shape))
