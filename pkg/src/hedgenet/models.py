"""Diffusion specifications and path sampling.

Two state spaces are supported: Brownian-type diffusions on R^d (case C1) and
exponential diffusions on (0, inf)^d (case C2, simulated through the log
process so positivity is automatic). Exact transition sampling is available
for constant-coefficient models ("bm-constant", "gbm-diagonal"); everything
else falls back to Euler-Maruyama stepping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .rng import SeedSpec, normals
from .timenets import RefinedGrid, TimeNet

__all__ = [
    "DiffusionSpec",
    "PathSample",
    "gbm_diagonal",
    "bm_constant",
    "general_diffusion",
    "q_weight",
    "a_matrix",
    "sigma_matrix",
    "drift_vector",
    "sample_path_exact",
    "sample_path_euler",
    "simulate_states",
]


@dataclass(frozen=True)
class DiffusionSpec:
    """Immutable description of the simulated diffusion."""

    case: str  # "C1" or "C2"
    d: int
    x0: np.ndarray
    exactness: str  # "gbm-diagonal" | "bm-constant" | "general"
    vols: Optional[np.ndarray] = None  # s_i for gbm-diagonal
    drift_rates: Optional[np.ndarray] = None  # mu_i for gbm-diagonal
    const_sigma: Optional[np.ndarray] = None  # for bm-constant
    const_drift: Optional[np.ndarray] = None  # for bm-constant
    corr: Optional[np.ndarray] = None  # constant correlation of the drivers
    sigma_fn: Optional[Callable] = None  # general: x -> (..., d, d)
    drift_fn: Optional[Callable] = None  # general: x -> (..., d)
    corr_chol: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.case not in ("C1", "C2"):
            raise ValueError("case must be 'C1' or 'C2'")
        if self.exactness not in ("gbm-diagonal", "bm-constant", "general"):
            raise ValueError("unknown exactness tag")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.d,):
            raise ValueError("x0 must be a d-vector")
        if self.case == "C2" and np.any(x0 <= 0.0):
            raise ValueError("C2 start point must be strictly positive")
        object.__setattr__(self, "x0", x0)
        for name in ("vols", "drift_rates", "const_drift"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))
        if self.exactness == "gbm-diagonal":
            if self.case != "C2":
                raise ValueError("gbm-diagonal requires case C2")
            if self.vols is None or np.any(self.vols <= 0.0):
                raise ValueError("gbm-diagonal needs strictly positive vols")
        if self.exactness == "bm-constant":
            if self.case != "C1":
                raise ValueError("bm-constant requires case C1")
            if self.const_sigma is None:
                raise ValueError("bm-constant needs a constant sigma matrix")
            object.__setattr__(
                self, "const_sigma", np.asarray(self.const_sigma, dtype=float)
            )
        if self.corr is not None:
            corr = np.asarray(self.corr, dtype=float)
            if corr.shape != (self.d, self.d) or not np.allclose(corr, corr.T):
                raise ValueError("corr must be a symmetric d x d matrix")
            if not np.allclose(np.diag(corr), 1.0):
                raise ValueError("corr must have unit diagonal")
            object.__setattr__(self, "corr", corr)
            object.__setattr__(self, "corr_chol", np.linalg.cholesky(corr))


def gbm_diagonal(d, s, x0, mu=None, corr=None) -> DiffusionSpec:
    """Geometric Brownian motion with diagonal sigma_ii(x) = s_i * x_i."""
    s = np.broadcast_to(np.asarray(s, dtype=float), (d,)).copy()
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,)).copy()
    mu = None if mu is None else np.broadcast_to(np.asarray(mu, float), (d,)).copy()
    return DiffusionSpec(
        case="C2", d=d, x0=x0, exactness="gbm-diagonal", vols=s, drift_rates=mu,
        corr=corr,
    )


def bm_constant(sigma, x0, drift=None, corr=None) -> DiffusionSpec:
    """Brownian-type diffusion with a constant sigma matrix (case C1)."""
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0]
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,)).copy()
    return DiffusionSpec(
        case="C1", d=d, x0=x0, exactness="bm-constant", const_sigma=sigma,
        const_drift=drift, corr=corr,
    )


def general_diffusion(case, d, x0, sigma_fn, drift_fn=None) -> DiffusionSpec:
    """State-dependent coefficients; sampled with Euler-Maruyama only."""
    return DiffusionSpec(
        case=case, d=d, x0=np.asarray(x0, dtype=float), exactness="general",
        sigma_fn=sigma_fn, drift_fn=drift_fn,
    )


@dataclass(frozen=True)
class PathSample:
    times: np.ndarray
    states: np.ndarray  # (len(times), d)


def q_weight(spec: DiffusionSpec, x, i: int):
    """Coordinate scaling weight: 1 in case C1, x_i in case C2."""
    x = np.asarray(x, dtype=float)
    if not (0 <= i < spec.d):
        raise IndexError("coordinate index out of range")
    if spec.case == "C1":
        return np.ones(x.shape[:-1]) if x.ndim > 1 else 1.0
    return x[..., i]


def sigma_matrix(spec: DiffusionSpec, x) -> np.ndarray:
    """Effective diffusion matrix (correlation folded in), shape (..., d, d)."""
    x = np.asarray(x, dtype=float)
    if spec.exactness == "gbm-diagonal":
        base = spec.vols * x  # (..., d) diagonal entries
        sig = np.zeros(x.shape + (spec.d,))
        idx = np.arange(spec.d)
        sig[..., idx, idx] = base
    elif spec.exactness == "bm-constant":
        sig = np.broadcast_to(spec.const_sigma, x.shape + (spec.d,)).copy()
    else:
        sig = np.asarray(spec.sigma_fn(x), dtype=float)
    if spec.corr_chol is not None:
        sig = sig @ spec.corr_chol
    return sig


def drift_vector(spec: DiffusionSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.exactness == "gbm-diagonal":
        if spec.drift_rates is None:
            return np.zeros_like(x)
        return spec.drift_rates * x
    if spec.exactness == "bm-constant":
        if spec.const_drift is None:
            return np.zeros_like(x)
        return np.broadcast_to(spec.const_drift, x.shape).copy()
    if spec.drift_fn is None:
        return np.zeros_like(x)
    return np.asarray(spec.drift_fn(x), dtype=float)


def a_matrix(spec: DiffusionSpec, x) -> np.ndarray:
    """A(x) = sigma(x) sigma(x)^T, symmetric positive semi-definite."""
    sig = sigma_matrix(spec, x)
    return sig @ np.swapaxes(sig, -1, -2)


def _grid_times(grid) -> np.ndarray:
    if isinstance(grid, RefinedGrid):
        return grid.times
    if isinstance(grid, TimeNet):
        return grid.knots
    return np.asarray(grid, dtype=float)


def _draw(spec, master_seed, path_index, step):
    """IID standard normal increments; path_index may be an array."""
    return normals(master_seed, path_index, step, spec.d)


def exact_step(spec: DiffusionSpec, x, dt: float, z) -> np.ndarray:
    """One exact transition for constant-coefficient models (z iid normal)."""
    sqdt = np.sqrt(dt)
    if spec.corr_chol is not None:
        z = z @ spec.corr_chol.T
    if spec.exactness == "gbm-diagonal":
        s = spec.vols
        mu = 0.0 if spec.drift_rates is None else spec.drift_rates
        return x * np.exp((mu - 0.5 * s * s) * dt + s * sqdt * z)
    if spec.exactness == "bm-constant":
        out = x + z @ (sqdt * spec.const_sigma).T
        if spec.const_drift is not None:
            out = out + spec.const_drift * dt
        return out
    raise ValueError("exact sampling requires a non-'general' spec")


def euler_step(spec: DiffusionSpec, x, dt: float, z) -> np.ndarray:
    """One Euler-Maruyama step; C2 specs step the log process."""
    sqdt = np.sqrt(dt)
    if spec.case == "C1":
        sig = sigma_matrix(spec, x)
        dw = (sqdt * z)[..., None, :]
        return x + drift_vector(spec, x) * dt + (sig * dw).sum(axis=-1)
    # C2: Euler on y = log x keeps the state strictly positive.
    sig = sigma_matrix(spec, x) / x[..., :, None]
    bhat = drift_vector(spec, x) / x - 0.5 * (sig * sig).sum(axis=-1)
    dw = (sqdt * z)[..., None, :]
    y = np.log(x) + bhat * dt + (sig * dw).sum(axis=-1)
    return np.exp(y)


def simulate_states(spec, times, master_seed, path_indices, scheme="exact"):
    """States at the given times for a batch of paths, shape (B, m+1, d).

    Each path's draws are keyed by (master_seed, path_index, step), so the
    output is independent of batching and worker scheduling.
    """
    times = np.asarray(times, dtype=float)
    path_indices = np.asarray(path_indices)
    step = exact_step if scheme == "exact" else euler_step
    if scheme == "exact" and spec.exactness == "general":
        raise ValueError("exact sampling is unavailable for 'general' specs")
    B = path_indices.size
    out = np.empty((B, times.size, spec.d))
    x = np.broadcast_to(spec.x0, (B, spec.d)).copy()
    out[:, 0, :] = x
    for j in range(1, times.size):
        dt = times[j] - times[j - 1]
        z = _draw(spec, master_seed, path_indices, j - 1)
        x = step(spec, x, dt, z)
        out[:, j, :] = x
    return out


def sample_path_exact(spec: DiffusionSpec, grid, seed: SeedSpec) -> PathSample:
    """Exact path on the grid; rejects 'general' specs."""
    times = _grid_times(grid)
    states = simulate_states(
        spec, times, seed.master_seed, np.array([seed.path_index]), "exact"
    )[0]
    return PathSample(times=times, states=states)


def sample_path_euler(spec: DiffusionSpec, grid, seed: SeedSpec) -> PathSample:
    """Euler-Maruyama path on the grid (log-Euler in case C2)."""
    times = _grid_times(grid)
    states = simulate_states(
        spec, times, seed.master_seed, np.array([seed.path_index]), "euler"
    )[0]
    return PathSample(times=times, states=states)
