"""Diagnostics: curvature blow-up exponent, error density, rate fitting.

The key quantity is m(t) = sup_{a,b} E[A_aa(X_t) A_bb(X_t) |d2F/dx_a dx_b|^2],
whose growth like (T-t)^(-2 theta) as t -> T determines both the attainable
convergence rate and the time-net parameter eta that restores n^(-1/2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .models import DiffusionSpec, a_matrix, sigma_matrix, simulate_states

__all__ = [
    "ThetaFit",
    "H2Curve",
    "RateFit",
    "estimate_theta",
    "estimate_h2",
    "choose_eta",
    "fit_rate",
    "one_step_profile",
]

#: default path count for the MC diagnostics
DEFAULT_N = 100_000

#: rate fits drop pre-asymptotic points below this net cardinality
RATE_N_MIN = 8


@dataclass(frozen=True)
class ThetaFit:
    """theta estimated from log m(t) ~ const - 2 theta log(T - t)."""

    theta_hat: float
    ci95: tuple
    grid: tuple  # ((t, m_hat), ...)
    r2: float

    def __post_init__(self):
        if not (-0.2 <= self.theta_hat <= 1.2):
            warnings.warn(
                f"theta_hat = {self.theta_hat:.3f} outside [0, 1.2]: the "
                "polynomial blow-up assumption looks violated",
                stacklevel=2,
            )


@dataclass(frozen=True)
class H2Curve:
    points: tuple  # ((u, h2_hat, stderr), ...)

    def infimum(self):
        """(min estimate, stderr at the argmin) over the curve."""
        vals = [p[1] for p in self.points]
        k = int(np.argmin(vals))
        return self.points[k][1], self.points[k][2]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci95_slope: tuple
    r2: float
    points_used: tuple


def _state_at(spec, t, n_paths, master_seed):
    """Exact-sampled X_t for paths 0..N-1 (one transition, step index 0)."""
    times = np.array([0.0, t])
    idx = np.arange(n_paths, dtype=np.uint64)
    return simulate_states(spec, times, master_seed, idx, "exact")[:, 1, :]


def _pair_moments(spec, pricing, t, x):
    """Mean and stderr of A_aa A_bb (d2F_ab)^2 for every pair, shape (d,d)."""
    hess = pricing.hessian(t, x)
    a_diag = np.einsum("bii->bi", a_matrix(spec, x))
    vals = a_diag[:, :, None] * a_diag[:, None, :] * hess * hess
    mean = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
    return mean, stderr


def default_theta_grid(T: float, n_points: int = 20) -> np.ndarray:
    """20 points log-spaced in T - t over the window [T/2, T - 1e-3]."""
    gap = np.geomspace(T / 2.0, 1e-3, n_points)
    return T - gap


def estimate_theta(spec, pricing, t_grid=None, n_paths: int = DEFAULT_N,
                   master_seed: int = 0) -> ThetaFit:
    """Fit the blow-up exponent of m(t) = sup_ab E[A_aa A_bb |d2F_ab|^2].

    The sup over coordinate pairs is exhaustive (d is small); the exponent
    comes from OLS of log m(t) on log(T - t), slope = -2 theta, with a
    delta-method confidence interval.
    """
    T = pricing.T
    if t_grid is None:
        t_grid = default_theta_grid(T)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < T / 2.0 - 1e-12) or np.any(t_grid > T - 1e-3 + 1e-12):
        raise ValueError("theta grid must lie within [T/2, T - 1e-3]")
    ms, ts = [], []
    for t in t_grid:
        x = _state_at(spec, t, n_paths, master_seed)
        mean, _ = _pair_moments(spec, pricing, t, x)
        m = float(mean.max())
        if m <= 0.0:
            warnings.warn(f"nonpositive m({t:g}) estimate excluded", stacklevel=2)
            continue
        ms.append(m)
        ts.append(t)
    if len(ms) < 3:
        raise ValueError("too few usable grid points for the theta fit")
    lx = np.log(T - np.asarray(ts))
    ly = np.log(ms)
    slope, intercept, se_slope, r2 = _ols(lx, ly)
    theta = -slope / 2.0
    half = 1.96 * se_slope / 2.0
    return ThetaFit(
        theta_hat=theta, ci95=(theta - half, theta + half),
        grid=tuple(zip(ts, ms)), r2=r2,
    )


def theta_grid_table(spec, pricing, t_grid, n_paths, master_seed):
    """(t, m_hat, stderr) rows backing estimate_theta, for CSV export."""
    rows = []
    for t in np.asarray(t_grid, dtype=float):
        x = _state_at(spec, t, n_paths, master_seed)
        mean, stderr = _pair_moments(spec, pricing, t, x)
        k = np.unravel_index(np.argmax(mean), mean.shape)
        rows.append((float(t), float(mean[k]), float(stderr[k])))
    return rows


def estimate_h2(spec, pricing, u_grid, n_paths: int = DEFAULT_N,
                master_seed: int = 0) -> H2Curve:
    """MC curve of H^2(u) = E || sigma(X_u)^T d2F(u, X_u) sigma(X_u) ||_F^2."""
    points = []
    for u in np.asarray(u_grid, dtype=float):
        x = _state_at(spec, u, n_paths, master_seed)
        sig = sigma_matrix(spec, x)
        hess = pricing.hessian(u, x)
        core = np.swapaxes(sig, -1, -2) @ hess @ sig
        vals = (core * core).sum(axis=(-1, -2))
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(vals.size))
        points.append((float(u), mean, stderr))
    return H2Curve(points=tuple(points))


def choose_eta(theta: float) -> float:
    """Net parameter for a given blow-up exponent.

    theta < 1/2 keeps the equidistant net (eta = 0); otherwise eta = theta,
    the midpoint of the admissible interval (2 theta - 1, 1).
    """
    if not (0.0 <= theta < 1.0):
        raise ValueError("theta must lie in [0, 1)")
    return 0.0 if theta < 0.5 else float(theta)


def _ols(x, y):
    """Slope, intercept, slope stderr, r^2 of ordinary least squares."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = x.size
    xm = x - x.mean()
    sxx = float(xm @ xm)
    if sxx == 0.0:
        raise ValueError("degenerate abscissae")
    slope = float(xm @ y) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    if k > 2:
        se = math.sqrt(ss_res / (k - 2) / sxx)
    else:
        se = 0.0
    return slope, intercept, se, r2


def fit_rate(points: Sequence) -> RateFit:
    """OLS of log rms on log n; points with n < RATE_N_MIN are dropped.

    Accepts (n, rms) pairs. Scale-equivariant by construction: scaling every
    rms by c shifts the intercept by log c and leaves the slope unchanged.
    """
    used = [(int(n), float(r)) for n, r in points if n >= RATE_N_MIN]
    if len(used) < 4:
        raise ValueError("rate fit needs at least 4 points with n >= 8")
    if any(r <= 0.0 for _, r in used):
        raise ValueError("rms values must be positive")
    rms = np.array([r for _, r in used])
    if np.all(rms == rms[0]):
        raise ValueError("degenerate (constant) rms inputs")
    lx = np.log([n for n, _ in used])
    ly = np.log(rms)
    slope, intercept, se, r2 = _ols(lx, ly)
    tcrit = stats.t.ppf(0.975, len(used) - 2)
    return RateFit(
        slope=slope, intercept=intercept,
        ci95_slope=(slope - tcrit * se, slope + tcrit * se),
        r2=r2, points_used=tuple(used),
    )


def one_step_profile(spec, pricing, a: float, u_grid, n_paths: int = DEFAULT_N,
                     master_seed: int = 0, n_integral: int = 33):
    """One-interval error profile: LHS(u) vs the integral of m(t) over [a, u].

    LHS(u) = sum_{k,l} E[ (dF_k(u, X_u) - dF_k(a, X_a))^2 sigma_kl(X_u)^2 ]
    for the same path sampled at a then u. Returns a list of
    (u, lhs, lhs_stderr, integral_of_m) rows.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if np.any(u_grid < a):
        raise ValueError("u grid must not precede the interval start a")
    idx = np.arange(n_paths, dtype=np.uint64)

    # m(t) on a shared integration grid, then cumulative trapezoid.
    t_int = np.linspace(a, float(u_grid.max()), n_integral)
    m_vals = []
    for t in t_int:
        if t == 0.0:
            x = np.broadcast_to(spec.x0, (n_paths, spec.d))
        else:
            x = _state_at(spec, t, n_paths, master_seed)
        mean, _ = _pair_moments(spec, pricing, t, x)
        m_vals.append(float(mean.max()))
    m_vals = np.asarray(m_vals)
    cum = np.concatenate(
        [[0.0], np.cumsum(0.5 * (m_vals[1:] + m_vals[:-1]) * np.diff(t_int))]
    )

    rows = []
    for u in u_grid:
        if u == a:
            rows.append((float(u), 0.0, 0.0, 0.0))
            continue
        if a > 0.0:
            states = simulate_states(
                spec, np.array([0.0, a, u]), master_seed, idx, "exact"
            )
            xa, xu = states[:, 1, :], states[:, 2, :]
        else:
            xa = np.broadcast_to(spec.x0, (n_paths, spec.d))
            xu = simulate_states(
                spec, np.array([0.0, u]), master_seed, idx, "exact"
            )[:, 1, :]
        dgrad = pricing.gradient(u, xu) - pricing.gradient(a, xa)
        sig = sigma_matrix(spec, xu)
        row_sq = (sig * sig).sum(axis=-1)  # sum_l sigma_kl^2, shape (B, d)
        vals = (dgrad * dgrad * row_sq).sum(axis=1)
        lhs = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(vals.size))
        rows.append((float(u), lhs, se, float(np.interp(u, t_int, cum))))
    return rows
