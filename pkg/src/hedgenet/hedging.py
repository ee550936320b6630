"""Monte Carlo estimation of the discrete-hedging L2 error.

The error along a path is computed through the martingale-tracking identity:
the continuous hedge integral up to t equals F(t, X_t) - F(0, X_0) exactly,
so only the discrete hedge sum is ever accumulated and the continuous side is
never discretized. At t = T the terminal value f(X_T) replaces F.

Path errors are pure functions of (master_seed, path_index), batches are a
fixed size regardless of worker count, and per-batch sums use exact (fsum)
accumulation, so every estimate is bitwise independent of scheduling.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .models import DiffusionSpec, euler_step, exact_step
from .rng import SeedSpec, normals
from .timenets import RefinedGrid, TimeNet, equidistant_net, eta_net, EtaNetParams, refine

__all__ = [
    "HedgeExperiment",
    "HedgeErrorEstimate",
    "ErrorCurvePoint",
    "path_error",
    "estimate_l2_error",
    "error_curve",
]

#: batch size is fixed (not derived from worker count) for determinism
BATCH_SIZE = 16384

#: default monitoring refinement for running-supremum estimates
M_FACTOR = 32


@dataclass(frozen=True)
class HedgeExperiment:
    """One hedging-error Monte Carlo run."""

    spec: DiffusionSpec
    pricing: object
    net: TimeNet
    n_paths: int
    master_seed: int
    error_mode: str = "terminal"  # "terminal" | "running_sup" | "both"
    monitor_points: Optional[int] = None  # M; defaults to M_FACTOR * n
    scheme: str = "exact"  # "exact" | "euler"

    def __post_init__(self):
        if self.error_mode not in ("terminal", "running_sup", "both"):
            raise ValueError("unknown error mode")
        if self.pricing.T != self.net.horizon:
            raise ValueError("pricing horizon must equal the net horizon")
        if self.spec.d != self.pricing.d:
            raise ValueError("diffusion and payoff dimensions differ")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if (
            self.monitor_points is not None
            and self.monitor_points < self.net.n_intervals
        ):
            raise ValueError("monitor points must be >= the net cardinality")

    @property
    def needs_sup(self) -> bool:
        return self.error_mode in ("running_sup", "both")

    def monitoring_grid(self) -> RefinedGrid:
        M = self.monitor_points
        if M is None:
            M = M_FACTOR * self.net.n_intervals
        return refine(self.net, M)


@dataclass(frozen=True)
class HedgeErrorEstimate:
    """MC estimate of E|error|^2 with its standard error."""

    mean_sq: float
    stderr_mean_sq: float
    n_paths: int
    mode: str

    @property
    def rms(self) -> float:
        return math.sqrt(self.mean_sq)

    @property
    def stderr_rms(self) -> float:
        # delta method: d sqrt(m) / dm = 1 / (2 sqrt(m))
        if self.mean_sq <= 0.0:
            return float("nan")
        return self.stderr_mean_sq / (2.0 * self.rms)


@dataclass(frozen=True)
class ErrorCurvePoint:
    n: int
    estimate: HedgeErrorEstimate
    family: str  # "equidistant" | "eta"
    eta: float


def _batch_errors(spec, pricing, times, is_knot, master_seed, path_indices,
                  scheme, want_sup):
    """(terminal_error, sup_abs_error or None) for a batch of paths.

    ``times`` is the simulation grid (net knots, or a refined grid containing
    them); ``is_knot[j]`` marks rebalancing dates. States are streamed one
    step at a time, so memory stays O(batch * d).
    """
    step = exact_step if scheme == "exact" else euler_step
    B = path_indices.size
    x = np.broadcast_to(spec.x0, (B, spec.d)).copy()
    # All paths start at x0: price and hedge once, broadcast.
    v0 = pricing.value(0.0, x[:1])[0]
    grad = np.broadcast_to(pricing.gradient(0.0, x[:1])[0], (B, spec.d))
    gains = np.zeros(B)
    sup = np.zeros(B) if want_sup else None
    last = times.size - 1
    for j in range(1, times.size):
        dt = times[j] - times[j - 1]
        z = normals(master_seed, path_indices, j - 1, spec.d)
        x_new = step(spec, x, dt, z)
        gains += ((x_new - x) * grad).sum(axis=1)
        x = x_new
        if j < last:
            if want_sup:
                err = pricing.value(times[j], x) - v0 - gains
                np.maximum(sup, np.abs(err), out=sup)
            if is_knot[j]:
                grad = pricing.gradient(times[j], x)
    terminal = pricing.payoff(x) - v0 - gains
    if want_sup:
        np.maximum(sup, np.abs(terminal), out=sup)
    return terminal, sup


def path_error(spec, pricing, net: TimeNet, grid: RefinedGrid, seed: SeedSpec,
               scheme: str = "exact"):
    """(terminal_error, sup_abs_error) of a single hedged path.

    The supremum is taken over the monitoring grid, with the t = T value
    computed from the terminal payoff.
    """
    if not np.all(np.isin(net.knots, grid.times)):
        raise ValueError("monitoring grid must contain every net knot")
    is_knot = np.isin(grid.times, net.knots)
    terminal, sup = _batch_errors(
        spec, pricing, grid.times, is_knot,
        seed.master_seed, np.array([seed.path_index], dtype=np.uint64),
        scheme, want_sup=True,
    )
    return float(terminal[0]), float(sup[0])


def _run_batches(exp: HedgeExperiment, workers: int):
    """Per-batch exact sums of e^2 and e^4 for each requested mode."""
    if exp.needs_sup:
        grid = exp.monitoring_grid()
        times = grid.times
        is_knot = np.isin(times, exp.net.knots)
    else:
        times = exp.net.knots
        is_knot = np.ones(times.size, dtype=bool)
    want_sup = exp.needs_sup
    want_term = exp.error_mode in ("terminal", "both")
    n_batches = -(-exp.n_paths // BATCH_SIZE)

    def run(b):
        lo = b * BATCH_SIZE
        hi = min(lo + BATCH_SIZE, exp.n_paths)
        idx = np.arange(lo, hi, dtype=np.uint64)
        terminal, sup = _batch_errors(
            exp.spec, exp.pricing, times, is_knot, exp.master_seed, idx,
            exp.scheme, want_sup,
        )
        out = {}
        if want_term:
            e2 = terminal * terminal
            out["terminal"] = (math.fsum(e2), math.fsum(e2 * e2))
        if want_sup:
            s2 = sup * sup
            out["running_sup"] = (math.fsum(s2), math.fsum(s2 * s2))
        return out

    if workers <= 1 or n_batches == 1:
        results = [run(b) for b in range(n_batches)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_batches)))
    return results


def _summarize(results, mode, n_paths) -> HedgeErrorEstimate:
    s2 = math.fsum(r[mode][0] for r in results)
    s4 = math.fsum(r[mode][1] for r in results)
    mean_sq = s2 / n_paths
    var = max(s4 / n_paths - mean_sq * mean_sq, 0.0)
    stderr = math.sqrt(var / n_paths)
    return HedgeErrorEstimate(
        mean_sq=mean_sq, stderr_mean_sq=stderr, n_paths=n_paths, mode=mode
    )


def estimate_l2_error(exp: HedgeExperiment, workers: int = 1):
    """MC estimates of E|error|^2, one HedgeErrorEstimate per requested mode.

    Returns a dict keyed by mode ("terminal" and/or "running_sup"). Results
    are bitwise independent of the worker count.
    """
    results = _run_batches(exp, workers)
    modes = (
        ("terminal", "running_sup") if exp.error_mode == "both"
        else (exp.error_mode,)
    )
    return {m: _summarize(results, m, exp.n_paths) for m in modes}


def error_curve(spec, pricing, n_list: Sequence[int], eta: Optional[float],
                n_paths: int, master_seed: int, error_mode: str = "terminal",
                scheme: str = "exact", workers: int = 1,
                monitor_factor: int = M_FACTOR):
    """Sweep the net cardinality n and estimate the error at each n.

    ``eta`` None (or 0) selects the equidistant family. All n share the same
    master seed: common random numbers reduce the variance of fitted slopes.
    Returns a list of ErrorCurvePoint carrying the terminal-mode estimate
    (or the running-sup estimate if that is the only mode requested).
    """
    if list(n_list) != sorted(n_list):
        raise ValueError("n_list must be ascending")
    T = pricing.T
    family = "equidistant" if not eta else "eta"
    points = []
    for n in n_list:
        if family == "equidistant":
            net = equidistant_net(T, int(n))
        else:
            net = eta_net(EtaNetParams(horizon=T, n=int(n), eta=float(eta)))
        exp = HedgeExperiment(
            spec=spec, pricing=pricing, net=net, n_paths=n_paths,
            master_seed=master_seed, error_mode=error_mode, scheme=scheme,
            monitor_points=(
                None if error_mode == "terminal" else monitor_factor * int(n)
            ),
        )
        est = estimate_l2_error(exp, workers=workers)
        pick = "terminal" if "terminal" in est else "running_sup"
        points.append(
            ErrorCurvePoint(
                n=int(n), estimate=est[pick], family=family,
                eta=float(eta or 0.0),
            )
        )
    return points
