"""Random small-cell scenarios and Monte Carlo batches.

Geometry: SUs uniform over the SC disk, MUs uniform over an annulus around
the SC BS. Each SC-user link gets path loss ``128.1 + 37.6 log10(d_km)``,
i.i.d. lognormal shadowing, an optional penetration loss, and unit-mean
exponential (Rayleigh power) fading drawn independently per (user, band).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import ChannelState, ModelError, SystemParams

MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class GeometryConfig:
    sc_radius: float = 50.0
    mu_ring: tuple = (20.0, 200.0)
    n_su: int = 5
    n_mu: int = 5
    seed: int = 0
    # MC BS distance is documentation only; no formula uses it
    mc_distance: float = 500.0

    def __post_init__(self):
        lo, hi = self.mu_ring
        if not 0 < lo < hi:
            raise ModelError("mu_ring must satisfy 0 < min < max")
        if self.sc_radius <= 0:
            raise ModelError("sc_radius must be > 0")
        if self.n_su < 1 or self.n_mu < 1:
            raise ModelError("user counts must be >= 1")

    def with_seed(self, seed: int) -> "GeometryConfig":
        return GeometryConfig(self.sc_radius, self.mu_ring, self.n_su, self.n_mu, int(seed), self.mc_distance)


@dataclass(frozen=True)
class ChannelConfig:
    pathloss_intercept_db: float = 128.1
    pathloss_slope: float = 37.6
    shadowing_sigma_db: float = 8.0
    penetration_loss_db: float = 20.0
    penetration_on_mu: bool = True
    penetration_on_su: bool = False
    rayleigh: bool = True

    def __post_init__(self):
        if self.shadowing_sigma_db < 0 or self.penetration_loss_db < 0:
            raise ModelError("shadowing sigma and penetration loss must be >= 0")

    def pathloss_db(self, d_m):
        d_km = np.maximum(np.asarray(d_m, dtype=float), MIN_DISTANCE_M) / 1000.0
        return self.pathloss_intercept_db + self.pathloss_slope * np.log10(d_km)


def disk_radii(rng: np.random.Generator, n: int, r_min: float, r_max: float) -> np.ndarray:
    """Radii of points uniform in area over the annulus ``[r_min, r_max]``."""
    u = rng.random(n)
    return np.sqrt(r_min**2 + u * (r_max**2 - r_min**2))


def generate_scenario(geom: GeometryConfig, chcfg: ChannelConfig = ChannelConfig(), sp: SystemParams | None = None) -> ChannelState:
    """Draw one channel realization; identical output for identical ``geom.seed``."""
    if sp is not None and (sp.n_mu != geom.n_mu or sp.n_su != geom.n_su):
        raise ModelError("geometry user counts do not match system parameters")
    rng = np.random.default_rng(geom.seed)
    k, n = geom.n_mu, geom.n_su
    d_su = np.maximum(disk_radii(rng, n, 0.0, geom.sc_radius), MIN_DISTANCE_M)
    d_mu = disk_radii(rng, k, *geom.mu_ring)
    shadow_su = rng.normal(0.0, chcfg.shadowing_sigma_db, n)
    shadow_mu = rng.normal(0.0, chcfg.shadowing_sigma_db, k)
    loss_su = chcfg.pathloss_db(d_su) + shadow_su + (chcfg.penetration_loss_db if chcfg.penetration_on_su else 0.0)
    loss_mu = chcfg.pathloss_db(d_mu) + shadow_mu + (chcfg.penetration_loss_db if chcfg.penetration_on_mu else 0.0)
    if chcfg.rayleigh:
        fade_mu = rng.exponential(1.0, k)
        fade_su = rng.exponential(1.0, n)
        fade_cross = rng.exponential(1.0, (k, n))
    else:
        fade_mu, fade_su, fade_cross = np.ones(k), np.ones(n), np.ones((k, n))
    # fading draws can underflow to exactly 0; keep gains strictly positive
    tiny = np.finfo(float).tiny
    h = np.maximum(10.0 ** (-loss_mu / 10.0) * fade_mu, tiny)
    g = np.maximum(10.0 ** (-loss_su / 10.0) * fade_su, tiny)
    gc = np.maximum(10.0 ** (-loss_su / 10.0)[None, :] * fade_cross, tiny)
    return ChannelState(h, g, gc)


def trial_seed(base_seed: int, trial: int) -> int:
    """64-bit sub-seed for trial ``trial`` of a batch started from ``base_seed``."""
    ss = np.random.SeedSequence([int(base_seed) & (2**64 - 1), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def worker_count() -> int:
    env = os.environ.get("SPT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ModelError(f"SPT_THREADS must be an integer, got {env!r}") from exc
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Ordered map over ``items`` on a bounded process pool (in-process if 1 worker)."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass
class MonteCarloTable:
    """Per-trial results and their per-scheme aggregate."""

    rows: list = field(default_factory=list)

    def aggregate(self) -> dict:
        out = {}
        schemes = sorted({r["scheme"] for r in self.rows})
        for s in schemes:
            ees = [r["outcome"].ee for r in self.rows if r["scheme"] == s and r["outcome"].feasible]
            n_inf = sum(1 for r in self.rows if r["scheme"] == s and not r["outcome"].feasible)
            out[s] = summarize(ees, n_inf)
        return out


def summarize(values: Sequence[float], n_infeasible: int = 0) -> dict:
    vals = sorted(values)  # sorted so the float sum is independent of trial order
    n = len(vals)
    mean = math.fsum(vals) / n if n else math.nan
    if n > 1:
        var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = math.nan if n == 0 else 0.0
    return {"mean": mean, "stderr": stderr, "n": n, "n_infeasible": n_infeasible}


def _run_trial(args):
    from .selection import run_schemes

    seed, geom, chcfg, sp, schemes = args
    ch = generate_scenario(geom.with_seed(seed), chcfg, sp)
    return seed, run_schemes(schemes, sp, ch)


def monte_carlo(batch: int, geom: GeometryConfig, chcfg: ChannelConfig, sp: SystemParams, schemes: Sequence[str],
                workers: int | None = None) -> MonteCarloTable:
    """Run each scheme on ``batch`` scenarios seeded from ``geom.seed``.

    Infeasible trials stay in ``rows`` with ``feasible=False`` and are left
    out of the means.
    """
    from .selection import SCHEMES

    if batch < 1:
        raise ModelError("batch must be >= 1")
    unknown = [s for s in schemes if s not in SCHEMES]
    if unknown:
        raise ModelError(f"unknown scheme(s): {', '.join(unknown)}")
    seeds = [trial_seed(geom.seed, i) for i in range(batch)]
    results = parallel_map(_run_trial, [(s, geom, chcfg, sp, tuple(schemes)) for s in seeds], workers)
    table = MonteCarloTable()
    for seed, per_scheme in results:
        for scheme in schemes:
            res = per_scheme[scheme]
            table.rows.append({"seed": seed, "scheme": scheme, "outcome": res.outcome, "psi": res.psi})
    return table
