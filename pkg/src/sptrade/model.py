"""Problem data, rate and power formulas, and feasibility screening.

All quantities are SI: watts, hertz, bit/s, bit/joule. Unit conversion from
dBm / kHz / kbit/s happens only in :mod:`sptrade.config`.

MU and SU indices are 0-based throughout the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

LN2 = math.log(2.0)


class ModelError(ValueError):
    """Structural or domain violation in problem data."""


class InfeasibleError(RuntimeError):
    """No allocation meets the power budget and rate floors for a selection."""

    def __init__(self, message: str, psi: Iterable[int] = ()):
        super().__init__(message)
        self.psi = frozenset(psi)


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message: str, diagnostics: Mapping | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


def _frozen(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1) if np.ndim(a) <= 1 else np.array(a, dtype=float)
    arr.setflags(write=False)
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class SystemParams:
    """Static constants of one small cell / macro cell trading problem.

    ``p_max_sc`` may be ``inf`` and ``r_sc_min`` may be 0; both are used to
    drop the power budget or the SC rate floor when relaxing the problem.
    """

    p_max_sc: float
    p_circuit: float
    pa_efficiency: float
    noise_density: float
    r_sc_min: float
    mu_bandwidths: np.ndarray
    mu_rate_floors: np.ndarray
    su_bandwidths: np.ndarray

    def __post_init__(self):
        for name in ("mu_bandwidths", "mu_rate_floors", "su_bandwidths"):
            object.__setattr__(self, name, _frozen(getattr(self, name), name))
        if not self.p_max_sc > 0:
            raise ModelError("p_max_sc must be > 0")
        if not (math.isfinite(self.p_circuit) and self.p_circuit >= 0):
            raise ModelError("p_circuit must be finite and >= 0")
        if not 0 < self.pa_efficiency <= 1:
            raise ModelError("pa_efficiency must lie in (0, 1]")
        if not (math.isfinite(self.noise_density) and self.noise_density > 0):
            raise ModelError("noise_density must be > 0")
        if not (math.isfinite(self.r_sc_min) and self.r_sc_min >= 0):
            raise ModelError("r_sc_min must be finite and >= 0")
        if self.mu_bandwidths.shape != self.mu_rate_floors.shape:
            raise ModelError("mu_bandwidths and mu_rate_floors differ in length")
        if self.n_su < 1:
            raise ModelError("at least one SU is required")
        if np.any(self.mu_bandwidths <= 0) or np.any(self.su_bandwidths <= 0):
            raise ModelError("bandwidths must be > 0")
        if np.any(self.mu_rate_floors <= 0):
            raise ModelError("MU rate floors must be > 0")

    @property
    def n_mu(self) -> int:
        return int(self.mu_bandwidths.size)

    @property
    def n_su(self) -> int:
        return int(self.su_bandwidths.size)

    @classmethod
    def defaults(cls, n_mu: int = 5, n_su: int = 5, **overrides) -> "SystemParams":
        """Default simulation constants (30 dBm, 2 W circuit, 0.38 PA, -174 dBm/Hz)."""
        values = dict(
            p_max_sc=dbm_to_watt(30.0),
            p_circuit=2.0,
            pa_efficiency=0.38,
            noise_density=dbm_to_watt(-174.0),
            r_sc_min=1000e3,
            mu_bandwidths=np.full(n_mu, 240e3),
            mu_rate_floors=np.full(n_mu, 700e3),
            su_bandwidths=np.full(n_su, 180e3),
        )
        values.update(overrides)
        return cls(**values)

    def replace(self, **changes) -> "SystemParams":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return SystemParams(**values)


@dataclass(frozen=True)
class ChannelState:
    """Linear channel power gains for one scenario realization.

    ``g_cross[k, n]`` is the gain of SU ``n`` on the band licensed to MU ``k``.
    """

    h_mu: np.ndarray
    g_su_own: np.ndarray
    g_cross: np.ndarray

    def __post_init__(self):
        h = _frozen(self.h_mu, "h_mu")
        g = _frozen(self.g_su_own, "g_su_own")
        gc = np.array(self.g_cross, dtype=float).reshape(h.size, g.size)
        gc.setflags(write=False)
        for name, arr in (("h_mu", h), ("g_su_own", g), ("g_cross", gc)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ModelError(f"{name} gains must be finite and > 0")
        object.__setattr__(self, "h_mu", h)
        object.__setattr__(self, "g_su_own", g)
        object.__setattr__(self, "g_cross", gc)

    @property
    def n_mu(self) -> int:
        return int(self.h_mu.size)

    @property
    def n_su(self) -> int:
        return int(self.g_su_own.size)


@dataclass(frozen=True)
class Allocation:
    """Resource allocation for a selection ``selected``.

    MU-indexed arrays have length K and are zero for unselected MUs.
    ``best_su[k]`` is the SU receiving MU ``k``'s traded band.
    """

    p_su_own: np.ndarray
    p_su_traded: np.ndarray
    q_mu: np.ndarray
    w_mu: np.ndarray
    b_traded: np.ndarray
    selected: frozenset
    best_su: tuple
    water_level: float = math.nan

    def __post_init__(self):
        for name in ("p_su_own", "p_su_traded", "q_mu", "w_mu", "b_traded"):
            object.__setattr__(self, name, _frozen(getattr(self, name), name))
        object.__setattr__(self, "selected", frozenset(int(k) for k in self.selected))
        object.__setattr__(self, "best_su", tuple(int(n) for n in self.best_su))

    @property
    def transmit_power(self) -> float:
        return float(self.p_su_own.sum() + self.p_su_traded.sum() + self.q_mu.sum())


@dataclass(frozen=True)
class EEOutcome:
    """Energy-efficiency result of one solve."""

    ee: float
    rate_total: float
    power_total: float
    rate_slack: float
    power_slack: float
    dinkelbach_iters: int
    feasible: bool
    trace: tuple = field(default=(), compare=False)

    @classmethod
    def infeasible(cls) -> "EEOutcome":
        nan = math.nan
        return cls(nan, nan, nan, nan, nan, 0, False)


# ---------------------------------------------------------------- formulas


def _rate(bw, power, gain, n0, what: str):
    bw = np.asarray(bw, dtype=float)
    power = np.asarray(power, dtype=float)
    gain = np.asarray(gain, dtype=float)
    if np.any(bw < 0) or np.any(power < 0):
        raise ModelError(f"{what}: bandwidth and power must be >= 0")
    if np.any(gain <= 0) or n0 <= 0:
        raise ModelError(f"{what}: gain and noise density must be > 0")
    if np.any((bw == 0) & (power > 0)):
        raise ModelError(f"{what}: positive power on zero bandwidth")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(bw > 0, bw * np.log1p(power * gain / np.where(bw > 0, bw, 1.0) / n0) / LN2, 0.0)
    return float(r) if r.ndim == 0 else r


def mu_rate(w, q, h, n0):
    """Rate of an MU served on bandwidth ``w`` with power ``q``.

    ``w == 0`` with ``q == 0`` gives 0; ``w == 0`` with ``q > 0`` is rejected.
    """
    return _rate(w, q, h, n0, "mu_rate")


def su_rate_own(p, b, g, n0):
    """Rate of an SU on its own band ``b`` with power ``p``."""
    return _rate(b, p, g, n0, "su_rate_own")


def min_mu_power(w: float, rate: float, h: float, n0: float) -> float:
    """Power needed to give an MU ``rate`` on bandwidth ``w`` (C3 with equality)."""
    if w <= 0:
        return math.inf if rate > 0 else 0.0
    x = rate * LN2 / w
    if x > 700.0:
        return math.inf
    return math.expm1(x) * w * n0 / h


def _check_dims(sp: SystemParams, ch: ChannelState, alloc: Allocation | None = None):
    if sp.n_mu != ch.n_mu or sp.n_su != ch.n_su:
        raise ModelError(
            f"dimension mismatch: params K={sp.n_mu}, N={sp.n_su}; channels K={ch.n_mu}, N={ch.n_su}"
        )
    if alloc is not None:
        if alloc.p_su_own.size != sp.n_su:
            raise ModelError("allocation SU dimension mismatch")
        for name in ("p_su_traded", "q_mu", "w_mu", "b_traded"):
            if getattr(alloc, name).size != sp.n_mu:
                raise ModelError(f"allocation {name} dimension mismatch")
        if any(not 0 <= k < sp.n_mu for k in alloc.selected):
            raise ModelError("allocation selects an unknown MU")


def traded_rates(alloc: Allocation, ch: ChannelState, sp: SystemParams) -> np.ndarray:
    """Per-MU rate gained by the best SU on each traded band (0 if unselected)."""
    out = np.zeros(sp.n_mu)
    for k in alloc.selected:
        out[k] = su_rate_own(alloc.p_su_traded[k], alloc.b_traded[k], ch.g_cross[k, alloc.best_su[k]], sp.noise_density)
    return out


def total_rate(alloc: Allocation, ch: ChannelState, sp: SystemParams) -> float:
    """Sum of SU rates on own bands plus traded bands. MU rates are not counted."""
    _check_dims(sp, ch, alloc)
    own = su_rate_own(alloc.p_su_own, sp.su_bandwidths, ch.g_su_own, sp.noise_density)
    return float(np.sum(own) + np.sum(traded_rates(alloc, ch, sp)))


def total_power(alloc: Allocation, sp: SystemParams) -> float:
    """Transmit powers over PA efficiency plus circuit power."""
    if alloc.p_su_own.size != sp.n_su or alloc.q_mu.size != sp.n_mu:
        raise ModelError("allocation dimension mismatch")
    sel = np.zeros(sp.n_mu, dtype=bool)
    sel[list(alloc.selected)] = True
    tx = alloc.p_su_own.sum() + alloc.p_su_traded[sel].sum() + alloc.q_mu[sel].sum()
    return float(tx / sp.pa_efficiency + sp.p_circuit)


def best_su_map(ch: ChannelState) -> tuple:
    """For each MU band, the SU with the largest gain on it (lowest index on ties)."""
    return tuple(int(n) for n in np.argmax(ch.g_cross, axis=1))


# ------------------------------------------------------------ feasibility


def water_fill(widths, floors, budget: float) -> float:
    """Common level ``L`` with ``sum(widths * max(L - floors, 0)) == budget``.

    ``floors`` are noise-to-gain ratios (W/Hz); returns 0 when budget <= 0.
    """
    widths = np.asarray(widths, dtype=float)
    floors = np.asarray(floors, dtype=float)
    if budget <= 0 or widths.size == 0:
        return 0.0
    order = np.argsort(floors)
    f = floors[order]
    wd = widths[order]
    cum_w = np.cumsum(wd)
    cum_wf = np.cumsum(wd * f)
    for m in range(f.size):
        level = (budget + cum_wf[m]) / cum_w[m]
        if m + 1 == f.size or level <= f[m + 1]:
            return float(level)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    mu_power_min: float
    remaining_power: float
    own_rate_max: float
    reason: str = ""


def check_feasible(sp: SystemParams, ch: ChannelState, psi: Iterable[int]) -> FeasibilityReport:
    """Conservative test that some allocation meets C1-C4 for selection ``psi``.

    Each selected MU gets its whole band (cheapest serving power) and the
    remaining budget is water-filled over the SU own bands only. A ``True``
    result is a certificate; ``False`` can be pessimistic because traded
    bandwidth is ignored.
    """
    _check_dims(sp, ch)
    psi = sorted(set(psi))
    if any(not 0 <= k < sp.n_mu for k in psi):
        raise ModelError("psi contains an unknown MU index")
    q_min = sum(
        min_mu_power(sp.mu_bandwidths[k], sp.mu_rate_floors[k], ch.h_mu[k], sp.noise_density) for k in psi
    )
    remaining = sp.p_max_sc - q_min
    if remaining < 0:
        return FeasibilityReport(False, q_min, remaining, 0.0, "MU floors exceed power budget")
    n0 = sp.noise_density
    floors = n0 / ch.g_su_own
    if math.isinf(remaining):
        return FeasibilityReport(True, q_min, remaining, math.inf)
    level = water_fill(sp.su_bandwidths, floors, remaining)
    p = sp.su_bandwidths * np.maximum(level - floors, 0.0)
    rate = float(np.sum(su_rate_own(p, sp.su_bandwidths, ch.g_su_own, n0)))
    if rate < sp.r_sc_min:
        return FeasibilityReport(False, q_min, remaining, rate, "SC rate floor unreachable")
    return FeasibilityReport(True, q_min, remaining, rate)
