"""MU selection: trading EE, greedy selection, and the comparison baselines."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .allocator import Instance, dinkelbach, dinkelbach_solve, max_rate_solve
from .model import Allocation, ChannelState, EEOutcome, InfeasibleError, ModelError, SystemParams

EXHAUSTIVE_MAX_K = 20

VARIANTS = ("no-C1-no-C4", "no-C1", "no-C4")


@dataclass(frozen=True)
class TradingEEResult:
    mu_index: int
    trading_ee: float
    optimal_w: float
    optimal_p: float
    optimal_q: float


@dataclass(frozen=True)
class TraceEntry:
    candidate: int
    trading_ee: float
    accepted: bool
    ee_after: float
    note: str = ""


@dataclass(frozen=True)
class SelectionResult:
    psi: frozenset
    ee: float
    allocation: Allocation
    outcome: EEOutcome
    trace: tuple = ()
    solves: int = 0


class SubsetCache:
    """Memo of ``dinkelbach_solve`` per selection; infeasible sets map to None."""

    def __init__(self, sp: SystemParams, ch: ChannelState, trading: list | None = None):
        self.sp = sp
        self.ch = ch
        self.results: dict = {}
        # trading EEs ignore P_max, P_c and R_min, so sweeps may pass them in
        self.trading = trading

    def solve(self, psi):
        key = frozenset(psi)
        if key not in self.results:
            try:
                self.results[key] = dinkelbach_solve(key, self.sp, self.ch)
            except InfeasibleError:
                self.results[key] = None
        return self.results[key]

    def trading_ees(self) -> list:
        if self.trading is None:
            self.trading = [trading_ee(k, self.sp, self.ch) for k in range(self.sp.n_mu)]
        return self.trading


def trading_ee(k: int, sp: SystemParams, ch: ChannelState) -> TradingEEResult:
    """Best ratio of traded-band SU rate to the power spent on the trade with MU ``k``.

    Solved as a one-MU, one-SU instance with no circuit power, no power
    budget and no SC rate floor.
    """
    if not 0 <= k < sp.n_mu:
        raise ModelError(f"MU index {k} out of range")
    inst = Instance.trading(k, sp, ch)
    nu, rate, power, _, _ = dinkelbach(inst)
    alloc = inst.allocation(nu)
    if alloc.b_traded[k] <= 0.0 or rate <= 0.0:
        return TradingEEResult(k, 0.0, float(alloc.w_mu[k]), 0.0, float(alloc.q_mu[k]))
    return TradingEEResult(k, rate / power, float(alloc.w_mu[k]), float(alloc.p_su_traded[k]), float(alloc.q_mu[k]))


def trading_order(results) -> list:
    """MU indices by descending trading EE, lower index first on ties."""
    return [r.mu_index for r in sorted(results, key=lambda r: (-r.trading_ee, r.mu_index))]


def greedy_select(sp: SystemParams, ch: ChannelState, cache: SubsetCache | None = None) -> SelectionResult:
    """Visit MUs in descending trading EE; keep each one that strictly raises system EE."""
    cache = cache or SubsetCache(sp, ch)
    base = cache.solve(())
    solves = 1
    if base is None:
        raise InfeasibleError("SC rate floor unreachable even without trading", ())
    tee = {r.mu_index: r.trading_ee for r in cache.trading_ees()}
    psi = frozenset()
    alloc, outcome = base
    trace = []
    for k in trading_order(cache.trading_ees()):
        res = cache.solve(psi | {k})
        solves += 1
        if res is None:
            trace.append(TraceEntry(k, tee[k], False, math.nan, "infeasible"))
            continue
        if res[1].ee > outcome.ee:
            psi = psi | {k}
            alloc, outcome = res
            trace.append(TraceEntry(k, tee[k], True, outcome.ee))
        else:
            trace.append(TraceEntry(k, tee[k], False, res[1].ee))
    return SelectionResult(psi, outcome.ee, alloc, outcome, tuple(trace), solves)


def exhaustive_select(sp: SystemParams, ch: ChannelState, cache: SubsetCache | None = None) -> SelectionResult:
    """Best EE over every feasible subset; ties go to fewer MUs, then lexicographic order."""
    if sp.n_mu > EXHAUSTIVE_MAX_K:
        raise ModelError(f"exhaustive search refused for K={sp.n_mu} > {EXHAUSTIVE_MAX_K}")
    cache = cache or SubsetCache(sp, ch)
    best = None
    solves = 0
    for size in range(sp.n_mu + 1):
        for subset in itertools.combinations(range(sp.n_mu), size):
            res = cache.solve(subset)
            solves += 1
            if res is not None and (best is None or res[1].ee > best[2].ee):
                best = (frozenset(subset), *res)
    if best is None:
        raise InfeasibleError("no feasible MU selection", ())
    psi, alloc, outcome = best
    return SelectionResult(psi, outcome.ee, alloc, outcome, (), solves)


def non_spt_solve(sp: SystemParams, ch: ChannelState, cache: SubsetCache | None = None) -> EEOutcome:
    """EE maximization on the SU own bands only."""
    cache = cache or SubsetCache(sp, ch)
    res = cache.solve(())
    if res is None:
        raise InfeasibleError("SC rate floor unreachable without trading", ())
    return res[1]


def throughput_max_solve(sp: SystemParams, ch: ChannelState, cache: SubsetCache | None = None):
    """Rate maximization with the full power budget; MUs added in trading-EE order
    while the total rate strictly increases. The selection is ``allocation.selected``."""
    cache = cache or SubsetCache(sp, ch)
    try:
        alloc, outcome = max_rate_solve((), sp, ch)
    except InfeasibleError as exc:
        raise InfeasibleError("SC rate floor unreachable without trading", ()) from exc
    for k in trading_order(cache.trading_ees()):
        try:
            a, o = max_rate_solve(alloc.selected | {k}, sp, ch)
        except InfeasibleError:
            continue
        if o.rate_total > outcome.rate_total:
            alloc, outcome = a, o
    return alloc, outcome


def relaxed_params(sp: SystemParams, variant: str) -> SystemParams:
    if variant == "no-C1-no-C4":
        return sp.replace(p_max_sc=math.inf, r_sc_min=0.0)
    if variant == "no-C1":
        return sp.replace(p_max_sc=math.inf)
    if variant == "no-C4":
        return sp.replace(r_sc_min=0.0)
    raise ModelError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def theorem3_predicate(m: int, psi, sp: SystemParams, ch: ChannelState, variant: str) -> bool:
    """Whether MU ``m``'s trading EE exceeds the system EE of ``psi`` under the
    relaxed problem ``variant``. Validation only; greedy selection compares
    solved EEs directly."""
    psi = frozenset(psi)
    if m in psi:
        raise ModelError("m must not already be selected")
    relaxed = relaxed_params(sp, variant)
    _, out = dinkelbach_solve(psi, relaxed, ch)
    return trading_ee(m, sp, ch).trading_ee > out.ee


# ---------------------------------------------------------------- schemes


@dataclass(frozen=True)
class SchemeResult:
    outcome: EEOutcome
    psi: frozenset = field(default_factory=frozenset)


def _scheme_greedy(sp, ch, cache):
    r = greedy_select(sp, ch, cache)
    return SchemeResult(r.outcome, r.psi)


def _scheme_exhaustive(sp, ch, cache):
    r = exhaustive_select(sp, ch, cache)
    return SchemeResult(r.outcome, r.psi)


def _scheme_non_spt(sp, ch, cache):
    return SchemeResult(non_spt_solve(sp, ch, cache), frozenset())


def _scheme_tput(sp, ch, cache):
    alloc, outcome = throughput_max_solve(sp, ch, cache)
    return SchemeResult(outcome, alloc.selected)


SCHEMES = {
    "greedy": _scheme_greedy,
    "exhaustive": _scheme_exhaustive,
    "non-spt": _scheme_non_spt,
    "tput": _scheme_tput,
}


def run_schemes(schemes, sp: SystemParams, ch: ChannelState, trading: list | None = None) -> dict:
    """Run named schemes on one scenario, sharing subset solves between them."""
    cache = SubsetCache(sp, ch, trading)
    out = {}
    for name in schemes:
        try:
            fn = SCHEMES[name]
        except KeyError:
            raise ModelError(f"unknown scheme {name!r}") from None
        try:
            out[name] = fn(sp, ch, cache)
        except InfeasibleError:
            out[name] = SchemeResult(EEOutcome.infeasible())
    return out
