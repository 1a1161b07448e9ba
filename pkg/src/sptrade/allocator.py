"""Joint bandwidth and power allocation for a fixed MU selection.

Outer loop: Dinkelbach iteration on the EE ratio, starting from q = 1 bit/J.
Inner loop: the parametric problem ``max R - q P`` under the power budget (C1)
and the SC rate floor (C4) is solved in the dual with a 2-D ellipsoid method;
for given multipliers the primal maximizer is closed form (water-filling on
every band plus a Lambert-W bandwidth split per served MU).

For multipliers ``(lam, mu)`` every primal quantity depends only on the
water level ``nu = (1 + mu) xi / ((q + lam xi) ln 2)`` (W/Hz). After the
ellipsoid has located the duals, the active constraint is met exactly by a
bracketed root solve on ``nu``; this keeps the water-filling structure intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .lambertw import lambert_w0
from .model import (
    LN2,
    Allocation,
    ChannelState,
    ConvergenceError,
    EEOutcome,
    InfeasibleError,
    ModelError,
    SystemParams,
    _check_dims,
    best_su_map,
    total_power,
    total_rate,
)

INV_E = math.exp(-1.0)

DINKELBACH_Q0 = 1.0
DINKELBACH_EPS = 1e-6
DINKELBACH_MAX_ITER = 50

ELLIPSOID_CENTER = (1.0, 1.0)
ELLIPSOID_RADIUS_SQ = 1e6
ELLIPSOID_MAX_ITER = 500
ELLIPSOID_TOL = 1e-7
SLACKNESS_TOL = 1e-6

# relative tolerance on C1/C4 when deciding feasibility of a primal point
FEAS_RTOL = 1e-9


@dataclass(frozen=True)
class DualState:
    lam: float
    mu: float
    ellipsoid_center: np.ndarray
    ellipsoid_shape: np.ndarray
    iters: int = 0


@dataclass(frozen=True)
class DinkelbachState:
    q: float
    t_value: float
    iters: int


def _cg_ratio(r: float) -> float:
    """``r ln r - r + 1`` without cancellation near r = 1."""
    d = r - 1.0
    if abs(d) < 1e-3:
        return d * d * (0.5 - d * (1.0 / 6.0 - d / 12.0))
    return r * math.log(r) - d


class Instance:
    """Closed-form primal family of one fixed-selection problem.

    ``own`` lists SU own bands as ``(bandwidth, N0/g)``; ``traded`` lists
    served MUs as ``(k, W, R, h, N0/g_best)``. The trading-EE subproblem is
    an instance with no own bands, zero circuit power and no C1/C4.
    """

    def __init__(self, own, traded, *, xi, n0, pc, pmax, rmin, n_su, n_mu, best_su, su_index=None):
        self.own = [(float(b), float(f)) for b, f in own]
        self.traded = [(int(k), float(W), float(R), float(h), float(f)) for k, W, R, h, f in traded]
        self.xi = float(xi)
        self.n0 = float(n0)
        self.pc = float(pc)
        self.pmax = float(pmax)
        self.rmin = float(rmin)
        self.n_su = n_su
        self.n_mu = n_mu
        self.best_su = tuple(best_su)
        self.su_index = list(range(len(self.own))) if su_index is None else list(su_index)
        self.rate_ref = sum(b for b, _ in self.own) + sum(t[1] for t in self.traded)
        self.psi = frozenset(t[0] for t in self.traded)
        for _, _, R, h, _ in self.traded:
            if h <= 0:
                raise ModelError("served MU has non-positive gain")

    @classmethod
    def build(cls, psi, sp: SystemParams, ch: ChannelState) -> "Instance":
        _check_dims(sp, ch)
        psi = sorted({int(k) for k in psi})
        if any(not 0 <= k < sp.n_mu for k in psi):
            raise ModelError("psi contains an unknown MU index")
        best = best_su_map(ch) if sp.n_mu else ()
        n0 = sp.noise_density
        own = [(sp.su_bandwidths[n], n0 / ch.g_su_own[n]) for n in range(sp.n_su)]
        traded = [
            (k, sp.mu_bandwidths[k], sp.mu_rate_floors[k], ch.h_mu[k], n0 / ch.g_cross[k, best[k]]) for k in psi
        ]
        return cls(
            own, traded, xi=sp.pa_efficiency, n0=n0, pc=sp.p_circuit, pmax=sp.p_max_sc,
            rmin=sp.r_sc_min, n_su=sp.n_su, n_mu=sp.n_mu, best_su=best,
        )

    @classmethod
    def trading(cls, k: int, sp: SystemParams, ch: ChannelState) -> "Instance":
        """Single-MU instance whose EE is the trading EE of MU ``k``."""
        _check_dims(sp, ch)
        best = best_su_map(ch)
        n0 = sp.noise_density
        traded = [(k, sp.mu_bandwidths[k], sp.mu_rate_floors[k], ch.h_mu[k], n0 / ch.g_cross[k, best[k]])]
        return cls(
            [], traded, xi=sp.pa_efficiency, n0=n0, pc=0.0, pmax=math.inf, rmin=0.0,
            n_su=sp.n_su, n_mu=sp.n_mu, best_su=best, su_index=[],
        )

    # -- primal family -------------------------------------------------

    def mu_power(self, w: float, R: float, h: float) -> float:
        x = R * LN2 / w
        if x > 700.0:
            return math.inf
        return math.expm1(x) * w * self.n0 / h

    def split(self, nu: float, W: float, R: float, h: float, floor: float) -> float:
        """MU bandwidth ``w`` at water level ``nu`` (the rest is traded)."""
        if nu <= floor:
            return W
        c_over_a = floor * _cg_ratio(nu / floor)
        if c_over_a <= 0.0:
            return W
        z = (c_over_a * h / self.n0 - 1.0) * INV_E
        denom = lambert_w0(z) + 1.0
        if denom <= 0.0:
            return W
        return min(R * LN2 / denom, W)

    def point(self, nu: float) -> tuple[float, float]:
        """Total SU rate and total transmit power at water level ``nu``."""
        rate = 0.0
        tx = 0.0
        for b, f in self.own:
            if nu > f:
                tx += b * (nu - f)
                rate += b * math.log(nu / f)
        for _, W, R, h, f in self.traded:
            w = self.split(nu, W, R, h, f)
            tx += self.mu_power(w, R, h)
            if nu > f and w < W:
                b = W - w
                tx += b * (nu - f)
                rate += b * math.log(nu / f)
        return rate / LN2, tx

    def min_power(self) -> float:
        return sum(self.mu_power(W, R, h) for _, W, R, h, _ in self.traded)

    def allocation(self, nu: float) -> Allocation:
        p_own = np.zeros(self.n_su)
        for (b, f), n in zip(self.own, self.su_index):
            p_own[n] = b * max(nu - f, 0.0)
        p_tr = np.zeros(self.n_mu)
        q = np.zeros(self.n_mu)
        w_mu = np.zeros(self.n_mu)
        b_tr = np.zeros(self.n_mu)
        for k, W, R, h, f in self.traded:
            w = self.split(nu, W, R, h, f)
            w_mu[k] = w
            b_tr[k] = W - w
            q[k] = self.mu_power(w, R, h)
            p_tr[k] = (W - w) * max(nu - f, 0.0)
        return Allocation(p_own, p_tr, q, w_mu, b_tr, self.psi, self.best_su, water_level=nu)

    def level(self, q: float, lam: float, mu: float) -> float:
        return (1.0 + mu) * self.xi / ((q + lam * self.xi) * LN2)

    # -- constraint root solves on nu ------------------------------------

    def _solve_level(self, fn, target: float, nu_start: float) -> float:
        """Root of the nondecreasing ``fn(nu) == target`` bracketed around ``nu_start``."""
        lo = hi = max(nu_start, 1e-300)
        if fn(lo) >= target:
            for _ in range(2000):
                lo *= 0.25
                if fn(lo) < target:
                    break
            else:
                raise ConvergenceError("water-level bracket search failed (low side)")
        else:
            for _ in range(2000):
                hi *= 4.0
                if fn(hi) >= target:
                    break
            else:
                raise ConvergenceError("water-level bracket search failed (high side)")
        return brentq(lambda v: fn(v) - target, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)

    def level_for_power(self, power: float, nu_start: float) -> float:
        return self._solve_level(lambda v: self.point(v)[1], power, nu_start)

    def level_for_rate(self, rate: float, nu_start: float) -> float:
        return self._solve_level(lambda v: self.point(v)[0], rate, nu_start)


# ---------------------------------------------------------------- public API


def closed_form_primal(q: float, duals: DualState, psi, sp: SystemParams, ch: ChannelState) -> Allocation:
    """Lagrangian maximizer for given EE estimate ``q`` and multipliers."""
    if q < 0:
        raise ModelError("q must be >= 0")
    inst = Instance.build(psi, sp, ch)
    if q == 0 and duals.lam == 0:
        raise ModelError("q = 0 and lambda = 0 leave the water level unbounded")
    return inst.allocation(inst.level(q, duals.lam, duals.mu))


def dual_subgradient(alloc: Allocation, sp: SystemParams, ch: ChannelState) -> np.ndarray:
    """Slacks of C1 and C4: ``(P_max - transmit power, R_tot - R_min)``."""
    g_lam = sp.p_max_sc - alloc.transmit_power
    g_mu = total_rate(alloc, ch, sp) - sp.r_sc_min
    return np.array([g_lam, g_mu])


def _is_feasible(inst: Instance, rate: float, tx: float) -> bool:
    return tx <= inst.pmax * (1.0 + FEAS_RTOL) and rate >= inst.rmin * (1.0 - FEAS_RTOL)


def _ellipsoid_cut(c, P, g, h, n):
    """Deep-cut update keeping ``{z : g.(z - c) + h <= 0}``; returns None if empty."""
    if n == 1:
        Pg = P[0][0] * g[0]
        gPg = g[0] * Pg
    else:
        Pg = (P[0][0] * g[0] + P[0][1] * g[1], P[1][0] * g[0] + P[1][1] * g[1])
        gPg = g[0] * Pg[0] + g[1] * Pg[1]
    if gPg <= 0.0:
        return None
    s = math.sqrt(gPg)
    alpha = h / s
    if alpha > 1.0:
        return None
    if n == 1:
        r = math.sqrt(P[0][0])
        lo, hi = c[0] - r, c[0] + r
        cut = c[0] - h / g[0]
        if g[0] > 0:
            hi = min(hi, cut)
        else:
            lo = max(lo, cut)
        half = 0.5 * (hi - lo)
        return [0.5 * (lo + hi)], [[half * half]]
    step = (1.0 + n * alpha) / (n + 1)
    c_new = [c[0] - step * Pg[0] / s, c[1] - step * Pg[1] / s]
    fac = n * n / (n * n - 1.0) * (1.0 - alpha * alpha)
    k = 2.0 * (1.0 + n * alpha) / ((n + 1) * (1.0 + alpha)) / gPg
    P_new = [
        [fac * (P[0][0] - k * Pg[0] * Pg[0]), fac * (P[0][1] - k * Pg[0] * Pg[1])],
        [fac * (P[1][0] - k * Pg[1] * Pg[0]), fac * (P[1][1] - k * Pg[1] * Pg[1])],
    ]
    return c_new, P_new


def _solve_inner(inst: Instance, q: float) -> tuple[DualState, float]:
    """Optimal duals and water level of ``max R - q P`` under C1 and C4."""
    zero = np.zeros(2)
    if inst.min_power() > inst.pmax:
        raise InfeasibleError("MU rate floors alone exceed the power budget", inst.psi)

    has_c1 = math.isfinite(inst.pmax)
    has_c4 = inst.rmin > 0.0
    nu0 = inst.level(q, 0.0, 0.0)
    rate0, tx0 = inst.point(nu0)
    if not (has_c1 or has_c4) or _is_feasible(inst, rate0, tx0):
        return DualState(0.0, 0.0, zero, np.zeros((2, 2)), 0), nu0

    xi = inst.xi
    rref = inst.rate_ref
    lam_scale = rref  # bit/J per normalized unit; keeps both coordinates O(1)
    dims = [i for i, on in ((0, has_c1), (1, has_c4)) if on]
    n = len(dims)
    c = [ELLIPSOID_CENTER[0] if has_c1 else 0.0, ELLIPSOID_CENTER[1] if has_c4 else 0.0]
    if n == 2:
        P = [[ELLIPSOID_RADIUS_SQ, 0.0], [0.0, ELLIPSOID_RADIUS_SQ]]
    else:
        P = [[ELLIPSOID_RADIUS_SQ, 0.0], [0.0, 0.0]]

    def pick(c2):
        return [c2[i] for i in dims]

    g_best = math.inf
    best = None
    it = 0
    done = False
    for it in range(1, ELLIPSOID_MAX_ITER + 1):
        x = pick(c)
        neg = [j for j, v in enumerate(x) if v < 0.0]
        if neg:
            j = neg[0]
            g = [0.0] * n
            g[j] = -1.0
            h = -x[j]
            cut = _ellipsoid_cut(x, P if n == 2 else [[P[0][0]]], g, h, n)
        else:
            lam = c[0] * lam_scale
            mu = c[1]
            nu = inst.level(q, lam, mu)
            rate, tx = inst.point(nu)
            ptot = tx / xi + inst.pc
            s1 = (inst.pmax - tx) if has_c1 else 0.0
            s4 = rate - inst.rmin
            gval = (rate - q * ptot + lam * s1 + (mu * s4 if has_c4 else 0.0)) / rref
            grad_full = [s1 * lam_scale / rref, s4 / rref]
            g = [grad_full[i] for i in dims]
            scale = (rate + q * ptot) / rref + 1e-300
            if gval < g_best:
                g_best = gval
                best = (lam, mu if has_c4 else 0.0, nu)
            feas = _is_feasible(inst, rate, tx)
            comp1 = abs(c[0] * grad_full[0]) if has_c1 else 0.0
            comp4 = abs(c[1] * grad_full[1]) if has_c4 else 0.0
            if feas and comp1 <= SLACKNESS_TOL * scale and comp4 <= SLACKNESS_TOL * scale:
                done = True
                break
            Pa = P if n == 2 else [[P[0][0]]]
            gPg = sum(g[i] * sum(Pa[i][j] * g[j] for j in range(n)) for i in range(n))
            if math.sqrt(max(gPg, 0.0)) <= ELLIPSOID_TOL * scale:
                done = True
                break
            cut = _ellipsoid_cut(x, Pa, g, gval - g_best, n)
        if cut is None:
            done = True
            break
        c_new, P_new = cut
        if n == 2:
            c, P = c_new, P_new
        else:
            c = [0.0, 0.0]
            c[dims[0]] = c_new[0]
            P = [[P_new[0][0], 0.0], [0.0, 0.0]]
    if not done:
        raise ConvergenceError(
            "ellipsoid method hit its iteration cap",
            {"q": q, "center": tuple(c), "best_dual": g_best, "psi": sorted(inst.psi)},
        )
    if best is None:
        best = (max(c[0], 0.0) * lam_scale, max(c[1], 0.0), inst.level(q, max(c[0], 0.0) * lam_scale, max(c[1], 0.0)))
    lam_e, mu_e, nu_e = best
    nu, lam, mu = _restore_feasibility(inst, q, lam_e, mu_e, nu_e, nu0, rate0, tx0)
    center = np.array([c[0] * lam_scale, c[1]])
    shape = np.array(P) * np.array([[lam_scale**2, lam_scale], [lam_scale, 1.0]])
    return DualState(lam, mu, center, shape, it), nu


def _restore_feasibility(inst, q, lam_e, mu_e, nu_e, nu0, rate0, tx0):
    """Meet the active constraint exactly, starting from the ellipsoid's level.

    The ellipsoid multipliers pick the candidate active constraint; the
    recovered multiplier must be nonnegative and the other constraint
    satisfied, otherwise the alternative is tried.
    """
    xi = inst.xi
    c1_first = lam_e * xi / max(q, 1e-300) >= mu_e if math.isfinite(inst.pmax) else False
    order = ("c1", "c4") if c1_first else ("c4", "c1")
    for which in order:
        if which == "c1":
            if not math.isfinite(inst.pmax) or tx0 <= inst.pmax:
                continue
            nu = inst.level_for_power(inst.pmax, nu_e)
            rate, tx = inst.point(nu)
            lam = 1.0 / (nu * LN2) - q / xi
            if lam < 0 or nu > nu0:
                continue
            if rate < inst.rmin * (1.0 - FEAS_RTOL):
                raise InfeasibleError("SC rate floor unreachable within the power budget", inst.psi)
            return nu, lam, 0.0
        else:
            if inst.rmin <= 0 or rate0 >= inst.rmin:
                continue
            nu = inst.level_for_rate(inst.rmin, nu_e)
            rate, tx = inst.point(nu)
            mu = nu * q * LN2 / xi - 1.0
            if mu < 0 or nu < nu0:
                continue
            if tx > inst.pmax * (1.0 + FEAS_RTOL):
                raise InfeasibleError("SC rate floor unreachable within the power budget", inst.psi)
            return nu, 0.0, mu
    raise ConvergenceError("could not identify the active constraint", {"q": q, "psi": sorted(inst.psi)})


def solve_duals(q: float, psi, sp: SystemParams, ch: ChannelState) -> tuple[DualState, Allocation]:
    """Optimal multipliers and allocation of the parametric problem at ``q``."""
    if q < 0:
        raise ModelError("q must be >= 0")
    inst = Instance.build(psi, sp, ch)
    duals, nu = _solve_inner(inst, q)
    return duals, inst.allocation(nu)


def dinkelbach(inst: Instance, q0: float = DINKELBACH_Q0, eps: float = DINKELBACH_EPS):
    """Run the Dinkelbach loop on an instance.

    Stops when ``R - q P <= eps * q * P``, i.e. the EE estimate changes by at
    most ``eps`` relative. Returns ``(water_level, rate, power, trace, duals)``.
    """
    q = q0
    trace = []
    for it in range(1, DINKELBACH_MAX_ITER + 1):
        duals, nu = _solve_inner(inst, q)
        rate, tx = inst.point(nu)
        ptot = tx / inst.xi + inst.pc
        t_value = rate - q * ptot
        trace.append(DinkelbachState(q, t_value, it))
        if t_value <= eps * q * ptot:
            return nu, rate, ptot, tuple(trace), duals
        q = rate / ptot
    raise ConvergenceError("Dinkelbach loop hit its iteration cap", {"trace": trace})


def dinkelbach_solve(psi, sp: SystemParams, ch: ChannelState) -> tuple[Allocation, EEOutcome]:
    """Maximum-EE allocation for selection ``psi``.

    Raises :class:`InfeasibleError` when no allocation meets C1-C4.
    """
    inst = Instance.build(psi, sp, ch)
    nu, _, _, trace, _ = dinkelbach(inst)
    alloc = inst.allocation(nu)
    return alloc, outcome_for(alloc, sp, ch, len(trace), trace)


def outcome_for(alloc: Allocation, sp: SystemParams, ch: ChannelState, iters: int = 0, trace=()) -> EEOutcome:
    rate = total_rate(alloc, ch, sp)
    power = total_power(alloc, sp)
    return EEOutcome(
        ee=rate / power,
        rate_total=rate,
        power_total=power,
        rate_slack=rate - sp.r_sc_min,
        power_slack=sp.p_max_sc - alloc.transmit_power,
        dinkelbach_iters=iters,
        feasible=True,
        trace=tuple(trace),
    )


def max_rate_solve(psi, sp: SystemParams, ch: ChannelState) -> tuple[Allocation, EEOutcome]:
    """Rate-maximizing allocation for ``psi``: q = 0, lambda sized to spend P_max."""
    if not math.isfinite(sp.p_max_sc):
        raise ModelError("rate maximization needs a finite power budget")
    inst = Instance.build(psi, sp, ch)
    if inst.min_power() > inst.pmax:
        raise InfeasibleError("MU rate floors alone exceed the power budget", inst.psi)
    nu = inst.level_for_power(inst.pmax, inst.pmax / max(inst.rate_ref, 1.0))
    lam = 1.0 / (nu * LN2)
    alloc = closed_form_primal(0.0, DualState(lam, 0.0, np.zeros(2), np.zeros((2, 2))), psi, sp, ch)
    rate, _ = inst.point(alloc.water_level)
    if rate < sp.r_sc_min * (1.0 - FEAS_RTOL):
        raise InfeasibleError("SC rate floor unreachable within the power budget", inst.psi)
    return alloc, outcome_for(alloc, sp, ch)
