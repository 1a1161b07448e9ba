import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import sptrade.allocator as allocator
from conftest import random_instance, scenario
from oracles import ee_psi_empty_single_su, mu_power
from sptrade.allocator import (
    DINKELBACH_EPS,
    DualState,
    Instance,
    closed_form_primal,
    dinkelbach,
    dinkelbach_solve,
    dual_subgradient,
    max_rate_solve,
    solve_duals,
)
from sptrade.model import (
    ChannelState,
    ConvergenceError,
    InfeasibleError,
    ModelError,
    SystemParams,
    mu_rate,
    total_power,
    total_rate,
)

ZERO = np.zeros(2)
ZERO2 = np.zeros((2, 2))


def duals(lam, mu):
    return DualState(lam, mu, ZERO, ZERO2)


def check_invariants(alloc, sp, ch, tol=1e-9):
    """Common water level over active bands, C2/C3 with equality, C1/C4 feasible."""
    nu = alloc.water_level
    n0 = sp.noise_density
    for n in range(sp.n_su):
        if alloc.p_su_own[n] > 0:
            level = alloc.p_su_own[n] / sp.su_bandwidths[n] + n0 / ch.g_su_own[n]
            assert level == pytest.approx(nu, rel=tol)
    for k in alloc.selected:
        b = alloc.b_traded[k]
        assert alloc.w_mu[k] + b == pytest.approx(sp.mu_bandwidths[k], rel=1e-12)
        r = mu_rate(alloc.w_mu[k], alloc.q_mu[k], ch.h_mu[k], n0)
        assert r == pytest.approx(sp.mu_rate_floors[k], rel=1e-6)
        if alloc.p_su_traded[k] > 0:
            level = alloc.p_su_traded[k] / b + n0 / ch.g_cross[k, alloc.best_su[k]]
            assert level == pytest.approx(nu, rel=tol)
    scale = sp.p_max_sc if math.isfinite(sp.p_max_sc) else 1.0
    assert sp.p_max_sc - alloc.transmit_power >= -1e-6 * scale
    assert total_rate(alloc, ch, sp) - sp.r_sc_min >= -1e-6 * max(sp.r_sc_min, 1.0)


def test_large_q_gives_zero_power(sp55):
    ch = scenario(1)
    a = closed_form_primal(1e30, duals(0.0, 0.0), {0, 1}, sp55, ch)
    assert np.all(a.p_su_own == 0) and np.all(a.p_su_traded == 0)


def test_nonpositive_c_keeps_whole_band(tiny):
    sp, ch = tiny
    inst = Instance.build({0}, sp, ch)
    floor = sp.noise_density / ch.g_cross[0, 0]
    assert inst.split(floor * 0.5, 240e3, 700e3, ch.h_mu[0], floor) == 240e3
    a = inst.allocation(floor * 0.5)
    assert a.w_mu[0] == 240e3 and a.b_traded[0] == 0 and a.p_su_traded[0] == 0


def test_closed_form_rejects_unbounded(tiny):
    sp, ch = tiny
    with pytest.raises(ModelError):
        closed_form_primal(0.0, duals(0.0, 0.0), (), sp, ch)
    with pytest.raises(ModelError):
        closed_form_primal(-1.0, duals(0.0, 0.0), (), sp, ch)


def test_dual_subgradient(tiny):
    sp, ch = tiny
    inst = Instance.build((), sp, ch)
    nu = inst.level_for_power(sp.p_max_sc, 1e-10)
    a = inst.allocation(nu)
    g = dual_subgradient(a, sp, ch)
    assert abs(g[0]) <= 1e-9 * sp.p_max_sc
    zero = inst.allocation(0.0)
    assert dual_subgradient(zero, sp, ch)[1] == -sp.r_sc_min
    assert g[1] == pytest.approx(total_rate(a, ch, sp) - sp.r_sc_min)
    assert sp.p_max_sc - (total_power(a, sp) - sp.p_circuit) * sp.pa_efficiency == pytest.approx(g[0], abs=1e-12)


def test_unconstrained_duals_are_zero(tiny):
    sp, ch = tiny
    sp = sp.replace(p_max_sc=1e9, r_sc_min=0.0)
    q = 1e6
    d, a = solve_duals(q, (), sp, ch)
    assert d.lam == 0 and d.mu == 0
    nu = sp.pa_efficiency / (q * math.log(2))
    expected = 180e3 * max(nu - sp.noise_density / ch.g_su_own[0], 0)
    assert a.p_su_own[0] == pytest.approx(expected, rel=1e-12)


def test_binding_budget(sp55):
    ch = scenario(4)
    sp = sp55.replace(p_max_sc=1e-3)
    a, o = dinkelbach_solve((), sp, ch)
    assert a.transmit_power == pytest.approx(sp.p_max_sc, rel=1e-4)
    d, _ = solve_duals(o.ee, (), sp, ch)
    assert d.lam > 0 and d.mu == 0


def test_binding_rate_floor(sp55):
    ch = scenario(4)
    free = dinkelbach_solve((), sp55.replace(r_sc_min=0.0), ch)[1]
    top = max_rate_solve((), sp55, ch)[1]
    sp = sp55.replace(r_sc_min=0.5 * (free.rate_total + top.rate_total))
    a, o = dinkelbach_solve((), sp, ch)
    assert o.rate_total == pytest.approx(sp.r_sc_min, rel=1e-6)
    check_invariants(a, sp, ch)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-13, 1e-7), st.floats(0.01, 5.0), st.floats(0.1, 1.0))
def test_single_su_matches_scalar_oracle(g, pc, xi):
    sp = SystemParams.defaults(1, 1, p_max_sc=math.inf, r_sc_min=0.0, p_circuit=pc, pa_efficiency=xi)
    ch = ChannelState([1e-10], [g], [[1e-10]])
    _, o = dinkelbach_solve((), sp, ch)
    best, _ = ee_psi_empty_single_su(180e3, g, sp.noise_density, xi, pc)
    assert o.ee == pytest.approx(best, rel=1e-3)
    assert o.ee >= best * (1 - 1e-9)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_solution_invariants(seed):
    rng = np.random.default_rng(seed)
    sp, ch = random_instance(rng, 3, 3)
    psi = {k for k in range(3) if rng.random() < 0.6}
    try:
        a, o = dinkelbach_solve(psi, sp, ch)
    except InfeasibleError:
        return
    check_invariants(a, sp, ch)
    qs = [s.q for s in o.trace]
    assert all(b >= a_ for a_, b in zip(qs, qs[1:]))
    ts = [s.t_value for s in o.trace]
    assert all(b <= a_ for a_, b in zip(ts, ts[1:]))
    assert o.ee == pytest.approx(total_rate(a, ch, sp) / total_power(a, sp), rel=1e-12)
    last = o.trace[-1]
    assert o.ee == pytest.approx(last.q, rel=1e-6)
    assert last.t_value <= DINKELBACH_EPS * last.q * o.power_total


def test_bandwidth_trend_in_rate_and_gain(tiny):
    sp, ch = tiny
    inst = Instance.build({0}, sp, ch)
    floor = sp.noise_density / ch.g_cross[0, 0]
    for nu in floor * np.array([1.5, 10.0, 1e3, 1e6]):
        ws = [inst.split(nu, 240e3, R, 1e-9, floor) for R in np.linspace(1e3, 2e6, 50)]
        assert all(b >= a for a, b in zip(ws, ws[1:]))
        ws = [inst.split(nu, 240e3, 700e3, h, floor) for h in np.geomspace(1e-13, 1e-6, 50)]
        assert all(b <= a for a, b in zip(ws, ws[1:]))


def test_split_is_stationary(tiny):
    sp, ch = tiny
    inst = Instance.build({0}, sp, ch)
    floor = sp.noise_density / ch.g_cross[0, 0]
    nu, W, R, h = floor * 500, 240e3, 700e3, ch.h_mu[0]
    w = inst.split(nu, W, R, h, floor)
    assert 0 < w < W

    # Lagrangian in w (per unit of 1 / ln2 scale) at fixed level: b rate - b density / nu - q(w) / nu
    def lag(w):
        b = W - w
        return b * (math.log(nu / floor) - (nu - floor) / nu) - mu_power(w, R, h, sp.noise_density) / nu

    ws = np.linspace(w * 0.9, min(w * 1.1, W), 2001)
    assert ws[np.argmax([lag(x) for x in ws])] == pytest.approx(w, rel=1e-3)


def test_infeasible_selection(sp55):
    ch = scenario(2)
    sp = sp55.replace(mu_rate_floors=np.full(5, 60e6))
    with pytest.raises(InfeasibleError):
        dinkelbach_solve({0}, sp, ch)
    with pytest.raises(InfeasibleError):
        dinkelbach_solve((), sp55.replace(r_sc_min=1e9), ch)


def test_ellipsoid_cap_raises(sp55, monkeypatch):
    ch = scenario(4)
    monkeypatch.setattr(allocator, "ELLIPSOID_MAX_ITER", 1)
    with pytest.raises(ConvergenceError) as err:
        dinkelbach_solve((), sp55.replace(p_max_sc=1e-3), ch)
    assert "q" in err.value.diagnostics


def test_dinkelbach_cap_raises(tiny, monkeypatch):
    sp, ch = tiny
    monkeypatch.setattr(allocator, "DINKELBACH_MAX_ITER", 1)
    with pytest.raises(ConvergenceError) as err:
        dinkelbach(Instance.build((), sp, ch))
    assert len(err.value.diagnostics["trace"]) == 1


def test_max_rate_spends_budget(sp55):
    ch = scenario(3)
    a, o = max_rate_solve({0, 1}, sp55, ch)
    assert a.transmit_power == pytest.approx(sp55.p_max_sc, rel=1e-9)
    ee_best = dinkelbach_solve({0, 1}, sp55, ch)[1]
    assert o.rate_total >= ee_best.rate_total * (1 - 1e-9)
    assert o.ee <= ee_best.ee * (1 + 1e-9)
    check_invariants(a, sp55, ch)
