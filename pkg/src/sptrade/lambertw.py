"""Principal-branch Lambert W for real arguments.

The bandwidth split between a served macro user and its best small-cell user
is the root of ``x = w * exp(w)``. Only ``W_0`` on ``[-1/e, inf)`` is needed.
"""

from __future__ import annotations

import math

__all__ = ["BRANCH_POINT", "lambert_w0", "LambertDomainError", "LambertConvergenceError"]

BRANCH_POINT = -math.exp(-1.0)

# Arguments within this distance below -1/e are treated as the branch point;
# ``w * exp(w)`` evaluated near w = -1 can round below the float of -1/e.
_BRANCH_SLACK = 4.0 * 2.220446049250313e-16

_MAX_ITER = 100


class LambertDomainError(ValueError):
    """Argument lies below the branch point -1/e."""


class LambertConvergenceError(ArithmeticError):
    """Halley iteration failed to converge within the iteration cap."""


def _initial_guess(x: float) -> float:
    if x < -0.25:
        # series about the branch point in p = sqrt(2(ex + 1))
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    if x <= math.e:
        return math.log1p(x) * (1.0 - math.log1p(math.log1p(x)) / (2.0 + math.log1p(x)))
    l1 = math.log(x)
    l2 = math.log(l1)
    return l1 - l2 + l2 / l1


def lambert_w0(x: float) -> float:
    """Return ``w >= -1`` with ``w * exp(w) == x``.

    Safeguarded Halley iteration inside a bracket ``[lo, hi]`` that always
    contains the root; steps leaving the bracket fall back to bisection.
    Raises :class:`LambertDomainError` for ``x < -1/e``.
    """
    x = float(x)
    if math.isnan(x):
        raise LambertDomainError("lambert_w0 of NaN")
    if x < BRANCH_POINT:
        if x >= BRANCH_POINT - _BRANCH_SLACK:
            return -1.0
        raise LambertDomainError(f"lambert_w0 argument {x!r} is below -1/e")
    if x == 0.0:
        return 0.0
    if x == BRANCH_POINT:
        return -1.0
    if math.isinf(x):
        return math.inf

    lo, hi = -1.0, max(math.log1p(x), 0.0)
    w = min(max(_initial_guess(x), lo), hi)
    tol = 1e-12 * max(1.0, abs(x))
    for _ in range(_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 4e-16 * (abs(x) + abs(w * ew)):
            return w
        if f < 0.0:
            lo = max(lo, w)
        else:
            hi = min(hi, w)
        wp1 = w + 1.0
        if wp1 <= 0.0:
            w_new = 0.5 * (lo + hi)
        else:
            denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
            w_new = w - f / denom if denom != 0.0 else 0.5 * (lo + hi)
            if not lo <= w_new <= hi:
                w_new = 0.5 * (lo + hi)
        step = abs(w_new - w)
        w = w_new
        if step <= 4e-16 * (1.0 + abs(w)) or hi - lo <= 4e-16 * (1.0 + abs(w)):
            if abs(w * math.exp(w) - x) <= tol:
                return w
            # converged in w but residual is loose; polish once with Newton
            ew = math.exp(w)
            if w + 1.0 > 0.0:
                w -= (w * ew - x) / (ew * (w + 1.0))
            return w
    raise LambertConvergenceError(f"lambert_w0 did not converge for x={x!r}")
