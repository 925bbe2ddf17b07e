"""Closed-form analysis of the AND map on the binary skew-symmetric channel.

Throughout, p is the 2x2 coupling p(u,v) and the map is X = U AND V, so the
fiber of X=0 is {(0,0), (0,1), (1,0)} and X=1 only at (1,1).  The channel is
the symmetric-skew BSSC with flip probability 1/2.  The scalar x stands for
p(0,1)/p(0,0).
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .envelope import weighted_rate_support
from .errors import InputError
from .probcore import bssc as bssc_channel

AND_MAP = np.array([[0, 0], [0, 1]])
COND1_TOL = 1e-9
BRACKET = (1e-9, 10.0)
BISECT_ITERS = 200


def _positive_2x2(p_uv) -> np.ndarray:
    p = np.asarray(p_uv, dtype=float)
    if p.shape != (2, 2):
        raise InputError(f"expected a 2x2 coupling, got shape {p.shape}")
    if np.any(p <= 0):
        raise InputError("coupling entries must be strictly positive")
    return p


def first_order_conditions(p_uv, alpha: float) -> tuple[float, float]:
    """Residuals of the two stationarity conditions.

    res1 = p11 p00 / 2 - p10 p01.
    res2 = (1 + 2r)^alpha / ((1 + x)^2 (1 + r)^(2(alpha-1))) - 1 with
    r = p11/p10 and x = p01/p00; when res1 = 0, r = 2x.
    """
    p = _positive_2x2(p_uv)
    res1 = 0.5 * p[1, 1] * p[0, 0] - p[1, 0] * p[0, 1]
    r = p[1, 1] / p[1, 0]
    x = p[0, 1] / p[0, 0]
    log_ratio = alpha * math.log1p(2 * r) - 2 * math.log1p(x) - 2 * (alpha - 1) * math.log1p(r)
    return float(res1), float(math.expm1(log_ratio))


def condition2(x: float, alpha: float) -> float:
    """Second stationarity condition after substituting r = 2x (zero at stationarity)."""
    return math.expm1(alpha * math.log1p(4 * x) - 2 * math.log1p(x)
                      - 2 * (alpha - 1) * math.log1p(2 * x))


def _log_form(x: float, alpha: float) -> float:
    # alpha log((1+4x)/(1+2x)^2) - log((1+x)^2/(1+2x)^2)
    la = math.log1p(4 * x) - 2 * math.log1p(2 * x)
    lb = 2 * math.log1p(x) - 2 * math.log1p(2 * x)
    return alpha * la - lb


def condition2_root(alpha: float, bracket=BRACKET, iters: int = BISECT_ITERS) -> float:
    """Positive x solving the second condition, by bisection on its log form."""
    lo, hi = bracket
    f_lo, f_hi = _log_form(lo, alpha), _log_form(hi, alpha)
    if f_lo * f_hi > 0:
        raise InputError(f"no sign change on [{lo}, {hi}] for alpha={alpha}")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = _log_form(mid, alpha)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def alpha_bound(x: float) -> float:
    """Largest alpha for which the AND-case Hessian can be negative semidefinite at x."""
    if x <= 0:
        raise InputError(f"x must be positive, got {x}")
    return (1 + 4 * x) / (4 * x * (1 + x))


def g(x: float) -> float:
    """(1+x)^2/(1+2x)^2 - ((1+4x)/(1+2x)^2)^alpha_bound(x); g(0) = 0 as a limit."""
    if x < 0 or x > 0.5:
        warnings.warn(f"g is studied on [0, 1/2]; evaluating at x={x}", RuntimeWarning, stacklevel=2)
    if x == 0:
        return 0.0
    lb = 2 * math.log1p(x) - 2 * math.log1p(2 * x)
    la = math.log1p(4 * x) - 2 * math.log1p(2 * x)
    # difference of two exponentials, written to keep precision near x = 0
    return math.exp(lb) * -math.expm1(alpha_bound(x) * la - lb)


def coupling_from_state(x: float, p1: float, p10: float | None = None) -> np.ndarray:
    """A coupling with p01/p00 = x, p11/p10 = 2x and P(X=1) = p11 = p1.

    p10 defaults to p1 / (2x); the rest of the X=0 fiber is split as 1 : x.
    """
    if p10 is None:
        p10 = p1 / (2 * x)
    rest = 1.0 - p1 - p10
    if rest <= 0:
        raise InputError("state does not fit in the simplex")
    p00 = rest / (1 + x)
    return np.array([[p00, x * p00], [p10, p1]])


def hessian_G(p_uv, alpha: float, *, check_condition1: bool = True) -> dict:
    """Coefficients of minus the Hessian in (I01, I10) for the alpha-weighted objective.

    The quadratic form is G00 I01^2 + 2 G01 I01 I10 + G11 I10^2 (nats), with
    I11 = 0 and I00 = -I01 - I10 forced by the fiber constraint.
    """
    p = _positive_2x2(p_uv)
    p00, p01, p10, p11 = p[0, 0], p[0, 1], p[1, 0], p[1, 1]
    res1 = 0.5 * p11 * p00 - p10 * p01
    if check_condition1 and abs(res1) > COND1_TOL:
        raise InputError(f"first stationarity condition off by {res1:.3g}")
    g00_raw = 1 / p01 + 1 / p00 - 1 / (p00 + p10) - 2 / (2 * p01 + p11)
    g00_simplified = (p00 + p01) * p10 / ((p00 + p10) * p01 * p00)
    g01 = 1 / p00
    g11 = ((alpha - 1) / (p00 + p01) + (alpha - 1) / (p10 + p11) + 1 / p10 + 1 / p00
           - alpha / (p00 + p01) - alpha / (2 * p10) - alpha / (2 * (p10 + 2 * p11)))
    return {"G00": g00_raw, "G00_simplified": g00_simplified, "G01": g01, "G11": g11}


def and_case_scan(alpha_grid, x_grid) -> dict:
    """For each alpha, solve the second condition and test it against alpha_bound.

    Also tabulates g on x_grid.  ``admissible_found`` is true only if some
    alpha admits an x meeting both conditions.
    """
    rows = []
    for a in alpha_grid:
        a = float(a)
        root = condition2_root(a)
        bound = alpha_bound(root)
        rows.append({"alpha": a, "root_x": root, "alpha_bound": bound, "admissible": a <= bound})
    g_rows = [(float(x), g(float(x))) for x in x_grid]
    interior = [v for x, v in g_rows if 0 < x < 0.5]
    return {
        "alpha_scan": rows,
        "g_scan": g_rows,
        "g_negative_on_interior": all(v < 0 for v in interior),
        "g_decreasing": all(b[1] < a[1] for a, b in zip(g_rows, g_rows[1:])),
        "admissible_found": any(r["admissible"] for r in rows),
    }


def g_scan(step: float = 1e-3) -> list:
    n = int(round(0.5 / step))
    return [(k * step, g(k * step)) for k in range(n + 1)]


def bssc_weighted_region(alpha: float, grid: int = 101):
    """max alpha R1 + R2 for the BSSC(1/2) and its Y/Z-swapped counterpart."""
    res, swapped = weighted_rate_support(bssc_channel(0.5), alpha, grid)
    return res.value, swapped.value
