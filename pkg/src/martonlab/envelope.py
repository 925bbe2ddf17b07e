"""Upper concave envelopes on the 1- and 2-simplex, and binary-input rate formulas.

Envelopes are computed grid-then-polish: the function is sampled on a grid,
the best mixture of grid atoms is found (upper hull in 1-D, a small LP over
the 2-simplex), and atom locations are then refined by a local search.  The
result is a lower bound on the true envelope, tight up to grid resolution.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linprog, minimize, minimize_scalar

from .errors import InputError, SizeError
from .probcore import LOG_ZERO, BroadcastChannel, as_simplex, io_mutual_information

GRID_1D = 2001
STEP_2D = 150


@dataclass(frozen=True)
class EnvelopeResult:
    value: float
    atoms: tuple  # ((weight, point), ...)
    base_value: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "base_value": self.base_value,
            "atoms": [{"weight": float(w), "point": np.asarray(q).tolist()} for w, q in self.atoms],
        }


def _eval_many(g, pts: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return np.asarray(g(pts), dtype=float).reshape(len(pts))
    return np.array([float(g(q)) for q in pts])


def upper_hull(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Indices of the upper concave hull of points sorted by increasing xs."""
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            # drop k if it lies on or below the chord j -> i
            cross = (xs[k] - xs[j]) * (ys[i] - ys[j]) - (ys[k] - ys[j]) * (xs[i] - xs[j])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def _hull_interp(xs, ys, hull, t):
    hx, hy = xs[hull], ys[hull]
    k = int(np.searchsorted(hx, t))
    if k < len(hx) and hx[k] == t:
        return float(hy[k]), [(1.0, t)]
    lo, hi = hx[k - 1], hx[k]
    w_hi = (t - lo) / (hi - lo)
    return float((1 - w_hi) * hy[k - 1] + w_hi * hy[k]), [(1.0 - w_hi, lo), (w_hi, hi)]


def _binary_point(t: float) -> np.ndarray:
    return np.array([1.0 - t, t])


def _envelope_1d(g, p, grid, polish, vectorized):
    t = float(p[1])
    xs = np.union1d(np.linspace(0.0, 1.0, grid), [t])
    pts = np.column_stack([1.0 - xs, xs])
    ys = _eval_many(g, pts, vectorized)
    base = float(ys[np.searchsorted(xs, t)])
    value, atoms = _hull_interp(xs, ys, upper_hull(xs, ys), t)

    if polish and len(atoms) == 2:
        gv = (lambda q: float(g(q[None, :])[0])) if vectorized else (lambda q: float(g(q)))

        def neg(z):
            lo, hi = min(max(z[0], 0.0), t), max(min(z[1], 1.0), t)
            if hi - lo < 1e-15:
                return -base
            w = (t - lo) / (hi - lo)
            return -((1 - w) * gv(_binary_point(lo)) + w * gv(_binary_point(hi)))

        z0 = np.array([atoms[0][1], atoms[1][1]])
        res = minimize(neg, z0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "initial_simplex":
                                [z0, z0 + [-0.5 / grid, 0], z0 + [0, 0.5 / grid]]})
        lo, hi = min(max(res.x[0], 0.0), t), max(min(res.x[1], 1.0), t)
        # accept only real improvements with atoms that are actually apart
        if -res.fun > value + 1e-13 and hi - lo > 1e-9:
            w = (t - lo) / (hi - lo)
            value, atoms = -float(res.fun), [(1.0 - w, lo), (w, hi)]
    atoms = tuple((float(w), _binary_point(q)) for w, q in atoms if w > 0)
    return EnvelopeResult(value, atoms, base)


def simplex_grid(step: int) -> np.ndarray:
    """All points of the 2-simplex with coordinates in multiples of 1/step."""
    i, j = np.meshgrid(np.arange(step + 1), np.arange(step + 1), indexing="ij")
    keep = i + j <= step
    i, j = i[keep], j[keep]
    return np.column_stack([i, j, step - i - j]) / step


def _envelope_2d(g, p, step, polish, vectorized):
    pts = np.vstack([simplex_grid(step), p])
    ys = _eval_many(g, pts, vectorized)
    base = float(ys[-1])
    # max ys.lam  s.t.  pts^T lam = p, lam >= 0 (the sum constraint is implied)
    res = linprog(-ys, A_eq=pts.T, b_eq=p, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"envelope LP failed: {res.message}")
    lam = res.x
    idx = np.flatnonzero(lam > 1e-12)
    w = lam[idx] / lam[idx].sum()
    Q = pts[idx].copy()
    value = float(w @ ys[idx])

    if polish and len(idx) > 1:
        gv = (lambda q: float(g(q[None, :])[0])) if vectorized else (lambda q: float(g(q)))
        k = len(idx)

        def place(z):
            # shift atoms 0..k-2 freely (in the plane sum = 1), last one balances the mean
            d = np.zeros((k, 3))
            d[:-1, :2] = z.reshape(k - 1, 2)
            d[:-1, 2] = -d[:-1, :2].sum(axis=1)
            d[-1] = -(w[:-1, None] * d[:-1]).sum(axis=0) / w[-1]
            return Q + d

        def neg(z):
            A = place(z)
            if np.any(A < -1e-15):
                return -value + 1.0 + float(-A[A < 0].sum())
            return -float(sum(wi * gv(np.clip(a, 0, None) / np.clip(a, 0, None).sum())
                              for wi, a in zip(w, A)))

        z0 = np.zeros(2 * (k - 1))
        simplex0 = np.vstack([z0] + [z0 + 0.5 / step * e for e in np.eye(len(z0))])
        r = minimize(neg, z0, method="Nelder-Mead",
                     options={"initial_simplex": simplex0, "xatol": 1e-10, "fatol": 1e-13,
                              "maxiter": 400 * len(z0)})
        if -r.fun > value:
            A = np.clip(place(r.x), 0, None)
            Q, value = A / A.sum(axis=1, keepdims=True), -float(r.fun)
    atoms = tuple((float(wi), q) for wi, q in zip(w, Q))
    return EnvelopeResult(value, atoms, base)


def concave_envelope_eval(g: Callable, p, *, grid: int | None = None, polish: bool = True,
                          vectorized: bool = False) -> EnvelopeResult:
    """Upper concave envelope of ``g`` at the point ``p`` of the 1- or 2-simplex.

    ``grid`` is the number of 1-D grid points (binary) or the 2-simplex
    step denominator (ternary).  With ``vectorized=True`` the function is
    called once on an (n, k) array of points and must return n values.
    """
    p = as_simplex(p, "p")
    if p.size == 2:
        return _envelope_1d(g, p, grid or GRID_1D, polish, vectorized)
    if p.size == 3:
        return _envelope_2d(g, p, grid or STEP_2D, polish, vectorized)
    if p.size == 1:
        v = float(g(p[None, :])[0]) if vectorized else float(g(p))
        return EnvelopeResult(v, ((1.0, p),), v)
    raise SizeError(f"envelopes are supported for 2 or 3 symbols, got {p.size}")


def envelope_trace(g: Callable, points: int = 201, *, grid: int = GRID_1D,
                   vectorized: bool = False) -> np.ndarray:
    """Rows (P(X=1), g, envelope) on an even grid of the binary simplex."""
    xs = np.linspace(0.0, 1.0, grid)
    ys = _eval_many(g, np.column_stack([1.0 - xs, xs]), vectorized)
    hull = upper_hull(xs, ys)
    ts = np.linspace(0.0, 1.0, points)
    env = np.interp(ts, xs[hull], ys[hull])
    gs = _eval_many(g, np.column_stack([1.0 - ts, ts]), vectorized)
    return np.column_stack([ts, gs, np.maximum(env, gs)])


def write_trace_csv(rows: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "g", "envelope"])
        for r in rows:
            w.writerow([f"{v:.9g}" for v in r])


# --- binary-input rate formulas -------------------------------------------------

def _row_entropy(m: np.ndarray) -> np.ndarray:
    safe = np.where(m > LOG_ZERO, m, 1.0)
    return -(safe * np.log2(safe)).sum(axis=-1)


class _BinaryLeg:
    """Output entropy H(out) and noise entropy H(out|X) as functions of a = P(X=1)."""

    def __init__(self, w: np.ndarray):
        self.w0, self.w1 = w[0], w[1]
        self.hrow = _row_entropy(w)

    def h_out(self, a):
        a = np.asarray(a, dtype=float)[..., None]
        return _row_entropy((1.0 - a) * self.w0 + a * self.w1)

    def h_noise(self, a):
        a = np.asarray(a, dtype=float)
        return (1.0 - a) * self.hrow[0] + a * self.hrow[1]

    def mi(self, a):
        return self.h_out(a) - self.h_noise(a)


def _rate_terms(y: _BinaryLeg, z: _BinaryLeg, t, a, b, alpha):
    # W=0 w.p. t with X|W=0 ~ Bern(a); W=1 with X|W=1 ~ Bern(b)
    m = t * a + (1.0 - t) * b
    hy_a, hy_b = y.h_out(a), y.h_out(b)
    hz_a, hz_b = z.h_out(a), z.h_out(b)
    iwy = y.h_out(m) - t * hy_a - (1.0 - t) * hy_b
    iwz = z.h_out(m) - t * hz_a - (1.0 - t) * hz_b
    ixy_w0 = hy_a - y.h_noise(a)
    ixz_w1 = hz_b - z.h_noise(b)
    return (np.minimum(iwy, iwz) + (alpha - 1.0) * iwy
            + alpha * t * ixy_w0 + (1.0 - t) * ixz_w1)


@dataclass(frozen=True)
class RateResult:
    value: float
    witness: np.ndarray  # p(w, x) as a 2x2 table
    params: tuple  # (t, a, b)

    def to_dict(self) -> dict:
        return {"value": self.value, "p_wx": self.witness.tolist(), "t_a_b": list(self.params)}


def _pwx(t, a, b) -> np.ndarray:
    return np.array([[t * (1 - a), t * a], [(1 - t) * (1 - b), (1 - t) * b]])


def _capacity_point(leg: _BinaryLeg) -> float:
    r = minimize_scalar(lambda a: -float(leg.mi(a)), bounds=(0.0, 1.0), method="bounded",
                        options={"xatol": 1e-12})
    return float(r.x)


def _weighted_rate(ch: BroadcastChannel, alpha: float, grid: int) -> RateResult:
    if ch.x_size != 2:
        raise SizeError(f"binary-input channel required, got {ch.x_size} inputs")
    y, z = _BinaryLeg(ch.y_given_x), _BinaryLeg(ch.z_given_x)
    s = np.linspace(0.0, 1.0, grid)
    A, B = np.meshgrid(s, s, indexing="ij")
    best = []
    for t in s:
        vals = _rate_terms(y, z, t, A, B, alpha)
        k = int(np.argmax(vals))
        best.append((float(vals.flat[k]), float(t), float(A.flat[k]), float(B.flat[k])))
    # degenerate W: all mass on one branch at that leg's capacity-achieving input
    ay, bz = _capacity_point(y), _capacity_point(z)
    best.append((float(_rate_terms(y, z, 1.0, ay, ay, alpha)), 1.0, ay, ay))
    best.append((float(_rate_terms(y, z, 0.0, bz, bz, alpha)), 0.0, bz, bz))
    best.sort(key=lambda r: -r[0])

    def neg(z3):
        t, a, b = np.clip(z3, 0.0, 1.0)
        return -float(_rate_terms(y, z, t, a, b, alpha))

    top = best[0]
    h = 1.0 / (grid - 1)
    for cand in best[:4]:
        z0 = np.array(cand[1:])
        # first simplex steps point into the cube
        steps = np.diag(np.where(z0 > 0.5, -h, h))
        r = minimize(neg, z0, method="Nelder-Mead",
                     options={"xatol": 1e-10, "fatol": 1e-13,
                              "initial_simplex": np.vstack([z0, z0 + steps])})
        if -r.fun > top[0]:
            t, a, b = np.clip(r.x, 0.0, 1.0)
            top = (-float(r.fun), float(t), float(a), float(b))
    value, t, a, b = top
    return RateResult(value, _pwx(t, a, b), (t, a, b))


def marton_sum_rate_binary(ch: BroadcastChannel, grid: int = 101) -> RateResult:
    """Best sum rate from Marton's region with a binary W (grid + local polish)."""
    return _weighted_rate(ch, 1.0, grid)


def weighted_rate_support(ch: BroadcastChannel, alpha: float, grid: int = 101):
    """max alpha R1 + R2 over Marton's region (binary W), and the same with Y and Z swapped.

    Returns (result, swapped_result).
    """
    if alpha < 1.0:
        raise InputError(f"alpha must be at least 1, got {alpha}")
    return _weighted_rate(ch, alpha, grid), _weighted_rate(ch.swapped(), alpha, grid)


def rate_objective(ch: BroadcastChannel, p_wx, alpha: float = 1.0) -> float:
    """The weighted Marton expression at an explicit p(w,x) with binary W and X."""
    p = np.asarray(p_wx, dtype=float)
    pw = p.sum(axis=1)
    if np.any(pw <= 0):
        t = float(pw[0])
        a = b = float(p[0, 1] / pw[0]) if t > 0 else float(p[1, 1] / pw[1])
    else:
        t, a, b = float(pw[0]), float(p[0, 1] / pw[0]), float(p[1, 1] / pw[1])
    return float(_rate_terms(_BinaryLeg(ch.y_given_x), _BinaryLeg(ch.z_given_x), t, a, b, alpha))


def binary_capacity(chan) -> tuple[float, float]:
    """(capacity, P(X=1) achieving it) of a binary-input channel."""
    leg = _BinaryLeg(np.asarray(chan, dtype=float))
    a = _capacity_point(leg)
    return float(leg.mi(a)), a


# --- composite functional of the factorization conjectures ---------------------

def _lower_bound_flag(out) -> tuple[float, bool]:
    if hasattr(out, "value"):
        return float(out.value), bool(getattr(out, "is_lower_bound", True))
    return float(out), False


def factor_rhs(ch: BroadcastChannel, p_x, lam: float, alpha: float, tmax_fn: Callable, *,
               grid: int | None = None, polish: bool = True):
    """Envelope of -(alpha - (1-lam)) H(Y) - (1-lam) H(Z) + T(X) at p_x.

    ``tmax_fn(p)`` returns T_alpha at input law p, either as a float (taken as
    exact) or as an object with ``value`` and ``is_lower_bound``.  Returns
    (EnvelopeResult, is_lower_bound).
    """
    if not 0.0 <= lam <= 1.0:
        raise InputError(f"lambda must lie in [0, 1], got {lam}")
    lam_bar = 1.0 - lam
    flags = []

    def comp(q):
        q = np.asarray(q, dtype=float)
        hy = _row_entropy(q @ ch.y_given_x)
        hz = _row_entropy(q @ ch.z_given_x)
        t, lb = _lower_bound_flag(tmax_fn(q))
        flags.append(lb)
        return float(-(alpha - lam_bar) * hy - lam_bar * hz + t)

    env = concave_envelope_eval(comp, p_x, grid=grid, polish=polish)
    return env, any(flags)


def max_mi(ch: BroadcastChannel, alpha: float = 1.0):
    """T-replacement max{alpha I(X;Y), I(X;Z)} as a function of the input law."""
    def fn(q):
        return max(alpha * io_mutual_information(q, ch.y_given_x),
                   io_mutual_information(q, ch.z_given_x))
    return fn
