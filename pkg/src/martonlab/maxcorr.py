"""Maximal correlation and the coefficients bounding I(U;Y) by I(X;Y)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InputError, SizeError
from .probcore import BroadcastChannel, _h, _mi2, as_joint, as_simplex, as_stochastic, io_joint

POWER_SWEEPS = 10_000
POWER_TOL = 1e-12
ACE_SWEEPS = 100_000


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    c_prime: float
    witness_l: np.ndarray  # function of X
    witness_t: np.ndarray  # function of U
    c_prime_power: float
    method_gap: float

    def to_dict(self) -> dict:
        return {"c_prime": self.c_prime, "c_prime_power": self.c_prime_power,
                "method_gap": self.method_gap, "witness_l": self.witness_l.tolist(),
                "witness_t": self.witness_t.tolist()}


def _standardize(f: np.ndarray, w: np.ndarray) -> np.ndarray | None:
    f = f - w @ f
    var = w @ f ** 2
    if var < 1e-300:
        return None
    return f / math.sqrt(var)


def _start_vector(n: int) -> np.ndarray:
    # fixed, generic starting direction
    return np.cos(np.arange(1, n + 1) * 1.2345)


def _power_second(B: np.ndarray, top: np.ndarray) -> tuple[float, np.ndarray]:
    """Second eigenpair of B^T B after removing its top direction ``top``."""
    M = B.T @ B - np.outer(top, top)
    v = _start_vector(M.shape[0])
    v -= (top @ v) * top
    v /= np.linalg.norm(v)
    lam = float(v @ M @ v)
    for _ in range(POWER_SWEEPS):
        w = M @ v
        w -= (top @ w) * top
        nrm = np.linalg.norm(w)
        if nrm < 1e-300:
            return 0.0, v
        w /= nrm
        new = float(w @ M @ w)
        done = abs(new - lam) < POWER_TOL and np.linalg.norm(w - v) < 1e-8
        v, lam = w, new
        if done:
            break
    return max(lam, 0.0), v


def _ace(p: np.ndarray, pu: np.ndarray, px: np.ndarray):
    """Alternating conditional expectations: L(X) -> T(U) = E[L|U] -> L = E[T|X]."""
    L = _standardize(_start_vector(px.size), px)
    T = None
    for _ in range(ACE_SWEEPS):
        T = _standardize(p @ L / pu, pu)
        if T is None:
            return 0.0, L, _standardize(_start_vector(pu.size), pu)
        newL = _standardize(T @ p / px, px)
        if newL is None:
            return 0.0, L, T
        step = np.abs(newL - L).max()
        L = newL
        if step < 1e-11:
            break
    T = _standardize(p @ L / pu, pu)
    return float(T @ p @ L) ** 2, L, T


def maximal_correlation_sq(joint) -> CorrelationResult:
    """Squared maximal correlation of (U, X) from a joint table with axes (u, x)."""
    p = as_joint(joint, "joint")
    if p.ndim != 2:
        raise InputError(f"expected a 2-axis table, got {p.ndim} axes")
    pu, px = p.sum(axis=1), p.sum(axis=0)
    if np.any(pu <= 0) or np.any(px <= 0):
        raise InputError("marginals must be strictly positive")
    if min(p.shape) < 2:
        raise InputError("both alphabets need at least two symbols")
    B = p / np.sqrt(np.outer(pu, px))
    c_power, _ = _power_second(B, np.sqrt(px))
    c_ace, L, T = _ace(p, pu, px)
    return CorrelationResult(c_ace, L, T, c_power, abs(c_ace - c_power))


def _lower_hull_gap(phi, t: float, grid: int) -> float:
    """max left chord slope minus min right chord slope of phi at t (<= 0 means supported)."""
    xs = np.linspace(0.0, 1.0, grid)
    f0 = phi(t)
    left, right = xs[xs < t - 1e-12], xs[xs > t + 1e-12]

    def slope(q):
        return (phi(q) - f0) / (q - t)

    sl = np.array([slope(q) for q in left])
    sr = np.array([slope(q) for q in right])
    h = 1.0 / (grid - 1)
    best_l, best_r = float(sl.max()), float(sr.min())
    # refine the extreme chords between neighbouring grid points
    q = left[int(np.argmax(sl))]
    # stay half a cell away from t, where chord slopes lose precision
    r = minimize_scalar(lambda s: -slope(s), bounds=(max(q - h, 0.0), min(q + h, t - h / 2)),
                        method="bounded", options={"xatol": 1e-12})
    best_l = max(best_l, -float(r.fun))
    q = right[int(np.argmin(sr))]
    r = minimize_scalar(slope, bounds=(max(q - h, t + h / 2), min(q + h, 1.0)),
                        method="bounded", options={"xatol": 1e-12})
    best_r = min(best_r, float(r.fun))
    return best_l - best_r


def c_envelope_binary(p_u_given_x, p_x, *, grid: int = 2001, iters: int = 60,
                      tol: float = 1e-11) -> float:
    """Least c in [0, 1] with q -> H(U) - c H(X) equal to its lower convex envelope at p_x.

    p(u|x) is held fixed while the input law q varies over the binary simplex.
    """
    w = as_stochastic(p_u_given_x, "p_u_given_x")
    p_x = as_simplex(p_x, "p_x")
    if w.shape[0] != 2 or p_x.size != 2:
        raise SizeError("binary X required")
    t = float(p_x[1])
    if not 0.0 < t < 1.0:
        raise InputError("p_x must lie in the interior of the simplex")

    def matches(c):
        def phi(q):
            return _h(np.array([1.0 - q, q]) @ w) - c * _h(np.array([1.0 - q, q]))
        return _lower_hull_gap(phi, t, grid) <= tol

    if matches(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if matches(mid):
            hi = mid
        else:
            lo = mid
    return hi


def xor_conditionals(p_uv) -> tuple[float, float]:
    """(a_xor, b_xor) = (P(U=0|X=0), P(U=0|X=1)) for X = U xor V."""
    p = np.asarray(p_uv, dtype=float)
    if p.shape != (2, 2):
        raise InputError(f"expected a 2x2 coupling, got shape {p.shape}")
    d0, d1 = p[0, 0] + p[1, 1], p[0, 1] + p[1, 0]
    if d0 <= 0 or d1 <= 0:
        raise InputError("both values of X need positive probability")
    return p[0, 0] / d0, p[0, 1] / d1


def xor_bounds(p_uv) -> tuple[float, float]:
    """Upper bounds on the coefficients of U and of V when X = U xor V."""
    a, b = xor_conditionals(p_uv)
    return abs(a - b), abs(a + b - 1.0)


def convexity_second_derivative(a: float, b: float, x: float) -> float:
    """Second derivative in x of h(a x + b (1-x)) - |a-b| h(x), h the binary entropy (nats)."""
    if not 0.0 < x < 1.0:
        raise InputError(f"x must lie in (0, 1), got {x}")
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise InputError("a and b must lie in [0, 1]")
    if a == b:
        return 0.0
    m = a * x + b * (1.0 - x)
    return -(a - b) ** 2 / (m * (1.0 - m)) + abs(a - b) / (x * (1.0 - x))


class XorCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    chain: float  # bound_u I(X;Y) + bound_v I(X;Z)
    chain_holds: bool


def xor_mi_inequality_check(p_uv, ch: BroadcastChannel, tol: float = 1e-9) -> XorCheck:
    """I(U;Y) + I(V;Z) against max(I(X;Y), I(X;Z)) for X = U xor V."""
    p = as_joint(p_uv, "p_uv")
    if p.shape != (2, 2) or ch.x_size != 2:
        raise InputError("binary U, V and a binary-input channel are required")
    xor = np.array([[0, 1], [1, 0]])
    px = np.bincount(xor.ravel(), weights=p.ravel(), minlength=2)
    puy = np.einsum("uv,uvy->uy", p, ch.y_given_x[xor])
    pvz = np.einsum("uv,uvz->vz", p, ch.z_given_x[xor])
    lhs = _mi2(puy) + _mi2(pvz)
    ixy, ixz = _mi2(io_joint(px, ch.y_given_x)), _mi2(io_joint(px, ch.z_given_x))
    rhs = max(ixy, ixz)
    bu, bv = xor_bounds(p)
    chain = bu * ixy + bv * ixz
    return XorCheck(lhs, rhs, lhs <= rhs + tol, chain, lhs <= chain + tol and chain <= rhs + tol)
