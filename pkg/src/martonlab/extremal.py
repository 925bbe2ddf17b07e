"""Local optimality tests for a coupling (p(u,v), f) of the unweighted objective.

Perturbations are written additively, p(u,v) -> p(u,v) + eps I(u,v), and must
keep every fiber mass fixed (sum of I over f^{-1}(x) is zero).  The quadratic
form here is minus the second derivative of the objective in nats, so a local
maximum needs it to be non-negative on the fiber-preserving subspace.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigh, null_space

from .errors import DegeneracyError, InfeasibleError, InputError
from .probcore import BroadcastChannel
from .tmax import (CouplingWithMap, _check_channel, _mapped, check_marginal, gradient_batch,
                   objective_batch)

DENSE_TOL = 1e-9
STATIONARY_TOL = 1e-5
SLACK_TOL = 1e-9
EIG_TOL = 1e-8
# first-order derivative along a perturbation counted as nonzero above this
FIRST_ORDER_TOL = 1e-8
LN2 = math.log(2.0)


def _fiber_check(c: CouplingWithMap, p_x: np.ndarray):
    used = np.zeros(c.x_size, bool)
    used[np.unique(c.f)] = True
    empty = np.flatnonzero(~used & (p_x > 0))
    if empty.size:
        raise InfeasibleError(f"symbol {int(empty[0])} has positive mass but an empty fiber")


def stationarity_residuals(c: CouplingWithMap, ch: BroadcastChannel, p_x, alpha: float = 1.0) -> float:
    """Largest spread of dJ/dp(u,v) inside a fiber, over the support of p(u,v).

    At an interior stationary point every fiber has a single common partial
    derivative, so the residual is zero there.
    """
    _check_channel(c, ch)
    p_x = check_marginal(c, p_x)
    _fiber_check(c, p_x)
    g = gradient_batch(c.p_uv, *_mapped(ch, c.f), alpha)
    worst = 0.0
    for x in range(c.x_size):
        sel = (c.f == x) & (c.p_uv > 0)
        if sel.sum() > 1:
            worst = max(worst, float(g[sel].max() - g[sel].min()))
    return worst


def induced_joints(c: CouplingWithMap, ch: BroadcastChannel):
    """(p(u,y), p(v,z)) for the coupling."""
    wy, wz = _mapped(ch, c.f)
    puy = np.einsum("uv,uvy->uy", c.p_uv, wy)
    pvz = np.einsum("uv,uvz->vz", c.p_uv, wz)
    return puy, pvz


class DerivativeSlack(NamedTuple):
    holds: bool
    slack: float
    equality: bool


def _derivative_slack(chan_x: np.ndarray, p_ay: np.ndarray, p_1v: float, p_2v: float, p_1: float) -> float:
    if np.any(p_ay <= 0) or p_2v <= 0 or p_1 <= 0:
        raise DegeneracyError("first-derivative inequality needs strictly positive joints")
    return float((chan_x ** 2 / p_ay).sum() - p_1v / (p_2v * p_1))


def lemma2_check(c: CouplingWithMap, ch: BroadcastChannel, u1: int, u2: int, v: int,
                 tol: float = SLACK_TOL) -> DerivativeSlack:
    """First-derivative inequality for two rows u1, u2 that agree at column v.

    slack = sum_y q(y|x)^2 / p(u2,y) - p(u1,v) / (p(u2,v) p(u1)) with x = f(u1,v).
    """
    _check_channel(c, ch)
    if c.f[u1, v] != c.f[u2, v]:
        raise InputError(f"f({u1},{v}) = {c.f[u1, v]} differs from f({u2},{v}) = {c.f[u2, v]}")
    x = int(c.f[u1, v])
    puy, _ = induced_joints(c, ch)
    slack = _derivative_slack(ch.y_given_x[x], puy[u2], c.p_uv[u1, v], c.p_uv[u2, v], c.p_uv[u1].sum())
    return DerivativeSlack(slack >= -tol, slack, abs(slack) <= tol)


def lemma2_check_columns(c: CouplingWithMap, ch: BroadcastChannel, v1: int, v2: int, u: int,
                         tol: float = SLACK_TOL) -> DerivativeSlack:
    """Column version: columns v1, v2 agreeing at row u, measured through Z."""
    _check_channel(c, ch)
    if c.f[u, v1] != c.f[u, v2]:
        raise InputError(f"f({u},{v1}) = {c.f[u, v1]} differs from f({u},{v2}) = {c.f[u, v2]}")
    x = int(c.f[u, v1])
    _, pvz = induced_joints(c, ch)
    slack = _derivative_slack(ch.z_given_x[x], pvz[v2], c.p_uv[u, v1], c.p_uv[u, v2], c.p_uv[:, v1].sum())
    return DerivativeSlack(slack >= -tol, slack, abs(slack) <= tol)


def lemma2_all(c: CouplingWithMap, ch: BroadcastChannel) -> list:
    """Slacks for every ordered row pair and column pair sharing a symbol."""
    out = []
    U, V = c.p_uv.shape
    for v in range(V):
        for u1 in range(U):
            for u2 in range(U):
                if u1 != u2 and c.f[u1, v] == c.f[u2, v]:
                    out.append(("row", u1, u2, v, lemma2_check(c, ch, u1, u2, v).slack))
    for u in range(U):
        for v1 in range(V):
            for v2 in range(V):
                if v1 != v2 and c.f[u, v1] == c.f[u, v2]:
                    out.append(("col", v1, v2, u, lemma2_check_columns(c, ch, v1, v2, u).slack))
    return out


def and_pattern_detect(f) -> list:
    """All (x0, u0, v0) where row u0 and column v0 are constant at the same symbol."""
    f = np.asarray(f)
    found = []
    for u0 in range(f.shape[0]):
        if not np.all(f[u0] == f[u0, 0]):
            continue
        x0 = int(f[u0, 0])
        for v0 in range(f.shape[1]):
            if np.all(f[:, v0] == x0):
                found.append((x0, u0, v0))
    return found


def theorem2_perturbation(c: CouplingWithMap, u0: int, v0: int) -> np.ndarray:
    """Fiber-preserving direction that moves mass along row u0 against column v0."""
    p = c.p_uv
    if np.any(p[u0] <= 0) or np.any(p[:, v0] <= 0):
        raise DegeneracyError(f"row {u0} / column {v0} must be strictly positive")
    pu0, pv0 = p[u0].sum(), p[:, v0].sum()
    I = np.zeros_like(p)
    I[u0, :] = p[u0, :] * pv0
    I[:, v0] = -p[:, v0] * pu0
    I[u0, v0] = p[u0, v0] * (pv0 - pu0)
    return I


def fiber_sums(I: np.ndarray, f: np.ndarray, x_size: int) -> np.ndarray:
    return np.bincount(np.asarray(f).ravel(), weights=np.asarray(I).ravel(), minlength=x_size)


@dataclass(frozen=True, eq=False)
class HessianForm:
    q_matrix: np.ndarray  # over flattened (u, v), row-major
    t_u: np.ndarray  # [x1, x2, u]
    t_v: np.ndarray  # [x1, x2, v]
    constraint_basis: np.ndarray  # columns span {I : fiber sums vanish}

    def quad(self, I) -> float:
        i = np.asarray(I, dtype=float).ravel()
        return float(i @ self.q_matrix @ i)

    def min_eig_projected(self) -> float:
        B = self.constraint_basis
        if B.shape[1] == 0:
            return math.inf
        return float(eigh(B.T @ self.q_matrix @ B, eigvals_only=True)[0])


def _coefficients(chan: np.ndarray, joint: np.ndarray) -> np.ndarray:
    # T[x1, x2, a] = sum_o chan[x1, o] chan[x2, o] / joint[a, o]
    return np.einsum("io,jo,ao->ija", chan, chan, 1.0 / joint)


def _dense_or_raise(c: CouplingWithMap, ch: BroadcastChannel, tol: float = DENSE_TOL):
    puy, pvz = induced_joints(c, ch)
    for name, arr in (("p(u,v)", c.p_uv), ("p(u,y)", puy), ("p(v,z)", pvz)):
        if arr.min() < tol:
            raise DegeneracyError(f"{name} has an entry {arr.min():.3g} below {tol:g}")
    return puy, pvz


def hessian_form(c: CouplingWithMap, ch: BroadcastChannel, p_x) -> HessianForm:
    """Negative second derivative (nats) of the unweighted objective as a quadratic form in I."""
    _check_channel(c, ch)
    p_x = check_marginal(c, p_x)
    puy, pvz = _dense_or_raise(c, ch)
    U, V = c.p_uv.shape
    f = c.f
    t_u = _coefficients(ch.y_given_x, puy)
    t_v = _coefficients(ch.z_given_x, pvz)
    n = U * V
    Q = np.diag(1.0 / c.p_uv.ravel())
    idx = np.arange(n).reshape(U, V)
    for u in range(U):
        r = idx[u]
        Q[np.ix_(r, r)] -= t_u[f[u][:, None], f[u][None, :], u]
    for v in range(V):
        k = idx[:, v]
        Q[np.ix_(k, k)] -= t_v[f[:, v][:, None], f[:, v][None, :], v]
    Q = 0.5 * (Q + Q.T)
    A = np.zeros((c.x_size, n))
    A[f.ravel(), np.arange(n)] = 1.0
    return HessianForm(Q, t_u, t_v, null_space(A))


def quadratic_expectation_form(c: CouplingWithMap, ch: BroadcastChannel, I) -> float:
    """E(L^2) - E(E(L|U,Y)^2) - E(E(L|V,Z)^2) with L = I / p(u,v), by direct summation."""
    p = c.p_uv
    L = np.asarray(I, dtype=float) / p
    wy, wz = _mapped(ch, c.f)
    # full joint over (u, v, y, z); the two channel legs are taken as independent
    joint = p[:, :, None, None] * wy[:, :, :, None] * wz[:, :, None, :]
    Lb = L[:, :, None, None]
    e_l2 = float((joint * Lb ** 2).sum())

    def cond_sq(keep_u: bool):
        axes_sum = (1, 3) if keep_u else (0, 2)
        mass = joint.sum(axis=axes_sum)
        num = (joint * Lb).sum(axis=axes_sum)
        return float((num ** 2 / mass).sum())

    return e_l2 - cond_sq(True) - cond_sq(False)


def second_difference(c: CouplingWithMap, ch: BroadcastChannel, I, step: float = 1e-4,
                      alpha: float = 1.0) -> float:
    """Minus the central second difference of the objective (nats) along p + eps I.

    ``step`` is measured in the multiplicative direction L = I / p, scaled so
    that max |L| = 1.
    """
    wy, wz = _mapped(ch, c.f)
    I = np.asarray(I, dtype=float)
    h = step / np.abs(I / c.p_uv).max()
    vals = [objective_batch(c.p_uv + s * h * I, wy, wz, alpha) for s in (-1.0, 0.0, 1.0)]
    return -LN2 * (vals[0] - 2.0 * vals[1] + vals[2]) / h ** 2


def eq5_sides(c: CouplingWithMap, ch: BroadcastChannel, p_x, u0: int, v0: int):
    """Both sides of the reduced second-order condition for the row/column perturbation.

    Returns (lhs, rhs, I); the quadratic form at I equals lhs - rhs.
    """
    hf = hessian_form(c, ch, p_x)
    x0 = int(c.f[u0, v0])
    I = theorem2_perturbation(c, u0, v0)
    p = c.p_uv
    cross = np.zeros_like(p, dtype=bool)
    cross[u0, :] = True
    cross[:, v0] = True
    lhs = float((I[cross] ** 2 / p[cross]).sum())
    U, V = p.shape
    rhs = sum(hf.t_u[x0, x0, u] * I[u, v0] ** 2 for u in range(U) if u != u0)
    rhs += sum(hf.t_v[x0, x0, v] * I[u0, v] ** 2 for v in range(V) if v != v0)
    rhs += hf.t_u[x0, x0, u0] * I[u0].sum() ** 2 + hf.t_v[x0, x0, v0] * I[:, v0].sum() ** 2
    return lhs, float(rhs), I


@dataclass
class CertificateReport:
    stationarity_residual: float
    lemma2_slacks: list
    and_patterns: list
    min_eig_projected: float
    verdict: str  # certified_local_max | refuted | inconclusive
    reasons: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def num(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")

        return {
            "verdict": self.verdict,
            "stationarity_residual": num(self.stationarity_residual),
            "min_eig_projected": num(self.min_eig_projected),
            "and_patterns": [list(t) for t in self.and_patterns],
            "lemma2_slacks": [list(s) for s in self.lemma2_slacks],
            "reasons": list(self.reasons),
            "witnesses": self.witnesses,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def certify_local_max(c: CouplingWithMap, ch: BroadcastChannel, p_x) -> CertificateReport:
    """Collect first- and second-order evidence about whether c is a local maximum.

    refuted needs a concrete witness: a fiber-preserving direction with nonzero
    slope or negative curvature, or a violated first-derivative inequality.
    """
    _check_channel(c, ch)
    p_x = check_marginal(c, p_x)
    _fiber_check(c, p_x)
    patterns = and_pattern_detect(c.f)
    try:
        puy, pvz = _dense_or_raise(c, ch)
    except DegeneracyError as exc:
        return CertificateReport(math.nan, [], patterns, math.nan, "inconclusive", [str(exc)])

    residual = stationarity_residuals(c, ch, p_x)
    slacks = lemma2_all(c, ch)
    hf = hessian_form(c, ch, p_x)
    min_eig = hf.min_eig_projected()
    grad = gradient_batch(c.p_uv, *_mapped(ch, c.f), 1.0)
    reasons, witnesses = [], []

    for x0, u0, v0 in patterns:
        I = theorem2_perturbation(c, u0, v0)
        slope = float((grad * I).sum())
        curv = hf.quad(I)
        scale = float((I ** 2 / c.p_uv).sum())
        w = {"kind": "row_column_perturbation", "x0": x0, "u0": u0, "v0": v0,
             "direction": I.tolist(), "slope_bits": slope, "quad_form": curv}
        if abs(slope) > FIRST_ORDER_TOL:
            reasons.append(f"nonzero slope {slope:.3g} along the row {u0} / column {v0} perturbation")
            witnesses.append(w)
        elif curv < -1e-9 * scale:
            reasons.append(f"negative curvature {curv:.3g} along the row {u0} / column {v0} perturbation")
            witnesses.append(w)
    if residual >= STATIONARY_TOL:
        reasons.append(f"stationarity residual {residual:.3g} >= {STATIONARY_TOL:g}")
        witnesses.append({"kind": "stationarity", "residual": residual})
    bad = [s for s in slacks if s[-1] < -SLACK_TOL]
    if bad:
        reasons.append(f"{len(bad)} first-derivative inequalities violated")
        witnesses.append({"kind": "first_derivative", "violations": [list(s) for s in bad]})
    if min_eig < -EIG_TOL:
        B = hf.constraint_basis
        vals, vecs = eigh(B.T @ hf.q_matrix @ B)
        direction = (B @ vecs[:, 0]).reshape(c.p_uv.shape)
        reasons.append(f"negative curvature {min_eig:.3g} on the fiber-preserving subspace")
        witnesses.append({"kind": "eigen", "min_eig": min_eig, "direction": direction.tolist()})
    verdict = "refuted" if reasons else "certified_local_max"
    return CertificateReport(residual, slacks, patterns, min_eig, verdict, reasons, witnesses)


def _merge_rows(p: np.ndarray, f: np.ndarray):
    for i in range(f.shape[0]):
        for j in range(i + 1, f.shape[0]):
            if np.array_equal(f[i], f[j]):
                p = p.copy()
                p[i] += p[j]
                return np.delete(p, j, axis=0), np.delete(f, j, axis=0), True
    return p, f, False


def reduce_map(c: CouplingWithMap) -> CouplingWithMap:
    """Merge duplicate rows and columns of f, summing the coupling mass they carry."""
    p, f = c.p_uv.copy(), c.f.copy()
    changed = True
    while changed:
        p, f, r = _merge_rows(p, f)
        pt, ft, cc = _merge_rows(p.T, f.T)
        p, f = pt.T, ft.T
        changed = r or cc
    return CouplingWithMap(p, f, c.x_size)
