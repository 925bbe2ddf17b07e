"""Numerical checks of the factorization inequalities on two-letter product channels.

The two-letter side uses a lower bound on T (map sampling plus ascent), so a
check can only ever *falsify* an inequality: a verdict of
``holds_within_tolerance`` is evidence, not proof.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize

from .envelope import GRID_1D, _row_entropy, concave_envelope_eval, simplex_grid
from .errors import InputError, SizeError
from .probcore import (BroadcastChannel, as_joint, conditional_mutual_information, erasure_wrap,
                       product_channel, random_channel, random_stochastic)
from .tmax import TmaxResult, product_map, tmax_eval

SCREEN_TOL = 1e-6
CONFIRM_TOL = 1e-8
# two-letter T: restarts / iterations used while screening
SCREEN_RESTARTS = 8
SCREEN_ITERS = 150


@dataclass(frozen=True)
class WeightedObjective:
    alpha: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if self.alpha < 1.0:
            raise InputError(f"alpha must be at least 1, got {self.alpha}")
        if not 0.0 <= self.lam <= 1.0:
            raise InputError(f"lambda must lie in [0, 1], got {self.lam}")

    @property
    def lam_bar(self) -> float:
        return 1.0 - self.lam

    @property
    def y_weight(self) -> float:
        return self.alpha - self.lam_bar


@dataclass
class ConjectureVerdict:
    lhs: float
    rhs: float
    slack: float
    lhs_is_lower_bound: bool
    rhs_is_lower_bound: bool
    instance: dict
    verdict: str  # holds_within_tolerance | violation_candidate | inconclusive
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _channel_dict(ch: BroadcastChannel) -> dict:
    return {"y_given_x": ch.y_given_x.tolist(), "z_given_x": ch.z_given_x.tolist()}


def _channel_from(d: dict) -> BroadcastChannel:
    return BroadcastChannel(d["y_given_x"], d["z_given_x"])


def _binary_only(*chs):
    for ch in chs:
        if ch.x_size != 2:
            raise SizeError(f"binary-input components required, got {ch.x_size} inputs")


def _h_rows(q: np.ndarray, w: np.ndarray) -> np.ndarray:
    return _row_entropy(q @ w)


def _mi_rows(q: np.ndarray, w: np.ndarray) -> np.ndarray:
    return _h_rows(q, w) - q @ _row_entropy(w)


def max_mi_rows(ch: BroadcastChannel, alpha: float, q: np.ndarray) -> np.ndarray:
    """max{alpha I(X;Y), I(X;Z)} for each row of q."""
    return np.maximum(alpha * _mi_rows(q, ch.y_given_x), _mi_rows(q, ch.z_given_x))


class LetterT:
    """T_alpha of one binary-input letter as a function of its input law.

    For alpha = 1 the value max{I(X;Y), I(X;Z)} is exact.  Otherwise the
    search in tmax is used (a lower bound), memoised per input law.
    """

    def __init__(self, ch: BroadcastChannel, alpha: float, restarts: int = 8, seed: int = 0):
        self.ch, self.alpha, self.restarts, self.seed = ch, alpha, restarts, seed
        self.exact = alpha == 1.0 and ch.x_size == 2
        self._cache: dict = {}

    def rows(self, q: np.ndarray) -> np.ndarray:
        if self.exact:
            return max_mi_rows(self.ch, 1.0, q)
        out = np.empty(len(q))
        for i, r in enumerate(q):
            key = tuple(np.round(r, 15))
            if key not in self._cache:
                self._cache[key] = tmax_eval(self.ch, r, self.alpha, restarts=self.restarts,
                                             seed=self.seed).value
            out[i] = self._cache[key]
        return out


def letter_envelope(ch: BroadcastChannel, p_x, w: WeightedObjective, letter_t: LetterT, *,
                    grid: int | None = None, use_envelope: bool = True) -> float:
    """Concave envelope of -(alpha - lam_bar) H(Y) - lam_bar H(Z) + T_alpha(X) at p_x."""
    def fn(q):
        q = np.atleast_2d(q)
        return (-w.y_weight * _h_rows(q, ch.y_given_x) - w.lam_bar * _h_rows(q, ch.z_given_x)
                + letter_t.rows(q))

    if not use_envelope:
        return float(fn(np.asarray(p_x, dtype=float))[0])
    if grid is None:
        grid = GRID_1D if letter_t.exact else 101
    # polishing would call the T search hundreds of times; the grid envelope suffices
    return concave_envelope_eval(fn, p_x, grid=grid, vectorized=True, polish=letter_t.exact).value


def _product_seed_maps():
    """Products of the single-letter choices U = X or V = X, one per letter."""
    ux = np.array([[0], [1]])
    vx = np.array([[0, 1]])
    return [product_map(f1, f2, 2) for f1 in (ux, vx) for f2 in (ux, vx)]


def two_letter_T(ch1, ch2, p_x1x2, alpha: float, restarts: int = SCREEN_RESTARTS,
                 iters: int = SCREEN_ITERS, seed: int = 0) -> TmaxResult:
    prod = product_channel(ch1, ch2)
    return tmax_eval(prod, p_x1x2, alpha, restarts=restarts, iters=iters, seed=seed,
                     extra_maps=_product_seed_maps())


def _as_pair_law(p_x1x2) -> np.ndarray:
    p = as_joint(p_x1x2, "p_x1x2")
    if p.size != 4:
        raise SizeError("two binary letters required: p_x1x2 must have 4 entries")
    return p.reshape(2, 2)


def conj2_check(ch1: BroadcastChannel, ch2: BroadcastChannel, p_x1x2, weights: WeightedObjective, *,
                tol: float = SCREEN_TOL, restarts: int = SCREEN_RESTARTS, iters: int = SCREEN_ITERS,
                seed: int = 0, envelope_grid: int | None = None, t_joint: TmaxResult | None = None,
                use_envelope: bool = True, confirm: bool = True) -> ConjectureVerdict:
    """Two-letter weighted functional against the sum of single-letter envelopes.

    ``t_joint`` may pass in a precomputed two-letter T (it does not depend
    on lambda).  Candidates with slack < -tol are recomputed with 4x the
    restarts and grid density and kept only if the slack stays below
    -CONFIRM_TOL.
    """
    _binary_only(ch1, ch2)
    P = _as_pair_law(p_x1x2)
    w = weights
    prod = product_channel(ch1, ch2)
    p = P.ravel()
    if t_joint is None:
        t_joint = two_letter_T(ch1, ch2, p, w.alpha, restarts, iters, seed)
    lhs = float(-w.y_weight * _h_rows(p[None], prod.y_given_x)[0]
                - w.lam_bar * _h_rows(p[None], prod.z_given_x)[0] + t_joint.value)
    lt1, lt2 = LetterT(ch1, w.alpha, seed=seed), LetterT(ch2, w.alpha, seed=seed)
    rhs = (letter_envelope(ch1, P.sum(axis=1), w, lt1, grid=envelope_grid, use_envelope=use_envelope)
           + letter_envelope(ch2, P.sum(axis=0), w, lt2, grid=envelope_grid, use_envelope=use_envelope))
    slack = rhs - lhs
    instance = {
        "kind": "two_letter", "ch1": _channel_dict(ch1), "ch2": _channel_dict(ch2),
        "p_x1x2": p.tolist(), "alpha": w.alpha, "lambda": w.lam, "seed": seed,
        "restarts": restarts, "iters": iters, "envelope_grid": envelope_grid,
        "use_envelope": use_envelope,
    }
    verdict = "holds_within_tolerance"
    details = {"witness": t_joint.witness.to_dict()}
    if slack < -tol:
        verdict = "violation_candidate"
        if confirm:
            grid = 4 * (envelope_grid or (GRID_1D if w.alpha == 1.0 else 101))
            again = conj2_check(ch1, ch2, p, w, tol=tol, restarts=4 * restarts, iters=iters,
                                seed=seed, envelope_grid=grid, use_envelope=use_envelope,
                                confirm=False)
            details["confirm_slack"] = again.slack
            if again.slack >= -CONFIRM_TOL:
                verdict = "inconclusive"
    return ConjectureVerdict(lhs, rhs, slack, t_joint.is_lower_bound,
                             not (lt1.exact and lt2.exact), instance, verdict, details)


def conj1_check(ch1: BroadcastChannel, ch2: BroadcastChannel, p_x1x2, lam: float, **opts) -> ConjectureVerdict:
    """The unweighted (alpha = 1) case of conj2_check."""
    return conj2_check(ch1, ch2, p_x1x2, WeightedObjective(1.0, lam), **opts)


def recheck(instance: dict) -> ConjectureVerdict:
    """Re-run a stored two-letter instance descriptor (without confirmation)."""
    return conj2_check(_channel_from(instance["ch1"]), _channel_from(instance["ch2"]),
                       instance["p_x1x2"], WeightedObjective(instance["alpha"], instance["lambda"]),
                       restarts=instance["restarts"], iters=instance["iters"], seed=instance["seed"],
                       envelope_grid=instance["envelope_grid"],
                       use_envelope=instance["use_envelope"], confirm=False)


def conj3_check(ch: BroadcastChannel, lam: float, alpha: float, *, p_grid=None,
                tol: float = SCREEN_TOL, restarts: int = 32, seed: int = 0,
                envelope_grid: int = GRID_1D) -> ConjectureVerdict:
    """Single-letter weighted functional with T_alpha against the envelope built on max MI.

    Slacks are reported for every input law in ``p_grid`` (values of P(X=1)).
    """
    _binary_only(ch)
    w = WeightedObjective(alpha, lam)
    if p_grid is None:
        p_grid = np.linspace(0.05, 0.95, 19)

    def fn(q):
        q = np.atleast_2d(q)
        return (-w.y_weight * _h_rows(q, ch.y_given_x) - w.lam_bar * _h_rows(q, ch.z_given_x)
                + max_mi_rows(ch, alpha, q))

    points = []
    for t in p_grid:
        px = np.array([1.0 - t, t])
        tm = tmax_eval(ch, px, alpha, restarts=restarts, seed=seed)
        lhs = float(fn(px)[0] - max_mi_rows(ch, alpha, px[None])[0] + tm.value)
        rhs = concave_envelope_eval(fn, px, grid=envelope_grid, vectorized=True).value
        points.append({"p1": float(t), "lhs": lhs, "rhs": rhs, "slack": rhs - lhs,
                       "lhs_is_lower_bound": tm.is_lower_bound})
    worst = min(points, key=lambda r: r["slack"])
    verdict = "holds_within_tolerance"
    if worst["slack"] < -tol:
        px = np.array([1.0 - worst["p1"], worst["p1"]])
        tm = tmax_eval(ch, px, alpha, restarts=4 * restarts, seed=seed)
        lhs = float(fn(px)[0] - max_mi_rows(ch, alpha, px[None])[0] + tm.value)
        rhs = concave_envelope_eval(fn, px, grid=4 * envelope_grid, vectorized=True).value
        verdict = "violation_candidate" if rhs - lhs < -CONFIRM_TOL else "inconclusive"
    instance = {"kind": "single_letter", "ch": _channel_dict(ch), "alpha": alpha, "lambda": lam,
                "seed": seed, "restarts": restarts, "envelope_grid": envelope_grid}
    return ConjectureVerdict(worst["lhs"], worst["rhs"], worst["slack"],
                             any(r["lhs_is_lower_bound"] for r in points), False, instance,
                             verdict, {"per_point": points, "argmin_p1": worst["p1"]})


# --- the decomposition identity when X2 is a function of U ------------------------

# axis order of the joint used by claim1_identity_check
CLAIM_AXES = ("U", "V", "X2", "Y1", "Z1", "Y2", "Z2")


def claim1_identity_check(joint, alpha: float) -> float:
    """|alpha I(U;Y2|Y1) + I(V;Z2|U,Y1) - (alpha-1) I(Y1;Z2|U) - I(Y1;Z2|U,V) - alpha I(X2;Y2|Y1)|.

    ``joint`` has axes (U, V, X2, Y1, Z1, Y2, Z2); X2 must be a function of U.
    """
    t = as_joint(joint, "joint")
    if t.ndim != 7:
        raise InputError(f"expected axes {CLAIM_AXES}, got a {t.ndim}-axis table")
    pux = t.sum(axis=(1, 3, 4, 5, 6))
    if np.any((pux > 1e-15).sum(axis=1) > 1):
        raise InputError("X2 is not a deterministic function of U")
    U, V, X2, Y1, Z1, Y2, Z2 = range(7)
    cmi = conditional_mutual_information
    lhs = (alpha * cmi(t, [U], [Y2], [Y1]) + cmi(t, [V], [Z2], [U, Y1])
           - (alpha - 1) * cmi(t, [Y1], [Z2], [U]) - cmi(t, [Y1], [Z2], [U, V]))
    return abs(lhs - alpha * cmi(t, [X2], [Y2], [Y1]))


def claim1_instance(rng: np.random.Generator, u_size: int = 4, v_size: int = 2,
                    ch1: BroadcastChannel | None = None, ch2: BroadcastChannel | None = None):
    """Random joint over (U, V, X2, Y1, Z1, Y2, Z2) with X2 = g(U) and X1 ~ p(x1|u,v)."""
    ch1 = ch1 or random_channel(rng, 2)
    ch2 = ch2 or random_channel(rng, 2)
    p_uv = rng.dirichlet(np.ones(u_size * v_size)).reshape(u_size, v_size)
    g = rng.integers(0, 2, size=u_size)
    x1 = random_stochastic(rng, u_size * v_size, 2).reshape(u_size, v_size, 2)
    x2 = np.eye(2)[g]  # (u, x2)
    # (u, v, x1, x2) -> outputs; letter 1 noise and letter 2 noise are independent
    t = np.einsum("uv,uva,ub,ay,az,bs,bt->uvbyzst", p_uv, x1, x2,
                  ch1.y_given_x, ch1.z_given_x, ch2.y_given_x, ch2.z_given_x)
    return t


# --- randomized search ------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    seed: int = 0
    trials: int = 20
    conjecture: str = "conj1"  # conj1 | conj2
    lambdas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    alpha: float = 1.0
    tolerance: float = SCREEN_TOL
    restarts: int = SCREEN_RESTARTS
    workers: int = 1
    use_envelope: bool = True
    channel_family: str = "dirichlet"  # dirichlet: rows uniform on the output simplex, |Y|,|Z| in {2,3}
    # erasure_bsc: see erasure_bsc_channel


def erasure_bsc_channel(rng: np.random.Generator) -> BroadcastChannel:
    """Y an erasure of X, Z a BSC of X, with I(X;Y) slightly above I(X;Z) at uniform input.

    Strongly correlated inputs make the Z outputs more correlated than the Y
    outputs, so the per-letter functional without its envelope is too small.
    """
    e = rng.uniform(0.6, 0.75)
    # BSC flip d with binary entropy h(d) = e + 0.02
    target = (e + 0.02) * math.log(2)
    d = brentq(lambda t: -t * math.log(t) - (1 - t) * math.log1p(-t) - target, 1e-9, 0.5)
    return BroadcastChannel(erasure_wrap(np.eye(2), e), [[1 - d, d], [d, 1 - d]], name="erasure_bsc")


def _trial(cfg: SearchConfig, k: int) -> list:
    rng = np.random.default_rng([cfg.seed, k])
    if cfg.channel_family == "dirichlet":
        ch1, ch2 = random_channel(rng, 2), random_channel(rng, 2)
        p = rng.dirichlet(np.ones(4))
    elif cfg.channel_family == "erasure_bsc":
        ch1, ch2 = erasure_bsc_channel(rng), erasure_bsc_channel(rng)
        rho = rng.uniform(0.8, 1.0)
        p = (1.0 - rho) / 4 + rho * np.array([0.5, 0.0, 0.0, 0.5])
    else:
        raise InputError(f"unknown channel family {cfg.channel_family!r}")
    alpha = 1.0 if cfg.conjecture == "conj1" else cfg.alpha
    tj = two_letter_T(ch1, ch2, p, alpha, restarts=cfg.restarts, seed=k)
    out = []
    for lam in cfg.lambdas:
        v = conj2_check(ch1, ch2, p, WeightedObjective(alpha, lam), tol=cfg.tolerance,
                        restarts=cfg.restarts, seed=k, t_joint=tj, use_envelope=cfg.use_envelope)
        d = v.to_dict()
        d["trial"] = k
        out.append(d)
    return out


def random_search(cfg: SearchConfig) -> list:
    """Seeded search over random binary product channels; one record per (trial, lambda)."""
    if cfg.conjecture not in ("conj1", "conj2"):
        raise InputError(f"unknown conjecture {cfg.conjecture!r}")
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            chunks = list(ex.map(_trial, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        chunks = [_trial(cfg, k) for k in range(cfg.trials)]
    return [r for chunk in chunks for r in chunk]


def search_summary(records: list) -> dict:
    worst = min(records, key=lambda r: r["slack"]) if records else None
    return {
        "records": len(records),
        "violation_candidates": sum(r["verdict"] == "violation_candidate" for r in records),
        "inconclusive": sum(r["verdict"] == "inconclusive" for r in records),
        "min_slack": worst["slack"] if worst else math.nan,
        "argmin_trial": worst["trial"] if worst else None,
        "argmin_lambda": worst["instance"]["lambda"] if worst else None,
    }


def write_jsonl(records: list, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def write_summary_csv(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "lambda", "alpha", "lhs", "rhs", "slack", "verdict"])
        for r in records:
            w.writerow([r["trial"], r["instance"]["lambda"], r["instance"]["alpha"],
                        f"{r['lhs']:.9g}", f"{r['rhs']:.9g}", f"{r['slack']:.9g}", r["verdict"]])


# --- receiver ordering ------------------------------------------------------------

class MoreCapable(NamedTuple):
    more_capable: bool
    min_gap: float
    argmin: np.ndarray


def more_capable_test(ch: BroadcastChannel, grid_step: float = 0.01, tol: float = 1e-9) -> MoreCapable:
    """Is I(X;Y) >= I(X;Z) for every input law?  Grid scan plus a local polish."""
    if ch.x_size > 3:
        raise SizeError("more_capable_test supports at most 3 inputs")
    n = int(round(1.0 / grid_step))
    if ch.x_size == 2:
        t = np.linspace(0.0, 1.0, n + 1)
        pts = np.column_stack([1.0 - t, t])
    elif ch.x_size == 3:
        pts = simplex_grid(n)
    else:
        pts = np.ones((1, 1))

    def gap(q):
        return _mi_rows(q, ch.y_given_x) - _mi_rows(q, ch.z_given_x)

    vals = gap(pts)
    k = int(np.argmin(vals))
    best, arg = float(vals[k]), pts[k]
    if ch.x_size > 1:
        def obj(z):
            q = np.abs(np.append(z, 1.0))
            return float(gap((q / q.sum())[None])[0])

        z0 = np.maximum(arg[:-1], 1e-9) / max(arg[-1], 1e-9)
        r = minimize(obj, z0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15})
        if r.fun < best:
            q = np.abs(np.append(r.x, 1.0))
            best, arg = float(r.fun), q / q.sum()
    return MoreCapable(best >= -tol, best, arg)
