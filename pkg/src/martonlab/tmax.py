"""T_alpha(X) at a fixed input law.

The maximization over p(u,v|x) is carried out in the reduced form where X is a
deterministic function f(U,V) and |U|, |V| <= |X|.  For every admissible map
the coupling p(u,v) is optimized by multi-start projected gradient ascent on
the polytope {p(u,v) >= 0, sum over each fiber f^{-1}(x) equals p(x)}.

Everything here is a lower bound on T_alpha except the binary, alpha = 1 case,
where the search provably reaches max{I(X;Y), I(X;Z)}.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InfeasibleError, InputError, SizeError
from .probcore import LOG_ZERO, BroadcastChannel, as_joint, as_simplex

MAX_X = 4
MARGINAL_TOL = 1e-9
FLOOR = 1e-12
_LN2 = math.log(2.0)
# raw row-set candidates above this are not enumerated exhaustively
ENUM_CAP = 60_000


@dataclass(frozen=True, eq=False)
class CouplingWithMap:
    """A joint law p(u,v) together with a deterministic map x = f(u,v)."""

    p_uv: np.ndarray
    f: np.ndarray
    x_size: int

    def __post_init__(self):
        p = as_joint(self.p_uv, "p_uv")
        if p.ndim != 2:
            raise InputError(f"p_uv must be a matrix, got shape {p.shape}")
        f = np.asarray(self.f)
        if f.shape != p.shape:
            raise InputError(f"map shape {f.shape} does not match p_uv shape {p.shape}")
        if not np.issubdtype(f.dtype, np.integer):
            if not np.all(f == np.round(f)):
                raise InputError("map entries must be integers")
            f = f.astype(int)
        if f.min() < 0 or f.max() >= self.x_size:
            raise InputError(f"map values must lie in 0..{self.x_size - 1}")
        f = f.astype(int)
        p.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "p_uv", p)
        object.__setattr__(self, "f", f)

    @property
    def u_size(self) -> int:
        return self.p_uv.shape[0]

    @property
    def v_size(self) -> int:
        return self.p_uv.shape[1]

    def x_marginal(self) -> np.ndarray:
        return np.bincount(self.f.ravel(), weights=self.p_uv.ravel(), minlength=self.x_size)

    def to_dict(self) -> dict:
        return {"p_uv": self.p_uv.tolist(), "f": self.f.tolist(), "x_size": self.x_size}


def check_marginal(c: CouplingWithMap, p_x, tol: float = MARGINAL_TOL) -> np.ndarray:
    p_x = as_simplex(p_x, "p_x")
    if p_x.size != c.x_size:
        raise InputError(f"p_x has {p_x.size} entries, coupling has x_size {c.x_size}")
    gap = np.abs(c.x_marginal() - p_x).max()
    if gap > tol:
        raise InputError(f"coupling induces an X-marginal off by {gap:.3g} from p_x")
    return p_x


def _check_channel(c: CouplingWithMap, ch: BroadcastChannel):
    if ch.x_size != c.x_size:
        raise InputError(f"channel has {ch.x_size} inputs, coupling has x_size {c.x_size}")


# ---------------------------------------------------------------------------
# batched objective and gradient; P has shape (..., u, v), Wyf = Wy[f] has
# shape (..., u, v, |Y|) broadcastable against P


def _hsum(a: np.ndarray, axes) -> np.ndarray:
    # masses at or below LOG_ZERO become 1, contributing 1 log 1 = 0
    safe = np.where(a > LOG_ZERO, a, 1.0)
    return -(safe * np.log2(safe)).sum(axis=axes)


def _as4(P, Wyf, Wzf):
    """Lift to the (M, R, u, v) / (M, u, v, out) layout used by the kernels."""
    if P.ndim == 2:
        return P[None, None], Wyf[None], Wzf[None], True
    return P, Wyf, Wzf, False


def _induced4(P, Wyf, Wzf):
    puy = np.matmul(P.transpose(0, 2, 1, 3), Wyf).transpose(0, 2, 1, 3)
    pvz = np.matmul(P.transpose(0, 3, 1, 2), Wzf.transpose(0, 2, 1, 3)).transpose(0, 2, 1, 3)
    return puy, pvz


def induced(P, Wyf, Wzf):
    """Joint laws (p(u,y), p(v,z)) induced by P through the mapped channels."""
    P4, Wy4, Wz4, single = _as4(P, Wyf, Wzf)
    puy, pvz = _induced4(P4, Wy4, Wz4)
    return (puy[0, 0], pvz[0, 0]) if single else (puy, pvz)


def _value4(P4, puy, pvz, alpha):
    pu = P4.sum(-1)
    pv = P4.sum(-2)
    hu, hv = _hsum(pu, -1), _hsum(pv, -1)
    hy, hz = _hsum(puy.sum(-2), -1), _hsum(pvz.sum(-2), -1)
    i_uy = hu + hy - _hsum(puy, (-2, -1))
    i_vz = hv + hz - _hsum(pvz, (-2, -1))
    i_uv = hu + hv - _hsum(P4, (-2, -1))
    return alpha * i_uy + i_vz - i_uv


def _grad4(P4, puy, pvz, Wy4, Wz4, alpha, floor):
    M, R, u, v = P4.shape
    c = 1.0 / _LN2

    def lg(a):
        return np.log2(np.maximum(a, floor)) + c

    wy_flat = Wy4.reshape(M, u * v, -1).transpose(0, 2, 1)
    wz_flat = Wz4.reshape(M, u * v, -1).transpose(0, 2, 1)
    d_hu = -lg(P4.sum(-1))[..., :, None]
    d_hy = -np.matmul(lg(puy.sum(-2)), wy_flat).reshape(M, R, u, v)
    d_hz = -np.matmul(lg(pvz.sum(-2)), wz_flat).reshape(M, R, u, v)
    d_huy = -np.matmul(lg(puy).transpose(0, 2, 1, 3), Wy4.transpose(0, 1, 3, 2)).transpose(0, 2, 1, 3)
    d_hvz = -np.matmul(lg(pvz).transpose(0, 2, 1, 3),
                       Wz4.transpose(0, 2, 3, 1)).transpose(0, 2, 3, 1)
    d_huv = -lg(P4)
    return (alpha - 1.0) * d_hu + alpha * (d_hy - d_huy) + d_hz - d_hvz + d_huv


def objective_batch(P, Wyf, Wzf, alpha: float) -> np.ndarray:
    """Objective for P of shape (u, v) or (M, R, u, v) with per-map Wy[f], Wz[f]."""
    P4, Wy4, Wz4, single = _as4(P, Wyf, Wzf)
    out = _value4(P4, *_induced4(P4, Wy4, Wz4), alpha)
    return out[0, 0] if single else out


def gradient_batch(P, Wyf, Wzf, alpha: float, floor: float = FLOOR) -> np.ndarray:
    """Partial derivatives of the objective in every entry of P (bits).

    Entropies are taken as -sum m log m of the raw masses, so the result is
    the gradient of the natural extension of the objective off the simplex.
    Masses are floored at ``floor`` inside the logarithms.
    """
    P4, Wy4, Wz4, single = _as4(P, Wyf, Wzf)
    out = _grad4(P4, *_induced4(P4, Wy4, Wz4), Wy4, Wz4, alpha, floor)
    return out[0, 0] if single else out


def value_and_gradient(P4, Wy4, Wz4, alpha: float, floor: float = FLOOR):
    puy, pvz = _induced4(P4, Wy4, Wz4)
    return _value4(P4, puy, pvz, alpha), _grad4(P4, puy, pvz, Wy4, Wz4, alpha, floor)


def _mapped(ch: BroadcastChannel, f: np.ndarray):
    return ch.y_given_x[f], ch.z_given_x[f]


def objective_J(c: CouplingWithMap, ch: BroadcastChannel, p_x, alpha: float = 1.0) -> float:
    """alpha I(U;Y) + I(V;Z) - I(U;V) for the coupling pushed through the channel."""
    _check_channel(c, ch)
    check_marginal(c, p_x)
    return float(objective_batch(c.p_uv, *_mapped(ch, c.f), alpha))


def gradient_J(c: CouplingWithMap, ch: BroadcastChannel, p_x, alpha: float = 1.0) -> np.ndarray:
    """dJ/dp(u,v); entries where p(u,v) = 0 are NaN (only the support is reported)."""
    _check_channel(c, ch)
    check_marginal(c, p_x)
    g = gradient_batch(c.p_uv, *_mapped(ch, c.f), alpha)
    return np.where(c.p_uv > 0, g, np.nan)


# ---------------------------------------------------------------------------
# map enumeration


def has_and_pattern(f: np.ndarray) -> bool:
    f = np.asarray(f)
    const_rows = {int(r[0]) for r in f if np.all(r == r[0])}
    const_cols = {int(col[0]) for col in f.T if np.all(col == col[0])}
    return bool(const_rows & const_cols)


def _canonical_rows(rows: tuple) -> tuple:
    return tuple(sorted(rows))


@lru_cache(maxsize=None)
def _maps_of_shape(a: int, b: int, x: int) -> tuple:
    """Reduced a-by-b maps: distinct rows, distinct columns, one per relabeling class."""
    alphabet = list(itertools.product(range(x), repeat=b))
    if math.comb(len(alphabet), a) > ENUM_CAP:
        raise SizeError(f"too many {a}x{b} maps into {x} symbols to enumerate")
    perms = list(itertools.permutations(range(b)))[1:]
    out = []
    for rows in itertools.combinations(alphabet, a):
        if len(set(zip(*rows))) < b:
            continue
        if any(_canonical_rows(tuple(tuple(r[p] for p in perm) for r in rows)) < rows
               for perm in perms):
            continue
        out.append(np.array(rows, dtype=int))
    return tuple(out)


def enumerate_maps(u_size: int, v_size: int, x_size: int, *, exclude_and: bool = False) -> list:
    """All reduced maps with up to u_size rows and v_size columns.

    Rows are pairwise distinct, columns are pairwise distinct, and maps are
    listed once per class under relabeling of U and of V (X labels are fixed).
    With ``exclude_and`` maps containing a constant row and a constant column
    on the same symbol are dropped.
    """
    if x_size > MAX_X:
        raise SizeError(f"input alphabets above {MAX_X} symbols are not supported")
    if not (1 <= u_size <= x_size and 1 <= v_size <= x_size):
        raise SizeError(f"need 1 <= u_size, v_size <= x_size, got ({u_size}, {v_size}, {x_size})")
    out = []
    for a in range(1, u_size + 1):
        for b in range(1, v_size + 1):
            for f in _maps_of_shape(a, b, x_size):
                if exclude_and and has_and_pattern(f):
                    continue
                out.append(f)
    return out


def _is_reduced(f: np.ndarray) -> bool:
    return (len({tuple(r) for r in f}) == f.shape[0]
            and len({tuple(col) for col in f.T}) == f.shape[1])


def _canonical(f: np.ndarray) -> tuple:
    best = None
    for perm in itertools.permutations(range(f.shape[1])):
        key = (f.shape, _canonical_rows(tuple(tuple(r) for r in f[:, perm])))
        if best is None or key < best:
            best = key
    return best


# ---------------------------------------------------------------------------
# projected gradient ascent


def _fiber_layout(f: np.ndarray, x_size: int):
    fid = f.ravel()
    return fid, np.bincount(fid, minlength=x_size)


class _FiberLayout:
    """Per-map bookkeeping for projecting onto the fiber-marginal polytope."""

    def __init__(self, fid: np.ndarray, p_x: np.ndarray):
        M, n = fid.shape
        X = p_x.size
        self.fid = fid
        self.fs = np.sort(fid, axis=-1)
        counts = np.stack([np.bincount(row, minlength=X) for row in fid])
        self.start = np.cumsum(counts, axis=-1) - counts
        self.pos = np.arange(n)[None, :] - np.take_along_axis(self.start, self.fs, axis=-1)
        self.seg_start = np.take_along_axis(self.start, self.fs, axis=-1)
        self.onehot = (self.fs[:, :, None] == np.arange(X)).astype(float)
        self.target = p_x[self.fs]


def _project_fibers(Z: np.ndarray, lay: _FiberLayout) -> np.ndarray:
    """Euclidean projection of each fiber block of Z onto {z >= 0, sum z = p(x)}.

    Z has shape (M, R, n).  Cells are sorted by (fiber, descending value) in a
    single float sort; the usual sorted-threshold rule is then applied per
    fiber segment.
    """
    M, R, n = Z.shape
    span = float(Z.max() - Z.min()) + 1.0
    key = lay.fid[:, None, :] * span - Z
    s = lay.fs[:, None, :] * span - np.sort(key, axis=-1)
    cs_all = np.cumsum(s, axis=-1)
    base = np.take_along_axis(cs_all - s, np.broadcast_to(lay.seg_start[:, None, :], (M, R, n)), axis=-1)
    tau_k = (cs_all - base - lay.target[:, None, :]) / (lay.pos[:, None, :] + 1)
    cond = (s - tau_k > 0).astype(float)
    cnt = np.matmul(cond, lay.onehot)
    idx = np.maximum(lay.start[:, None, :] + cnt.astype(int) - 1, 0)
    tau = np.take_along_axis(tau_k, idx, axis=-1)
    tau = np.where(cnt > 0, tau, np.inf)
    tau_cell = np.take_along_axis(tau, np.broadcast_to(lay.fid[:, None, :], (M, R, n)), axis=-1)
    return np.maximum(Z - tau_cell, 0.0)


def _initial_points(rng: np.random.Generator, fid: np.ndarray, p_x: np.ndarray, restarts: int):
    n = fid.size
    out = np.zeros((restarts, n))
    for x in range(p_x.size):
        cells = np.flatnonzero(fid == x)
        if cells.size == 0:
            continue
        w = np.empty((restarts, cells.size))
        w[0] = 1.0 / cells.size
        if restarts > 1:
            w[1:] = rng.dirichlet(np.ones(cells.size), size=restarts - 1)
        out[:, cells] = p_x[x] * w
    return out


def _ascend(P0, fid, Wyf, Wzf, p_x, alpha, iters, eta0):
    """Run ascent on a batch P0 of shape (M, R, u, v); return best values and points."""
    M, R, u, v = P0.shape
    lay = _FiberLayout(fid, p_x)
    P = P0.copy()
    best_val = np.full((M, R), -np.inf)
    best_P = P.copy()
    for k in range(iters + 1):
        val, g = value_and_gradient(P, Wyf, Wzf, alpha)
        better = val > best_val
        if np.any(better):
            best_val = np.where(better, val, best_val)
            best_P[better] = P[better]
        if k == iters:
            break
        Z = (P + eta0 / math.sqrt(k + 1.0) * g).reshape(M, R, u * v)
        P = _project_fibers(Z, lay).reshape(M, R, u, v)
    return best_val, best_P


def _run_maps(maps, ch, p_x, alpha, restarts, iters, seed, eta0, starts=None, offset=0):
    """Ascent for a list of maps; returns [(value, p_uv)] in map order.

    Maps are grouped by shape and each group is advanced as one batch.
    Seeds are derived from (seed, global map index), so results do not
    depend on the grouping.
    """
    results = [None] * len(maps)
    groups: dict = {}
    for i, f in enumerate(maps):
        groups.setdefault(f.shape, []).append(i)
    for shape, idx in groups.items():
        fs = np.stack([maps[i] for i in idx])
        fid = fs.reshape(len(idx), -1)
        P0 = np.stack([
            _initial_points(np.random.default_rng([seed, offset + i]), fid[j], p_x, restarts)
            for j, i in enumerate(idx)
        ]).reshape(len(idx), restarts, *shape)
        if starts is not None:
            for j, i in enumerate(idx):
                if starts[i] is not None:
                    P0[j, 0] = starts[i]
        vals, Ps = _ascend(P0, fid, ch.y_given_x[fs], ch.z_given_x[fs], p_x, alpha, iters, eta0)
        for j, i in enumerate(idx):
            r = int(np.argmax(vals[j]))
            results[i] = (float(vals[j, r]), Ps[j, r].copy())
    return results


def _admissible(f: np.ndarray, p_x: np.ndarray) -> bool:
    used = set(np.unique(f).tolist())
    support = set(np.flatnonzero(p_x > 0).tolist())
    return used == support


def inner_ascent(f, ch: BroadcastChannel, p_x, alpha: float = 1.0, restarts: int = 32,
                 seed: int = 0, iters: int = 200, eta0: float = 0.05, init=None):
    """Best (value, p_uv) found for the fixed map ``f``.

    ``init`` optionally replaces the first start; the returned value never
    falls below the objective at any start because the best iterate is kept.
    """
    p_x = as_simplex(p_x, "p_x")
    f = np.asarray(f, dtype=int)
    if ch.x_size != p_x.size:
        raise InputError("channel and p_x disagree on the input alphabet")
    counts = np.bincount(f.ravel(), minlength=p_x.size)
    if f.max() >= p_x.size:
        raise InputError("map uses symbols outside the input alphabet")
    empty = np.flatnonzero((counts == 0) & (p_x > 0))
    if empty.size:
        raise InfeasibleError(f"symbols {empty.tolist()} have positive mass but an empty fiber")
    starts = None
    if init is not None:
        start = np.asarray(init, dtype=float)
        CouplingWithMap(start, f, p_x.size)  # validation only
        starts = [start]
    (value, p_uv), = _run_maps([f], ch, p_x, alpha, restarts, iters, seed, eta0, starts)
    return value, p_uv


# ---------------------------------------------------------------------------
# T_alpha evaluation


@dataclass(frozen=True, eq=False)
class TmaxResult:
    value: float
    witness: CouplingWithMap
    alpha: float
    per_map_values: list = field(default_factory=list)
    is_lower_bound: bool = True
    outside_regime: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "alpha": self.alpha,
            "is_lower_bound": self.is_lower_bound,
            "outside_regime": self.outside_regime,
            "witness": self.witness.to_dict(),
            "per_map_values": [{"map": m, "value": v} for m, v in self.per_map_values],
        }


def _degenerate_maps(support: np.ndarray):
    col = support.reshape(-1, 1)
    return [col, col.T.copy()]


def _sampled_maps(rng: np.random.Generator, support: np.ndarray, x_size: int, n_samples: int,
                  exclude_and: bool, product_maps=()):
    """Map pool for alphabets too large to enumerate."""
    k = support.size
    pool, seen = [], set()

    def add(f):
        f = np.asarray(f, dtype=int)
        if not _is_reduced(f) or set(np.unique(f).tolist()) != set(support.tolist()):
            return
        if exclude_and and has_and_pattern(f):
            return
        key = _canonical(f)
        if key not in seen:
            seen.add(key)
            pool.append(f)

    for f in _degenerate_maps(support):
        add(f)
    for f in product_maps:
        add(f)
    for a in range(1, k + 1):
        for b in range(1, k + 1):
            if math.comb(k ** b, a) > 5_000:
                continue
            for g in _maps_of_shape(a, b, k):
                add(support[g])
    tries = 0
    while n_samples > 0 and tries < 200 * n_samples:
        tries += 1
        a, b = int(rng.integers(2, k + 1)), int(rng.integers(2, k + 1))
        before = len(pool)
        add(support[rng.integers(0, k, size=(a, b))])
        n_samples -= len(pool) - before
    return pool


def product_map(f1: np.ndarray, f2: np.ndarray, x2_size: int) -> np.ndarray:
    """Map on (U1,U2) x (V1,V2) -> (X1,X2) built from two per-letter maps."""
    a1, b1 = f1.shape
    a2, b2 = f2.shape
    out = np.empty((a1 * a2, b1 * b2), dtype=int)
    for u1, u2, v1, v2 in itertools.product(range(a1), range(a2), range(b1), range(b2)):
        out[u1 * a2 + u2, v1 * b2 + v2] = f1[u1, v1] * x2_size + f2[u2, v2]
    return out


def _local_moves(f: np.ndarray, support: np.ndarray, exclude_and: bool):
    out = []
    for idx in itertools.product(range(f.shape[0]), range(f.shape[1])):
        for s in support:
            if s == f[idx]:
                continue
            g = f.copy()
            g[idx] = s
            if (_is_reduced(g) and set(np.unique(g).tolist()) == set(support.tolist())
                    and not (exclude_and and has_and_pattern(g))):
                out.append(g)
    return out


def tmax_eval(ch: BroadcastChannel, p_x, alpha: float = 1.0, *, restarts: int = 32,
              iters: int = 200, seed: int = 0, eta0: float = 0.05, exclude_and: bool | None = None,
              samples: int = 48, local_rounds: int = 2, extra_maps=()) -> TmaxResult:
    """Maximize alpha I(U;Y) + I(V;Z) - I(U;V) over reduced couplings at p_x.

    Input alphabets of up to three symbols (in the support of p_x) are
    enumerated exhaustively.  For four symbols the map pool is the degenerate
    choices, every small shape, ``samples`` random reduced maps and
    ``local_rounds`` rounds of single-entry moves around the best maps.
    ``extra_maps`` (e.g. products of single-letter maps) join that pool.
    """
    p_x = as_simplex(p_x, "p_x")
    if ch.x_size != p_x.size:
        raise InputError(f"channel has {ch.x_size} inputs, p_x has {p_x.size}")
    if ch.x_size > MAX_X:
        raise SizeError(f"input alphabets above {MAX_X} symbols are not supported")
    support = np.flatnonzero(p_x > 0)
    k = support.size
    if exclude_and is None:
        exclude_and = alpha == 1.0 and ch.is_dense()

    if k == 1:
        f = support.reshape(1, 1)
        w = CouplingWithMap(np.ones((1, 1)), f, ch.x_size)
        return TmaxResult(0.0, w, alpha, [(f.tolist(), 0.0)], is_lower_bound=False,
                          outside_regime=alpha < 1)

    rng = np.random.default_rng([seed, 7919])
    if k <= 3:
        maps = [support[g] for g in enumerate_maps(k, k, k, exclude_and=exclude_and)]
        maps = [f for f in maps if _admissible(f, p_x)]
    else:
        maps = _sampled_maps(rng, support, ch.x_size, samples, exclude_and, extra_maps)
    results = _run_maps(maps, ch, p_x, alpha, restarts, iters, seed, eta0)

    if k > 3 and local_rounds > 0:
        seen = {_canonical(f) for f in maps}
        offset = len(maps)
        for _ in range(local_rounds):
            order = np.argsort([-r[0] for r in results], kind="stable")[:3]
            cand = []
            for i in order:
                for g in _local_moves(maps[i], support, exclude_and):
                    key = _canonical(g)
                    if key not in seen:
                        seen.add(key)
                        cand.append(g)
            if not cand:
                break
            new = _run_maps(cand, ch, p_x, alpha, max(4, restarts // 4), iters, seed, eta0,
                            offset=offset)
            offset += len(cand)
            maps += cand
            results += new

    best = max(range(len(maps)), key=lambda i: (results[i][0], -i))
    value, p_uv = results[best]
    witness = CouplingWithMap(p_uv / p_uv.sum(), maps[best], ch.x_size)
    exact = k == 2 and alpha == 1.0
    return TmaxResult(
        value=float(objective_batch(witness.p_uv, *_mapped(ch, witness.f), alpha)),
        witness=witness,
        alpha=alpha,
        per_map_values=[(f.tolist(), r[0]) for f, r in zip(maps, results)],
        is_lower_bound=not exact,
        outside_regime=alpha < 1,
    )


def degenerate_floor(ch: BroadcastChannel, p_x, alpha: float = 1.0) -> float:
    """max{alpha I(X;Y), I(X;Z)}: the value of the choices U = X or V = X."""
    iy, iz = ch.mi_pair(p_x)
    return max(alpha * iy, iz)


# ---------------------------------------------------------------------------
# brute-force grid oracle


def _compositions(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]])
    bars = np.array(list(itertools.combinations(range(total + parts - 1), parts - 1)))
    padded = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), total + parts - 1)])
    return np.diff(padded, axis=1) - 1


def brute_oracle(ch: BroadcastChannel, p_x, alpha: float = 1.0, grid_resolution: float = 0.01,
                 max_points: int = 4_000_000) -> float:
    """Exhaustive grid search over every raw map with |U||V| <= 4.

    Each fiber's mass p(x) is split on the lattice with spacing
    grid_resolution * p(x).  The result is a lower bound on T_alpha that
    tightens as the resolution shrinks.
    """
    if grid_resolution > 0.01:
        raise InputError("grid_resolution must be at most 1/100")
    p_x = as_simplex(p_x, "p_x")
    if ch.x_size != p_x.size:
        raise InputError("channel and p_x disagree on the input alphabet")
    X = p_x.size
    if X > MAX_X:
        raise SizeError(f"input alphabets above {MAX_X} symbols are not supported")
    N = int(round(1.0 / grid_resolution))
    best = -np.inf
    shapes = [(a, b) for a in range(1, X + 1) for b in range(1, X + 1) if a * b <= 4]
    for a, b in shapes:
        for flat in itertools.product(range(X), repeat=a * b):
            f = np.array(flat).reshape(a, b)
            counts = np.bincount(f.ravel(), minlength=X)
            if np.any((counts == 0) & (p_x > 0)):
                continue
            blocks = []
            for x in range(X):
                if counts[x]:
                    blocks.append((np.flatnonzero(f.ravel() == x), _compositions(N, counts[x]) / N * p_x[x]))
            sizes = [len(bk[1]) for bk in blocks]
            if math.prod(sizes) > max_points:
                raise SizeError("oracle grid too large; use a coarser resolution")
            grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
            P = np.zeros((math.prod(sizes), a * b))
            for (cells, comp), gi in zip(blocks, grids):
                P[:, cells] = comp[gi.ravel()]
            P = P.reshape(-1, a, b)
            best = max(best, float(_oracle_objective(P, ch, f, alpha).max()))
    return best


def _oracle_objective(P, ch, f, alpha):
    # direct joint-table evaluation: p(u,v,y) and p(u,v,z), then marginals
    puvy = P[..., None] * ch.y_given_x[f][None]
    puvz = P[..., None] * ch.z_given_x[f][None]

    def H(t, axes):
        t = t.sum(axis=axes) if axes else t
        return _hsum(t.reshape(t.shape[0], -1), -1)

    i_uy = H(puvy, (2, 3)) + H(puvy, (1, 2)) - H(puvy, (2,))
    i_vz = H(puvz, (1, 3)) + H(puvz, (1, 2)) - H(puvz, (1,))
    i_uv = H(P, (2,)) + H(P, (1,)) - H(P, ())
    return alpha * i_uy + i_vz - i_uv
