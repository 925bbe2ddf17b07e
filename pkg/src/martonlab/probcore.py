"""Distributions, channels and information measures (all in bits).

Probability vectors, stochastic matrices and joint tables are plain numpy
arrays; the ``as_*`` helpers validate them and absorb small normalization
noise (e.g. from a JSON round trip) while rejecting anything further off.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError

SIMPLEX_TOL = 1e-12
RENORM_TOL = 1e-9
# entries below this are exact zeros in p*log(p) terms
LOG_ZERO = 1e-15
MI_CLAMP = 1e-12


def as_simplex(p, name: str = "p") -> np.ndarray:
    """Validate a probability vector and return a float copy summing to 1."""
    arr = np.array(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    return _normalized(arr, name)


def as_joint(t, name: str = "joint") -> np.ndarray:
    """Validate a multi-axis joint table (non-negative, total mass 1)."""
    arr = np.array(t, dtype=float)
    if arr.size == 0:
        raise InputError(f"{name} is empty")
    return _normalized(arr, name)


def as_stochastic(m, name: str = "channel") -> np.ndarray:
    """Validate a row-stochastic matrix; each row is renormalized like a simplex."""
    arr = np.array(m, dtype=float)
    if arr.ndim != 2 or 0 in arr.shape:
        raise InputError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InputError(f"{name} has negative or non-finite entries")
    sums = arr.sum(axis=1)
    bad = np.abs(sums - 1.0) > RENORM_TOL
    if np.any(bad):
        row = int(np.argmax(bad))
        raise InputError(f"{name} row {row} sums to {sums[row]!r}, not 1")
    return arr / sums[:, None]


def _normalized(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise InputError(f"{name} has negative entries")
    total = arr.sum()
    if abs(total - 1.0) > RENORM_TOL:
        raise InputError(f"{name} sums to {total!r}, not 1")
    return arr / total


def _h(p: np.ndarray) -> float:
    """Entropy in bits of a (possibly unnormalized) mass array, 0 log 0 = 0."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > LOG_ZERO]
    return float(-(p * np.log2(p)).sum())


def entropy(p) -> float:
    """Shannon entropy of a probability vector, in bits."""
    return _h(as_simplex(p))


def _marginal(joint: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    drop = tuple(ax for ax in range(joint.ndim) if ax not in keep)
    return joint.sum(axis=drop)


def mutual_information(joint) -> float:
    """I(A;B) of a two-axis joint table."""
    t = as_joint(joint)
    if t.ndim != 2:
        raise InputError(f"mutual_information needs a 2-axis table, got {t.ndim} axes")
    return _mi2(t)


def _mi2(t: np.ndarray) -> float:
    mi = _h(t.sum(axis=1)) + _h(t.sum(axis=0)) - _h(t)
    return max(mi, 0.0) if mi >= -MI_CLAMP else mi


def conditional_mutual_information(joint, a_axes, b_axes, c_axes=()) -> float:
    """I(A;B|C) where A, B, C are disjoint groups of table axes.

    Axes not named in any group are marginalized out first.
    """
    t = as_joint(joint)
    a, b, c = (tuple(int(i) for i in np.atleast_1d(g)) for g in (a_axes, b_axes, c_axes))
    named = a + b + c
    if not a or not b:
        raise InputError("a_axes and b_axes must be non-empty")
    if len(set(named)) != len(named):
        raise InputError(f"axis groups overlap: {a} {b} {c}")
    if any(ax < 0 or ax >= t.ndim for ax in named):
        raise InputError(f"axis out of range for a {t.ndim}-axis table")
    value = (_h(_marginal(t, a + c)) + _h(_marginal(t, b + c))
             - _h(_marginal(t, a + b + c)) - _h(_marginal(t, c)))
    return max(value, 0.0) if value >= -MI_CLAMP else value


def push_forward(p, chan) -> np.ndarray:
    """Output law of ``chan`` when its input is distributed as ``p``."""
    p = as_simplex(p)
    w = as_stochastic(chan)
    if w.shape[0] != p.size:
        raise InputError(f"vector of length {p.size} does not match channel with {w.shape[0]} rows")
    return p @ w


def io_joint(p, chan) -> np.ndarray:
    """Joint table p(x) chan(y|x) with axes (x, y)."""
    p = as_simplex(p)
    w = as_stochastic(chan)
    if w.shape[0] != p.size:
        raise InputError(f"vector of length {p.size} does not match channel with {w.shape[0]} rows")
    return p[:, None] * w


def io_mutual_information(p, chan) -> float:
    """I(X;Y) for input law ``p`` through ``chan``."""
    return _mi2(io_joint(p, chan))


def erasure_wrap(chan, eps: float) -> np.ndarray:
    """Append an erasure symbol hit with probability ``eps`` from every input."""
    if not 0.0 <= eps <= 1.0:
        raise InputError(f"erasure probability must lie in [0, 1], got {eps}")
    w = as_stochastic(chan)
    return np.hstack([(1.0 - eps) * w, np.full((w.shape[0], 1), eps)])


@dataclass(frozen=True, eq=False)
class BroadcastChannel:
    """Pair of component channels q(y|x), q(z|x) sharing the input alphabet."""

    y_given_x: np.ndarray
    z_given_x: np.ndarray
    name: str = field(default="")

    def __post_init__(self):
        wy = as_stochastic(self.y_given_x, "y_given_x")
        wz = as_stochastic(self.z_given_x, "z_given_x")
        if wy.shape[0] != wz.shape[0]:
            raise InputError(f"component channels disagree on input size: {wy.shape[0]} vs {wz.shape[0]}")
        wy.flags.writeable = False
        wz.flags.writeable = False
        object.__setattr__(self, "y_given_x", wy)
        object.__setattr__(self, "z_given_x", wz)

    @property
    def x_size(self) -> int:
        return self.y_given_x.shape[0]

    @property
    def y_size(self) -> int:
        return self.y_given_x.shape[1]

    @property
    def z_size(self) -> int:
        return self.z_given_x.shape[1]

    def is_dense(self, threshold: float = 0.0) -> bool:
        """True when every transition probability exceeds ``threshold``."""
        return bool(np.all(self.y_given_x > threshold) and np.all(self.z_given_x > threshold))

    def swapped(self) -> "BroadcastChannel":
        return BroadcastChannel(self.z_given_x, self.y_given_x, self.name + "~swap" if self.name else "")

    def mi_pair(self, p) -> tuple[float, float]:
        """(I(X;Y), I(X;Z)) at input law ``p``."""
        return io_mutual_information(p, self.y_given_x), io_mutual_information(p, self.z_given_x)

    def to_dict(self, px=None) -> dict:
        out = {
            "x_size": self.x_size,
            "y_given_x": self.y_given_x.tolist(),
            "z_given_x": self.z_given_x.tolist(),
        }
        if px is not None:
            out["px"] = as_simplex(px).tolist()
        return out


def product_channel(ch1: BroadcastChannel, ch2: BroadcastChannel) -> BroadcastChannel:
    """Two parallel uses; input (x1, x2) and outputs are indexed row-major."""
    return BroadcastChannel(
        np.kron(ch1.y_given_x, ch2.y_given_x),
        np.kron(ch1.z_given_x, ch2.z_given_x),
        name=f"{ch1.name or 'ch'}x{ch2.name or 'ch'}",
    )


def bssc(skew: float = 0.5) -> BroadcastChannel:
    """Binary skew-symmetric channel: input 0 is noisy towards Y, input 1 towards Z."""
    if not 0.0 <= skew <= 1.0:
        raise InputError(f"skew must lie in [0, 1], got {skew}")
    wy = [[1.0 - skew, skew], [0.0, 1.0]]
    wz = [[1.0, 0.0], [skew, 1.0 - skew]]
    return BroadcastChannel(wy, wz, name="bssc" if skew == 0.5 else f"bssc({skew})")


def blackwell() -> BroadcastChannel:
    # 0 -> (0,0), 1 -> (0,1), 2 -> (1,1)
    wy = [[1, 0], [1, 0], [0, 1]]
    wz = [[1, 0], [0, 1], [0, 1]]
    return BroadcastChannel(wy, wz, name="blackwell")


APPENDIX_B_PX = (0.8, 0.2)
# published witness for appendix_b: coupling p(u,v) and map x = f(u,v)
APPENDIX_B_P_UV = ((0.05930, 0.00005), (0.14065, 0.80000))
APPENDIX_B_MAP = ((1, 1), (1, 0))


def appendix_b() -> BroadcastChannel:
    return BroadcastChannel([[0.5, 0.5], [0.0, 1.0]], [[1.0, 0.0], [0.1, 0.9]], name="appendix_b")


BUILTINS = ("bssc_half", "blackwell", "appendix_b")


def builtin_channel(name: str) -> tuple[BroadcastChannel, np.ndarray | None]:
    """Named fixture channel plus its default input law (or None)."""
    if name == "bssc_half":
        return bssc(0.5), None
    if name == "blackwell":
        return blackwell(), None
    if name == "appendix_b":
        return appendix_b(), np.array(APPENDIX_B_PX)
    raise InputError(f"unknown builtin channel {name!r}; choose from {', '.join(BUILTINS)}")


def channel_from_dict(data: dict) -> tuple[BroadcastChannel, np.ndarray | None]:
    try:
        wy, wz = data["y_given_x"], data["z_given_x"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"channel description lacks field {exc}") from None
    ch = BroadcastChannel(wy, wz)
    if "x_size" in data and int(data["x_size"]) != ch.x_size:
        raise InputError(f"x_size {data['x_size']} does not match matrices with {ch.x_size} rows")
    px = data.get("px")
    if px is not None:
        px = as_simplex(px, "px")
        if px.size != ch.x_size:
            raise InputError(f"px has length {px.size}, channel has {ch.x_size} inputs")
    return ch, px


def load_channel(path) -> tuple[BroadcastChannel, np.ndarray | None]:
    """Read the channel JSON format; malformed JSON raises InputError with the line number."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return channel_from_dict(data)


def random_stochastic(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Rows drawn uniformly (Dirichlet(1)) from the output simplex."""
    return rng.dirichlet(np.ones(cols), size=rows)


def random_channel(rng: np.random.Generator, x_size: int = 2, y_size: int | None = None,
                   z_size: int | None = None) -> BroadcastChannel:
    y_size = y_size if y_size is not None else int(rng.integers(2, 4))
    z_size = z_size if z_size is not None else int(rng.integers(2, 4))
    return BroadcastChannel(random_stochastic(rng, x_size, y_size),
                            random_stochastic(rng, x_size, z_size))
